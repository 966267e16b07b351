"""Level-set diagnostics of a computed solution.

For each level ``t`` of a uniform grid in ``(0.05 M, 0.95 M)`` we record

* ``mu(t) = w({u > t})`` and ``I(t) = ∫_{u>t} f(u) w``,
* ``K(t) = I^{p'} mu^{(p-D)/(D(p-1))}``,
* the surface integrals ``∮ w/|∇u|`` and ``∮ H(∇u)^{p-1} H(ν) w`` over ``{u = t}``,
* the anisotropic perimeter of the level curve and its quotient ``Q(t)``,
* the coefficient of variation of ``H(∇u)`` along the curve,
* the Wulff ball best fitting the curve.

Surface integrals use the constant P1 gradient of the triangle holding each
segment, so ``|∇u|`` and ``H(∇u)`` are exact for the discrete field.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .cones import ConeSpec, effective_dimension
from .finsler import eval_norm
from .isoperimetry import characterize_minimizer, fast_dual, optimal_constant
from .levelsets import extract_level_set, superlevel_integral, triangle_integrals
from .mesh import GAMMA0
from .solver import ProblemSpec, Solution, STEP

_GL2 = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]), np.array([0.5, 0.5]))
_GL3 = (np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)]),
        np.array([5.0, 8.0, 5.0]) / 18.0)

TABLE_HEADER = ["t", "mu", "I", "K", "Q", "grad_cv", "center_x", "center_y", "rho"]


class DiagnosticsError(ValueError):
    pass


def _threads() -> int:
    raw = os.environ.get("WULFF_LAB_THREADS", "")
    if raw.strip():
        try:
            return max(1, int(raw))
        except ValueError:
            raise DiagnosticsError(f"WULFF_LAB_THREADS must be an integer, got {raw!r}")
    return min(4, os.cpu_count() or 1)


@dataclass
class LevelTable:
    p: float
    D: float
    h: float
    t: np.ndarray
    mu: np.ndarray
    I: np.ndarray
    K: np.ndarray
    inv_grad: np.ndarray       # ∮ w / |∇u|
    flux: np.ndarray           # ∮ H(∇u)^{p-1} H(ν) w
    perimeter: np.ndarray      # ∮ H(ν) w
    Q: np.ndarray
    grad_cv: np.ndarray
    center: np.ndarray         # (n, 2), constrained to the cone's line factor
    rho: np.ndarray
    fit_rms: np.ndarray        # RMS of H0(x - center) - rho over the curve, relative to rho
    center_free: np.ndarray    # (n, 2), unconstrained Wulff fit
    components: np.ndarray
    M: float = float("nan")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def alpha(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def beta(self) -> float:
        return (self.p - self.D) / (self.D * (self.p - 1.0))

    @property
    def gauss_green(self) -> np.ndarray:
        """Relative residual ``|I - ∮ H(∇u)^{p-1} H(ν) w| / I``."""
        return np.abs(self.I - self.flux) / self.I

    def rows(self) -> list:
        return [[self.t[i], self.mu[i], self.I[i], self.K[i], self.Q[i], self.grad_cv[i],
                 self.center[i, 0], self.center[i, 1], self.rho[i]] for i in range(len(self))]


def _segment_weight(w, pts: np.ndarray) -> np.ndarray:
    """Mean of ``w`` over each segment by 2-point Gauss (exact for quadratic weights)."""
    a, b = pts[:, :2], pts[:, 2:]
    nodes, wts = _GL2
    vals = sum(wt * w(a + s * (b - a)) for s, wt in zip(nodes, wts))
    return vals


def _source_integrands(problem: ProblemSpec):
    w, f = problem.w, problem.f

    def weight(x, u):
        return w(x)

    def source(x, u):
        return f.f(u) * w(x)

    return weight, source


class _LevelContext:
    """Everything the per-level computation needs, computed once."""

    def __init__(self, problem: ProblemSpec, solution: Solution, backend=None):
        self.problem = problem
        self.mesh = solution.mesh
        self.u = np.asarray(solution.u, dtype=float)
        self.grads = solution.grads
        gn = np.hypot(self.grads[:, 0], self.grads[:, 1])
        self.gnorm = gn
        self.Hg = eval_norm(problem.H, self.grads)
        self.backend = backend
        self.weight, self.source = _source_integrands(problem)
        self.W = triangle_integrals(self.mesh, self.u, self.weight)
        self.F_tri = None if problem.f.kind == STEP else triangle_integrals(self.mesh, self.u, self.source)

    def mu(self, t: float) -> float:
        return superlevel_integral(self.mesh, self.u, t, self.weight, self.W)

    def I(self, t: float) -> float:
        f = self.problem.f
        if f.kind == STEP:
            # integrate the two constant pieces separately so the jump is exact
            s = max(f.s, t)
            mu_t, mu_s = self.mu(t), self.mu(s)
            return f.a * (mu_t - mu_s) + f.b * mu_s
        return superlevel_integral(self.mesh, self.u, t, self.source, self.F_tri)


def _one_level(ctx: _LevelContext, t: float, fit: bool, seed: int) -> dict:
    pr = ctx.problem
    p = pr.p
    level = extract_level_set(ctx.mesh, ctx.u, t, backend=ctx.backend)
    keep = level.keep_mask(4.0 * ctx.mesh.h)
    if not np.any(keep):
        keep = np.ones(len(level.tri), dtype=bool)
    tri = level.tri[keep]
    pts = level.points[keep]
    L = level.lengths[keep]
    wbar = _segment_weight(pr.w, pts)
    g = ctx.gnorm[tri]
    Hg = ctx.Hg[tri]
    ok = g > 0.0
    safe = np.where(ok, g, 1.0)
    inv_grad = float(np.sum(np.where(ok, L * wbar / safe, 0.0)))
    Hnu = np.where(ok, Hg / safe, 0.0)
    flux = float(np.sum(L * wbar * Hg ** (p - 1.0) * Hnu))
    perimeter = float(np.sum(L * wbar * Hnu))
    total = float(L.sum())
    mean = float(np.sum(L * Hg)) / total
    std = float(np.sqrt(np.sum(L * (Hg - mean) ** 2) / total))
    out = {"t": t, "mu": ctx.mu(t), "I": ctx.I(t), "inv_grad": inv_grad, "flux": flux,
           "perimeter": perimeter, "grad_cv": std / mean if mean > 0 else float("inf"),
           "components": int(sum(1 for idx in level.polylines if keep[idx[0]])),
           "center": (np.nan, np.nan), "rho": np.nan, "fit_rms": np.nan,
           "center_free": (np.nan, np.nan)}
    if fit:
        fit_pts = pts[:, :2]
        ball, rms = characterize_minimizer(pr.H, pr.w, pr.cone, None, seed=seed, free=fit_pts)
        free_ball, _ = characterize_minimizer(pr.H, pr.w, ConeSpec.full(), None, seed=seed,
                                              free=fit_pts)
        out.update(center=ball.center, rho=ball.radius, fit_rms=rms, center_free=free_ball.center)
    return out


def level_grid(M: float, n_levels: int = 32) -> np.ndarray:
    return np.linspace(0.05 * M, 0.95 * M, n_levels)


def distribution_table(problem: ProblemSpec, solution: Solution, n_levels: int = 32,
                       fit: bool = True, seed: int = 42, constant: Optional[float] = None,
                       backend: Optional[str] = None) -> LevelTable:
    """Per-level distribution functions, surface integrals and Wulff fits.

    Raises
    ------
    DiagnosticsError
        If the solution has no positive maximum or fewer than 2 levels are requested.
    """
    M = float(np.max(solution.u))
    if not M > 0.0:
        raise DiagnosticsError("solution has no positive maximum; level table undefined")
    if n_levels < 2:
        raise DiagnosticsError("need at least 2 levels")
    ctx = _LevelContext(problem, solution, backend)
    levels = level_grid(M, n_levels)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        recs = list(pool.map(lambda it: _one_level(ctx, float(it[1]), fit, seed + it[0]),
                             enumerate(levels)))
    D = effective_dimension(problem.w)
    p = problem.p

    def col(k):
        return np.array([r[k] for r in recs], dtype=float)

    mu, I = col("mu"), col("I")
    alpha, beta = p / (p - 1.0), (p - D) / (D * (p - 1.0))
    K = I**alpha * mu**beta
    per = col("perimeter")
    Q = per / mu ** ((D - 1.0) / D)
    return LevelTable(
        p=p, D=D, h=solution.mesh.h, t=levels, mu=mu, I=I, K=K, inv_grad=col("inv_grad"),
        flux=col("flux"), perimeter=per, Q=Q, grad_cv=col("grad_cv"),
        center=np.array([r["center"] for r in recs], dtype=float),
        rho=col("rho"), fit_rms=col("fit_rms"),
        center_free=np.array([r["center_free"] for r in recs], dtype=float),
        components=np.array([r["components"] for r in recs]), M=M)


# ---------------------------------------------------------------------------
# checks on the table


def check_K_monotone(table: LevelTable) -> float:
    """Largest relative increase of ``K`` between consecutive levels (0 if nonincreasing)."""
    if len(table) < 10:
        raise DiagnosticsError("K monotonicity needs at least 10 levels")
    K = table.K
    inc = (K[1:] - K[:-1]) / K[:-1]
    return float(max(0.0, inc.max()))


def mu_derivative_check(table: LevelTable) -> float:
    """Worst relative slack of ``-mu' >= ∮ w/|∇u|`` with centered differences.

    Only interior levels are used; levels whose neighbours have the same ``mu``
    (a plateau) are skipped.
    """
    if len(table) < 10:
        raise DiagnosticsError("the derivative check needs at least 10 levels")
    t, mu, S = table.t, table.mu, table.inv_grad
    dmu = -(mu[2:] - mu[:-2]) / (t[2:] - t[:-2])
    s = S[1:-1]
    use = (mu[2:] < mu[:-2]) & (s > 0.0)
    if not np.any(use):
        raise DiagnosticsError("no level with a usable derivative")
    return float(np.min((dmu[use] - s[use]) / s[use]))


def holder_slack(table: LevelTable, c: float) -> np.ndarray:
    p, D = table.p, table.D
    lhs = table.I ** (1.0 / p) * table.inv_grad ** ((p - 1.0) / p)
    rhs = c * table.mu ** ((D - 1.0) / D)
    return (lhs - rhs) / rhs


def holder_isoperimetric_check(table: LevelTable, c: float) -> float:
    """Smallest relative slack of ``I^{1/p} (∮ w/|∇u|)^{(p-1)/p} >= c mu^{(D-1)/D}``."""
    return float(np.min(holder_slack(table, c)))


def holder_flux_slack(table: LevelTable, c: float) -> np.ndarray:
    """Relative slack of ``F^{1/p} (∮ w/|∇u|)^{(p-1)/p} >= c mu^{(D-1)/D}`` with the boundary flux
    ``F = ∮ H(∇u)^{p-1} H(ν) w`` in place of ``I``.

    This form holds for any field, solution or not, because it only combines
    Hölder's inequality with the isoperimetric inequality. It is strictly
    positive unless the level is a Wulff sector with constant ``H(∇u)``.
    """
    p, D = table.p, table.D
    lhs = table.flux ** (1.0 / p) * table.inv_grad ** ((p - 1.0) / p)
    rhs = c * table.mu ** ((D - 1.0) / D)
    return (lhs - rhs) / rhs


def _signed_worst(x: np.ndarray) -> float:
    return float(x[int(np.argmax(np.abs(x)))])


def gradient_constancy(problem: ProblemSpec, solution: Solution, t: float,
                       backend: Optional[str] = None) -> float:
    """Length-weighted coefficient of variation of ``H(∇u)`` along ``{u = t}``."""
    level = extract_level_set(solution.mesh, solution.u, t, backend=backend)
    Hg = eval_norm(problem.H, solution.grads[level.tri])
    L = level.lengths
    mean = float(np.sum(L * Hg) / L.sum())
    return float(np.sqrt(np.sum(L * (Hg - mean) ** 2) / L.sum()) / mean)


# ---------------------------------------------------------------------------
# Pohozaev identity


def recovered_boundary_gradients(solution: Solution, vertices: np.ndarray,
                                 min_points: int = 12) -> np.ndarray:
    """Gradients at ``vertices`` from least-squares quadratics over nearby mesh vertices.

    The patch only sees the domain side, so this is a one-sided, second-order
    replacement for the element gradient at the boundary.
    """
    mesh = solution.mesh
    tree = cKDTree(mesh.vertices)
    out = np.empty((len(vertices), 2))
    for n, i in enumerate(vertices):
        x0 = mesh.vertices[i]
        radius = 2.5 * mesh.h
        while True:
            idx = tree.query_ball_point(x0, radius)
            if len(idx) >= min_points:
                break
            radius *= 1.5
        d = (mesh.vertices[idx] - x0) / mesh.h
        A = np.column_stack([np.ones(len(d)), d[:, 0], d[:, 1], d[:, 0] ** 2,
                             d[:, 0] * d[:, 1], d[:, 1] ** 2])
        coef = np.linalg.lstsq(A, solution.u[idx], rcond=None)[0]
        out[n] = coef[1:3] / mesh.h
    return out


@dataclass
class PohozaevReport:
    volume_term: float
    boundary_term: float
    residual: float

    def to_json(self) -> dict:
        return {"volume_term": self.volume_term, "boundary_term": self.boundary_term,
                "residual": self.residual}


def pohozaev_residual(problem: ProblemSpec, solution: Solution,
                      recovery: bool = True) -> PohozaevReport:
    """``|D ∫F(u)w + ((p-D)/p) ∫u f(u) w - (1/p') ∫_{Γ0} H(∇u)^p <x,ν> w|`` over the boundary term.

    With ``recovery`` the gradient on Γ₀ is interpolated from the recovered
    vertex gradients, otherwise the constant gradient of the adjacent triangle
    is used.
    """
    mesh = solution.mesh
    u = np.asarray(solution.u, dtype=float)
    p, D = problem.p, effective_dimension(problem.w)
    w, f = problem.w, problem.f
    vol_F = float(triangle_integrals(mesh, u, lambda x, v: f.F(v) * w(x)).sum())
    vol_uf = float(triangle_integrals(mesh, u, lambda x, v: v * f.f(v) * w(x)).sum())
    lhs = D * vol_F + (p - D) / p * vol_uf

    oriented = mesh.oriented_boundary_edges()
    key = np.sort(mesh.boundary_edges, axis=1)
    tags = {(int(i), int(j)): int(t) for (i, j), t in zip(key, mesh.edge_tags)}
    g0 = np.array([tags[(min(i, j), max(i, j))] == GAMMA0 for i, j in oriented])
    E0 = oriented[g0]
    a, b = mesh.vertices[E0[:, 0]], mesh.vertices[E0[:, 1]]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    nu = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]   # outward: domain on the left
    nodes, wts = _GL3
    if recovery:
        verts = np.unique(E0)
        rec = recovered_boundary_gradients(solution, verts)
        lookup = {int(v): k for k, v in enumerate(verts)}
        ga = rec[[lookup[int(i)] for i in E0[:, 0]]]
        gb = rec[[lookup[int(j)] for j in E0[:, 1]]]
    else:
        owner = mesh.boundary_edge_owner()[g0]
        ga = gb = solution.grads[owner]
    rhs = 0.0
    for s, wt in zip(nodes, wts):
        x = a + s * d
        g = ga + s * (gb - ga)
        vals = eval_norm(problem.H, g) ** p * np.sum(x * nu, axis=1) * w(x)
        rhs += float(np.sum(wt * length * vals))
    rhs *= (p - 1.0) / p
    return PohozaevReport(lhs, rhs, abs(lhs - rhs) / abs(rhs) if rhs != 0.0 else float("inf"))


def small_gradient_report(problem: ProblemSpec, solution: Solution, rel: float = 1e-3) -> dict:
    """Weighted measure of near-critical triangles and the source mass they carry.

    Descriptive only: on such triangles the continuous theory forces ``f = 0``
    almost everywhere, which a P1 field cannot resolve.
    """
    mesh = solution.mesh
    Hg = eval_norm(problem.H, solution.grads)
    small = Hg < rel * float(Hg.max())
    weight, source = _source_integrands(problem)
    W = triangle_integrals(mesh, solution.u, weight)
    S = triangle_integrals(mesh, solution.u, source)
    return {"threshold": rel * float(Hg.max()), "triangles": int(small.sum()),
            "measure": float(W[small].sum()), "source": float(S[small].sum())}


# ---------------------------------------------------------------------------
# radial symmetry


@dataclass
class RadialFit:
    center: np.ndarray
    radii: np.ndarray        # increasing Wulff radii of the levels
    values: np.ndarray       # matching levels
    deviation: float         # sup |u - g(H0(x - center))| over vertices inside the fitted range
    nesting: float           # max of H0(x(t) - x(s)) - (rho(t) - rho(s)) over t < s
    drift: float             # max Euclidean distance of level centers from the global center

    def profile(self, r) -> np.ndarray:
        return np.interp(r, self.radii, self.values)

    def to_json(self) -> dict:
        return {"center": [float(c) for c in self.center], "deviation": self.deviation,
                "nesting": self.nesting, "drift": self.drift}


def radial_fit(problem: ProblemSpec, solution: Solution, table: LevelTable) -> RadialFit:
    """Global Wulff-radial profile built from the per-level fits.

    Raises
    ------
    DiagnosticsError
        With fewer than 5 levels carrying a fit.
    """
    use = np.isfinite(table.rho) & np.all(np.isfinite(table.center), axis=1)
    if use.sum() < 5:
        raise DiagnosticsError("radial fit needs at least 5 fitted levels")
    t, rho, cen = table.t[use], table.rho[use], table.center[use]
    x0 = cen.mean(axis=0)
    order = np.argsort(rho)
    radii, values = rho[order], t[order]
    H = problem.H
    r = fast_dual(H, solution.mesh.vertices - x0)
    inside = (r >= radii[0]) & (r <= radii[-1])
    dev = float(np.max(np.abs(solution.u[inside] - np.interp(r[inside], radii, values))))
    # t_i < t_j  <=>  i < j on the level grid
    diff = cen[:, None, :] - cen[None, :, :]
    gap = fast_dual(H, diff.reshape(-1, 2)).reshape(len(t), len(t)) - (rho[:, None] - rho[None, :])
    iu = np.triu_indices(len(t), k=1)
    nesting = float(gap[iu].max()) if len(iu[0]) else 0.0
    drift = float(np.max(np.hypot(*(cen - x0).T)))
    return RadialFit(x0, radii, values, dev, nesting, drift)


# ---------------------------------------------------------------------------
# summary


DEFAULT_TOLERANCES = {
    "pohozaev": 3e-2,
    "gauss_green_max": 2e-2,
    "holder_worst": 2e-2,
    "quotient_worst": 2e-2,
    "grad_cv_max": 3e-2,
    "K_increment_max": 2e-2,
    "mu_slack_min": 2e-2,
    "radial_deviation": 1e-2,
    "nesting_h": 2.0,
    "center_drift_h": 2.0,
}


@dataclass
class Summary:
    values: dict
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def summarize(problem: ProblemSpec, solution: Solution, table: LevelTable,
              c: Optional[float] = None, tolerances: Optional[dict] = None) -> Summary:
    """Collect every diagnostic and compare against ``tolerances`` (relative, or in units of h)."""
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    c = optimal_constant(problem.H, problem.w, problem.cone) if c is None else c
    h = table.h
    poh = pohozaev_residual(problem, solution)
    hold = holder_slack(table, c)
    quot = (table.Q - c) / c
    fit = radial_fit(problem, solution, table)
    vals = {
        "M": table.M,
        "constant": c,
        "pohozaev": poh.residual,
        "pohozaev_terms": [poh.volume_term, poh.boundary_term],
        "gauss_green_max": float(table.gauss_green.max()),
        "holder_worst": _signed_worst(hold),
        "holder_min": float(hold.min()),
        "holder_flux_max": float(holder_flux_slack(table, c).max()),
        "quotient_worst": _signed_worst(quot),
        "grad_cv_max": float(table.grad_cv.max()),
        "K_increment_max": check_K_monotone(table) if len(table) >= 10 else 0.0,
        "mu_slack_min": mu_derivative_check(table) if len(table) >= 10 else 0.0,
        "center": [float(x) for x in fit.center],
        "center_drift": fit.drift,
        "center_free_max_dist": float(np.max(np.hypot(*table.center_free.T))),
        "radial_deviation": fit.deviation / table.M,
        "nesting": fit.nesting,
        "small_gradient": small_gradient_report(problem, solution),
        "vertex_grad_max": solution.vertex_grad_max,
        "h": h,
        # the pointwise identities hold for almost every level, so the offending
        # levels are listed for inspection next to the worst values
        "outlier_levels": {
            "gauss_green": np.flatnonzero(table.gauss_green > tol["gauss_green_max"]).tolist(),
            "holder": np.flatnonzero(np.abs(hold) > tol["holder_worst"]).tolist(),
            "quotient": np.flatnonzero(np.abs(quot) > tol["quotient_worst"]).tolist(),
            "grad_cv": np.flatnonzero(table.grad_cv > tol["grad_cv_max"]).tolist(),
        },
    }
    checks = [
        ("pohozaev", abs(vals["pohozaev"]) <= tol["pohozaev"]),
        ("gauss_green_max", vals["gauss_green_max"] <= tol["gauss_green_max"]),
        ("holder_worst", abs(vals["holder_worst"]) <= tol["holder_worst"]),
        ("quotient_worst", abs(vals["quotient_worst"]) <= tol["quotient_worst"]),
        ("grad_cv_max", vals["grad_cv_max"] <= tol["grad_cv_max"]),
        ("K_increment_max", vals["K_increment_max"] <= tol["K_increment_max"]),
        ("mu_slack_min", vals["mu_slack_min"] >= -tol["mu_slack_min"]),
        ("radial_deviation", vals["radial_deviation"] <= tol["radial_deviation"]),
        ("nesting", vals["nesting"] <= tol["nesting_h"] * h),
        ("center_drift", vals["center_drift"] <= tol["center_drift_h"] * h),
    ]
    if problem.cone.k == 0:
        # a cone without lines only admits Wulff balls centered at its vertex
        checks.append(("center_vertex",
                       vals["center_free_max_dist"] <= tol["center_drift_h"] * h))
    failures = [name for name, ok in checks if not ok]
    return Summary(vals, failures)
