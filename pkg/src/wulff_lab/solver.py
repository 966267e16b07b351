"""P1 finite elements for ``-div(w H(∇u)^{p-1} ∇_ξH(∇u)) = f(u) w`` in ``cone ∩ Ω``.

The discrete problem is the minimization of

    E_ε(u) = Σ_T ψ_ε(H(∇u|_T)) W_T - Σ_i m_i F(u_i),

where ``W_T = ∫_T w``, ``m_i = Σ_{T ∋ i} W_T / 3`` is the lumped weighted mass
and ``ψ_ε(t) = ((ε² + t²)^{p/2} - ε^p) / p``. Values on Γ₀ are fixed to zero,
Γ₁ carries the natural (conormal) condition.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .cones import (
    REFINED_BARY,
    REFINED_WEIGHTS,
    ConeSpec,
    WeightSpec,
    check_weight_on_cone,
    effective_dimension,
    integrate_triangles,
)
from .finsler import NormSpec, eval_norm, norm_hessian
from .mesh import Mesh

CONSTANT = "constant"
POWER = "power"
STEP = "step"


class ConvergenceError(RuntimeError):
    """Raised when the minimizer stalls; ``solution`` holds the last iterate."""

    def __init__(self, message: str, solution: "Solution"):
        super().__init__(message)
        self.solution = solution


class ConditionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# nonlinearities


@dataclass(frozen=True)
class SourceSpec:
    """Nonnegative source ``f`` with primitive ``F(s) = ∫_0^s f``.

    ``constant``: ``f = c0``. ``power``: ``f = u^q``. ``step``: ``f = a`` below
    ``s`` and ``b`` from ``s`` on, with ``a >= b >= 0``. Negative arguments are
    treated as 0 (``f(u) = f(0)``, ``F(u) = f(0) u``).

    ``phi`` is an optional nonincreasing comparison function, either a number
    or a table of ``(u, phi)`` pairs interpolated linearly and held constant
    outside the table.
    """

    kind: str = CONSTANT
    c0: float = 1.0
    q: float = 1.0
    a: float = 1.0
    b: float = 0.0
    s: float = 0.5
    phi: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == CONSTANT:
            if self.c0 < 0.0:
                raise ValueError("constant source must be nonnegative")
        elif self.kind == POWER:
            if self.q < 0.0:
                raise ValueError("power exponent must be nonnegative")
        elif self.kind == STEP:
            if not self.a >= self.b >= 0.0:
                raise ValueError("step source needs a >= b >= 0")
            if self.s <= 0.0:
                raise ValueError("step location must be positive")
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.phi is not None and not np.isscalar(self.phi):
            table = tuple((float(u), float(v)) for u, v in self.phi)
            if len(table) < 1:
                raise ValueError("phi table is empty")
            if any(b[0] <= a[0] for a, b in zip(table, table[1:])):
                raise ValueError("phi table abscissae must increase")
            object.__setattr__(self, "phi", table)

    @classmethod
    def constant(cls, c0: float = 1.0, phi=None) -> "SourceSpec":
        return cls(CONSTANT, c0=float(c0), phi=phi)

    @classmethod
    def power(cls, q: float, phi=None) -> "SourceSpec":
        return cls(POWER, q=float(q), phi=phi)

    @classmethod
    def step(cls, a: float, b: float, s: float, phi=None) -> "SourceSpec":
        return cls(STEP, a=float(a), b=float(b), s=float(s), phi=phi)

    @property
    def nonincreasing(self) -> bool:
        return self.kind != POWER or self.q == 0.0

    def __call__(self, u, eps: float = 0.0) -> np.ndarray:
        return self.f(u, eps)

    def f(self, u, eps: float = 0.0) -> np.ndarray:
        """``f(u)``; for ``eps > 0`` the step is replaced by a linear ramp on ``[s - eps, s]``."""
        u = np.asarray(u, dtype=float)
        if self.kind == CONSTANT:
            return np.full(u.shape, self.c0)
        if self.kind == POWER:
            if self.q == 0.0:
                return np.ones(u.shape)
            return np.maximum(u, 0.0) ** self.q
        if eps > 0.0:
            frac = np.clip((u - (self.s - eps)) / eps, 0.0, 1.0)
            return self.a + (self.b - self.a) * frac
        return np.where(u < self.s, self.a, self.b)

    def F(self, u, eps: float = 0.0) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == CONSTANT:
            return self.c0 * u
        if self.kind == POWER:
            if self.q == 0.0:
                return u.copy()
            return np.maximum(u, 0.0) ** (self.q + 1.0) / (self.q + 1.0)
        a, b, s = self.a, self.b, self.s
        if eps > 0.0:
            lo = s - eps
            z = np.clip(u - lo, 0.0, eps)
            ramp = a * z + 0.5 * (b - a) * z * z / eps
            return a * np.minimum(u, lo) + ramp + b * np.maximum(u - s, 0.0)
        return np.where(u < s, a * u, a * s + b * (u - s))

    def df(self, u, eps: float = 0.0) -> np.ndarray:
        """Derivative of the ramped ``f`` (zero away from the ramp for step sources)."""
        u = np.asarray(u, dtype=float)
        if self.kind == STEP and eps > 0.0:
            inside = (u > self.s - eps) & (u < self.s)
            return np.where(inside, (self.b - self.a) / eps, 0.0)
        if self.kind == POWER and self.q != 0.0:
            return self.q * np.maximum(u, 1e-300) ** (self.q - 1.0) * (u > 0.0)
        return np.zeros(u.shape)

    def phi_eval(self, u) -> np.ndarray:
        if self.phi is None:
            raise ConditionError("no comparison function phi supplied")
        u = np.asarray(u, dtype=float)
        if np.isscalar(self.phi):
            return np.full(u.shape, float(self.phi))
        xs = np.array([t[0] for t in self.phi])
        ys = np.array([t[1] for t in self.phi])
        return np.interp(u, xs, ys)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == CONSTANT:
            out["c0"] = self.c0
        elif self.kind == POWER:
            out["q"] = self.q
        else:
            out.update(a=self.a, b=self.b, s=self.s)
        if self.phi is not None:
            out["phi"] = self.phi if np.isscalar(self.phi) else [list(t) for t in self.phi]
        return out


@dataclass(frozen=True)
class ConditionB:
    """Grid certificate for ``phi`` nonincreasing and ``phi <= f <= (Dp/(D-p)) phi``."""

    passed: bool
    ratio: float
    lower_slack: float
    upper_slack: float
    monotone_slack: float

    def __bool__(self) -> bool:
        return self.passed


def validate_condition_b(problem: "ProblemSpec", D: Optional[float] = None, u_max: float = 1.0,
                         n: int = 2001, rtol: float = 1e-12) -> ConditionB:
    """Check the comparison-function bounds on ``n`` points of ``[0, u_max]``.

    At a jump of a step source the right limit is used, which is how ``f`` is
    defined there.

    Raises
    ------
    ConditionError
        If ``p >= D`` or no ``phi`` is attached to the source.
    """
    D = effective_dimension(problem.w) if D is None else float(D)
    p = problem.p
    if p >= D:
        raise ConditionError(f"condition (b) needs p < D (p={p}, D={D})")
    src = problem.f
    grid = np.linspace(0.0, u_max, n)
    phi = src.phi_eval(grid)
    fv = src.f(grid)
    ratio = D * p / (D - p)
    scale = max(1.0, float(np.abs(fv).max()), float(np.abs(phi).max()))
    tol = rtol * scale
    lower = float(np.min(fv - phi))
    upper = float(np.min(ratio * phi - fv))
    mono = float(np.min(phi[:-1] - phi[1:])) if n > 1 else 0.0
    ok = lower >= -tol and upper >= -tol and mono >= -tol and float(phi.min()) >= -tol
    return ConditionB(bool(ok), ratio, lower, upper, mono)


# ---------------------------------------------------------------------------
# problem and solution containers


@dataclass(frozen=True)
class ProblemSpec:
    p: float
    H: NormSpec
    w: WeightSpec
    cone: ConeSpec
    R: float = 1.0
    f: SourceSpec = field(default_factory=SourceSpec.constant)
    condition: Optional[str] = None  # None, "a" or "b"

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError("p must exceed 1")
        if not self.R > 0.0:
            raise ValueError("R must be positive")
        if self.condition not in (None, "a", "b"):
            raise ValueError("condition must be 'a', 'b' or None")
        check_weight_on_cone(self.w, self.cone)
        if self.condition == "b":
            cert = validate_condition_b(self)
            if not cert:
                raise ConditionError(
                    "condition (b) certificate failed: "
                    f"f - phi >= {cert.lower_slack:.3g}, "
                    f"ratio*phi - f >= {cert.upper_slack:.3g}, "
                    f"phi decrease >= {cert.monotone_slack:.3g}")

    @property
    def D(self) -> float:
        return effective_dimension(self.w)

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    def to_dict(self) -> dict:
        return {"p": self.p, "norm": self.H.to_dict(), "weight": self.w.to_dict(),
                "cone": self.cone.to_dict(), "R": self.R, "f": self.f.to_dict(),
                "condition": self.condition}


@dataclass
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 500
    eps_schedule: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4)
    memory: int = 8
    max_outer: int = 100
    refresh: int = 5
    backend: Optional[str] = None


@dataclass
class Solution:
    mesh: Mesh
    u: np.ndarray
    eps: float = 0.0
    iterations: int = 0
    outer_iterations: int = 0
    energy: float = float("nan")
    energy_history: list = field(default_factory=list)
    # index into energy_history where each inner minimization starts
    stage_starts: list = field(default_factory=list)
    converged: bool = True
    grad_norm: float = float("nan")
    vertex_grad_max: float = float("nan")

    @property
    def grads(self) -> np.ndarray:
        """Per-triangle constant gradients ``(m, 2)``."""
        return np.einsum("mk,mkd->md", self.u[self.mesh.triangles], self.mesh.dphi)

    @property
    def M(self) -> float:
        return float(self.u.max())

    def at_vertices(self) -> np.ndarray:
        return np.column_stack([self.mesh.vertices, self.u])


# ---------------------------------------------------------------------------
# assembly


@dataclass
class _Discrete:
    """Mesh quantities that do not change during a solve."""

    mesh: Mesh
    W: np.ndarray       # ∫_T w
    mass: np.ndarray    # lumped Σ W_T / 3
    free: np.ndarray    # indices of non-Dirichlet vertices
    code: int
    params: np.ndarray


def _triangle_weights(problem: ProblemSpec, mesh: Mesh) -> np.ndarray:
    if problem.w.lam == 0.0:
        return mesh.areas.copy()
    xy = mesh.vertices[mesh.triangles]
    return integrate_triangles(xy, problem.w, REFINED_BARY, REFINED_WEIGHTS)


def discretize(problem: ProblemSpec, mesh: Mesh) -> _Discrete:
    W = _triangle_weights(problem, mesh)
    mass = np.bincount(mesh.triangles.ravel(), np.repeat(W / 3.0, 3), minlength=mesh.n_vertices)
    code, params = problem.H.kernel_code()
    return _Discrete(mesh, W, mass, np.nonzero(mesh.free)[0], code, params)


def energy(problem: ProblemSpec, mesh: Mesh, u, eps: float, disc: Optional[_Discrete] = None,
           backend: Optional[str] = None) -> float:
    """Discrete energy with the lumped source term."""
    disc = disc or discretize(problem, mesh)
    u = np.asarray(u, dtype=float)
    e, _ = kernels.psi_energy_grad(mesh.triangles, mesh.dphi, disc.W, u, disc.code, disc.params,
                                   problem.p, eps, backend=backend)
    return e - float(disc.mass @ problem.f.F(u, eps))


def energy_gradient(problem: ProblemSpec, mesh: Mesh, u, eps: float,
                    disc: Optional[_Discrete] = None, frozen=None,
                    backend: Optional[str] = None) -> np.ndarray:
    """Gradient over the free vertices; the source is evaluated at ``frozen`` (default ``u``)."""
    disc = disc or discretize(problem, mesh)
    u = np.asarray(u, dtype=float)
    _, g = kernels.psi_energy_grad(mesh.triangles, mesh.dphi, disc.W, u, disc.code, disc.params,
                                   problem.p, eps, backend=backend)
    at = u if frozen is None else np.asarray(frozen, dtype=float)
    g = g - disc.mass * problem.f.f(at, eps)
    return g[disc.free]


def _hessian(problem: ProblemSpec, disc: _Discrete, u: np.ndarray, eps: float,
             diag_extra: Optional[np.ndarray] = None):
    """Sparse PSD Hessian of the ψ-term restricted to free vertices, LU-factorized."""
    mesh = disc.mesh
    grads = np.einsum("mk,mkd->md", u[mesh.triangles], mesh.dphi)
    Hs = norm_hessian(problem.H, grads, problem.p, max(eps, 1e-12))
    local = np.einsum("mid,mde,mje->mij", mesh.dphi, Hs, mesh.dphi) * disc.W[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    K = K[disc.free][:, disc.free]
    d = K.diagonal()
    shift = 1e-12 * float(d.max()) if len(d) else 0.0
    extra = np.zeros(len(disc.free)) if diag_extra is None else diag_extra[disc.free]
    K = (K + sp.diags(extra + shift)).tocsc()
    return splu(K)


def _lbfgs_direction(g, S, Y, lu):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((rho, a))
        q -= a * y
    r = lu.solve(q)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return -r


def _minimize(problem, disc, u, eps, tol, cfg, frozen_f, history):
    """Preconditioned L-BFGS with Armijo backtracking; returns (u, iters, converged, gnorm, energy).

    With ``frozen_f`` given the source term is linear, ``-Σ m_i f_i u_i``;
    otherwise the exact (ramped) primitive ``F`` enters the energy.
    """
    free = disc.free
    mesh = disc.mesh

    def fun(v):
        e, g = kernels.psi_energy_grad(mesh.triangles, mesh.dphi, disc.W, v, disc.code,
                                       disc.params, problem.p, eps, backend=cfg.backend)
        if frozen_f is None:
            e -= float(disc.mass @ problem.f.F(v, eps))
            g = g - disc.mass * problem.f.f(v, eps)
        else:
            e -= float(disc.mass @ (frozen_f * v))
            g = g - disc.mass * frozen_f
        return e, g[free]

    def precond(v):
        extra = None
        if frozen_f is None:
            extra = -disc.mass * problem.f.df(v, eps)
        return _hessian(problem, disc, v, eps, extra)

    u = u.copy()
    e, g = fun(u)
    history.append(e)
    lu = precond(u)
    S, Y = [], []
    since = 0
    gnorm = float(np.linalg.norm(g))
    for it in range(1, cfg.max_iter + 1):
        if gnorm <= tol * (1.0 + abs(e)):
            return u, it - 1, True, gnorm, e
        d = _lbfgs_direction(g, S, Y, lu)
        slope = float(g @ d)
        if not slope < 0.0:
            S, Y = [], []
            d = -lu.solve(g)
            slope = float(g @ d)
        alpha = 1.0
        accepted = False
        for _ in range(40):
            trial = u.copy()
            trial[free] += alpha * d
            e_new, g_new = fun(trial)
            if e_new <= e + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if S or since > 0:
                # restart from a fresh preconditioner before giving up
                lu = precond(u)
                S, Y, since = [], [], 0
                continue
            return u, it, False, gnorm, e
        s = trial[free] - u[free]
        y = g_new - g
        if float(s @ y) > 1e-14 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            S.append(s)
            Y.append(y)
            if len(S) > cfg.memory:
                S.pop(0)
                Y.pop(0)
        u, e, g = trial, e_new, g_new
        gnorm = float(np.linalg.norm(g))
        history.append(e)
        since += 1
        if since >= cfg.refresh or alpha < 1.0:
            lu = precond(u)
            S, Y, since = [], [], 0
    return u, cfg.max_iter, gnorm <= tol * (1.0 + abs(e)), gnorm, e


def _vertex_grad_max(problem: ProblemSpec, mesh: Mesh, u: np.ndarray) -> float:
    """Largest ``H(∇u)`` on triangles within ``R/8`` of the cone vertex (or of the origin)."""
    cen = mesh.vertices[mesh.triangles].mean(axis=1)
    near = np.linalg.norm(cen, axis=1) < problem.R / 8.0
    if not np.any(near):
        return float("nan")
    g = np.einsum("mk,mkd->md", u[mesh.triangles[near]], mesh.dphi[near])
    return float(np.max(eval_norm(problem.H, g)))


def solve(problem: ProblemSpec, mesh: Mesh, config: Optional[SolverConfig] = None,
          u0=None) -> Solution:
    """Minimize the regularized energy with ε-continuation.

    Nonincreasing sources have a concave primitive, so every stage is a
    convex minimization solved directly. Increasing sources are frozen at the
    previous iterate (Picard) and the outer loop runs until the update is
    below ``tol``; for ``f = u^q`` without ``u0`` the iteration starts from the
    solution with ``f = 1``, since ``u = 0`` is itself a solution.

    Raises
    ------
    ConvergenceError
        If a stage does not reach the tolerance within ``max_iter`` steps or
        the Picard loop does not settle within ``max_outer`` rounds.
    """
    cfg = config or SolverConfig()
    disc = discretize(problem, mesh)
    if u0 is None and problem.f.kind == POWER and problem.f.q > 0.0:
        # u = 0 solves the problem when f(0) = 0; start Picard from the f = 1 solution
        warm = ProblemSpec(problem.p, problem.H, problem.w, problem.cone, problem.R,
                           SourceSpec.constant(1.0))
        u0 = solve(warm, mesh, cfg).u
    u = np.zeros(mesh.n_vertices) if u0 is None else np.array(u0, dtype=float)
    u[mesh.dirichlet] = 0.0
    history: list = []
    starts: list = []
    total = 0
    outer = 0
    ok = True
    gnorm = float("nan")
    e = float("nan")
    schedule = list(cfg.eps_schedule)
    picard = not problem.f.nonincreasing
    for k, eps in enumerate(schedule):
        last = k == len(schedule) - 1
        tol = cfg.tol if last else max(cfg.tol, 1e-6)
        if not picard:
            starts.append(len(history))
            u, its, ok, gnorm, e = _minimize(problem, disc, u, eps, tol, cfg, None, history)
            total += its
            outer += 1
        else:
            ok = False
            for _ in range(cfg.max_outer):
                frozen = problem.f.f(u, eps)
                starts.append(len(history))
                u_new, its, inner_ok, gnorm, e = _minimize(problem, disc, u, eps, tol, cfg,
                                                           frozen, history)
                total += its
                outer += 1
                change = float(np.abs(u_new - u).max())
                u = u_new
                if inner_ok and change <= tol * max(1.0, float(np.abs(u).max())):
                    ok = True
                    break
            if ok:
                e = energy(problem, mesh, u, eps, disc, cfg.backend)
        if not ok and last:
            break
    u[mesh.dirichlet] = 0.0
    sol = Solution(mesh, u, schedule[-1] if schedule else 0.0, total, outer, e, history,
                   starts, ok, gnorm, _vertex_grad_max(problem, mesh, u))
    if not ok:
        raise ConvergenceError(
            f"no convergence at eps={sol.eps:g} after {total} iterations "
            f"(gradient norm {gnorm:.3e})", sol)
    return sol


def weak_residual(problem: ProblemSpec, mesh: Mesh, solution: Solution,
                  backend: Optional[str] = None) -> float:
    """Largest nodal residual of the unregularized weak form over interior hat functions,
    relative to the largest nodal source load."""
    disc = discretize(problem, mesh)
    u = solution.u
    _, g = kernels.psi_energy_grad(mesh.triangles, mesh.dphi, disc.W, u, disc.code, disc.params,
                                   problem.p, 0.0, backend=backend)
    load = disc.mass * problem.f.f(u)
    res = (g - load)[disc.free]
    scale = float(np.abs(load[disc.free]).max())
    if scale == 0.0:
        return float(np.abs(res).max())
    return float(np.abs(res).max()) / scale


# ---------------------------------------------------------------------------
# IO


def save_solution_csv(path, solution: Solution) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "u"])
        for (x, y), val in zip(solution.mesh.vertices, solution.u):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(val))])


def load_solution_csv(path, mesh: Mesh) -> Solution:
    """Read ``x,y,u`` rows matching the vertex order of ``mesh``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y", "u"]:
        raise ValueError(f"{path}: expected header x,y,u")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r])
    if data.shape != (mesh.n_vertices, 3):
        raise ValueError(f"{path}: {len(data)} rows for {mesh.n_vertices} vertices")
    if not np.allclose(data[:, :2], mesh.vertices, rtol=0.0, atol=1e-12):
        raise ValueError(f"{path}: coordinates do not match the mesh")
    return Solution(mesh, data[:, 2].copy(), converged=True)
