"""Planar Finsler norms, their duals and Wulff shapes.

All evaluators are vectorized over a trailing axis of length 2, so ``xi`` may
be a single vector or an ``(..., 2)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)
_SCAN = 256
_ANGLE_TOL = 1e-10

EUCLIDEAN = "euclidean"
ELLIPSE = "ellipse"
SMOOTHED_Q = "smoothed-q"


class DegenerateArgumentError(ValueError):
    """Raised when a gradient is requested at the origin."""


class WulffError(RuntimeError):
    """Raised when a Wulff boundary point cannot be bracketed."""


@dataclass(frozen=True)
class NormSpec:
    """A uniformly elliptic, even norm ``H`` on gradients.

    Use the ``euclidean``, ``ellipse`` and ``smoothed_q`` constructors rather
    than building instances by hand. ``k1`` and ``k2`` are the equivalence
    constants ``k1 |xi| <= H(xi) <= k2 |xi|``, filled in at construction.
    """

    kind: str
    matrix: tuple = ((1.0, 0.0), (0.0, 1.0))
    q: float = 2.0
    delta: float = 0.0
    k1: float = field(default=1.0, compare=False)
    k2: float = field(default=1.0, compare=False)
    _scale: float = field(default=1.0, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == ELLIPSE:
            A = np.asarray(self.matrix, dtype=float)
            if A.shape != (2, 2) or not np.allclose(A, A.T):
                raise ValueError("ellipse norm needs a symmetric 2x2 matrix")
            if np.linalg.eigvalsh(A).min() <= 0.0:
                raise ValueError("ellipse norm needs a positive definite matrix")
            object.__setattr__(self, "matrix", tuple(map(tuple, A.tolist())))
        elif self.kind == SMOOTHED_Q:
            if not self.q > 1.0:
                raise ValueError("smoothed-q norm needs q > 1")
            if not self.delta > 0.0:
                raise ValueError("smoothed-q norm needs delta > 0")
            d2 = self.delta**2
            scale = ((1.0 + d2) ** (self.q / 2) + d2 ** (self.q / 2)) ** (1.0 / self.q)
            object.__setattr__(self, "_scale", float(scale))
        elif self.kind != EUCLIDEAN:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        k1, k2 = _equivalence_constants(self)
        object.__setattr__(self, "k1", k1)
        object.__setattr__(self, "k2", k2)

    @classmethod
    def euclidean(cls) -> "NormSpec":
        return cls(EUCLIDEAN)

    @classmethod
    def ellipse(cls, A) -> "NormSpec":
        return cls(ELLIPSE, matrix=tuple(map(tuple, np.asarray(A, float).tolist())))

    @classmethod
    def smoothed_q(cls, q: float, delta: float) -> "NormSpec":
        return cls(SMOOTHED_Q, q=float(q), delta=float(delta))

    @property
    def A(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    def __call__(self, xi):
        return eval_norm(self, xi)

    def kernel_code(self) -> tuple[int, np.ndarray]:
        """Integer code and parameter vector understood by the compiled kernels."""
        if self.kind == EUCLIDEAN:
            return 0, np.zeros(3)
        if self.kind == ELLIPSE:
            A = self.A
            return 1, np.array([A[0, 0], A[0, 1], A[1, 1]])
        return 2, np.array([self.q, self.delta, self._scale])

    def to_dict(self) -> dict:
        if self.kind == EUCLIDEAN:
            return {"kind": EUCLIDEAN}
        if self.kind == ELLIPSE:
            return {"kind": ELLIPSE, "A": [list(r) for r in self.matrix]}
        return {"kind": SMOOTHED_Q, "q": self.q, "delta": self.delta}


@dataclass(frozen=True)
class WulffBall:
    """The Wulff ball ``{x : H0(x - center) < radius}``."""

    center: tuple
    radius: float
    norm: NormSpec

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("Wulff ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def boundary(self, n: int) -> np.ndarray:
        return wulff_boundary(self.norm, self.center, self.radius, n)

    def contains(self, x) -> np.ndarray:
        return dual_norm(self.norm, np.asarray(x, float) - np.asarray(self.center)) < self.radius


# ---------------------------------------------------------------------------
# evaluation


def eval_norm(spec: NormSpec, xi) -> np.ndarray | float:
    """Return ``H(xi)``; ``H(0) = 0``."""
    xi = np.asarray(xi, dtype=float)
    if spec.kind == EUCLIDEAN:
        out = np.hypot(xi[..., 0], xi[..., 1])
        return out[()] if out.ndim == 0 else out
    # evaluate on max(|x|, |y|) = 1 and rescale, so squares and q-th powers
    # neither underflow nor overflow
    m = np.maximum(np.abs(xi[..., 0]), np.abs(xi[..., 1]))
    safe = np.where(m > 0.0, m, 1.0)
    x, y = xi[..., 0] / safe, xi[..., 1] / safe
    if spec.kind == ELLIPSE:
        A = spec.A
        quad = A[0, 0] * x * x + 2.0 * A[0, 1] * x * y + A[1, 1] * y * y
        out = np.sqrt(np.maximum(quad, 0.0))
    else:
        q, d2 = spec.q, spec.delta**2
        r2 = x * x + y * y
        s1 = x * x + d2 * r2
        s2 = y * y + d2 * r2
        out = (s1 ** (q / 2) + s2 ** (q / 2)) ** (1.0 / q) / spec._scale
    out = m * out
    return out[()] if out.ndim == 0 else out


def _grad_unchecked(spec: NormSpec, xi: np.ndarray) -> np.ndarray:
    # zero rows map to zero gradients; the gradient is 0-homogeneous, so the
    # point is first scaled to max(|x|, |y|) = 1
    m = np.maximum(np.abs(xi[..., 0]), np.abs(xi[..., 1]))
    safe = np.where(m > 0.0, m, 1.0)
    x, y = xi[..., 0] / safe, xi[..., 1] / safe
    if spec.kind == EUCLIDEAN:
        r = np.hypot(x, y)
        safe = np.where(r > 0.0, r, 1.0)
        g = np.stack([x / safe, y / safe], axis=-1)
    elif spec.kind == ELLIPSE:
        A = spec.A
        Ax = A[0, 0] * x + A[0, 1] * y
        Ay = A[0, 1] * x + A[1, 1] * y
        h = np.sqrt(np.maximum(x * Ax + y * Ay, 0.0))
        safe = np.where(h > 0.0, h, 1.0)
        g = np.stack([Ax / safe, Ay / safe], axis=-1)
    else:
        q, d2 = spec.q, spec.delta**2
        r2 = x * x + y * y
        s1 = x * x + d2 * r2
        s2 = y * y + d2 * r2
        nz = r2 > 0.0
        s1s = np.where(nz, s1, 1.0)
        s2s = np.where(nz, s2, 1.0)
        S = s1s ** (q / 2) + s2s ** (q / 2)
        c1 = s1s ** (q / 2 - 1.0)
        c2 = s2s ** (q / 2 - 1.0)
        pre = S ** (1.0 / q - 1.0) / spec._scale
        gx = pre * (c1 * x + d2 * (c1 + c2) * x)
        gy = pre * (c2 * y + d2 * (c1 + c2) * y)
        g = np.stack([np.where(nz, gx, 0.0), np.where(nz, gy, 0.0)], axis=-1)
    return g


def grad_norm(spec: NormSpec, xi) -> np.ndarray:
    """Return ``grad_xi H(xi)``.

    Raises
    ------
    DegenerateArgumentError
        If any input vector is zero.
    """
    xi = np.asarray(xi, dtype=float)
    if np.any(np.all(xi == 0.0, axis=-1)):
        raise DegenerateArgumentError("grad_norm is undefined at xi = 0")
    return _grad_unchecked(spec, xi)


def _unit(theta):
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def _golden_max(fun, a, b, tol=_ANGLE_TOL):
    """Vectorized golden-section maximization on brackets ``[a, b]``."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while np.max(b - a) > tol:
        left = fc > fd
        # keep [a, d] when f(c) > f(d), else [c, b]; one interior value survives
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        keep = np.where(left, c, d)
        fkeep = np.where(left, fc, fd)
        new = np.where(left, b - _GOLDEN * (b - a), a + _GOLDEN * (b - a))
        fnew = fun(new)
        c = np.where(left, new, keep)
        fc = np.where(left, fnew, fkeep)
        d = np.where(left, keep, new)
        fd = np.where(left, fkeep, fnew)
    x = 0.5 * (a + b)
    return x, fun(x)


def _scan_max(ratio, thetas, values):
    """Locate the angular maximum of ``ratio`` from a coarse scan."""
    idx = np.argmax(values, axis=-1)
    step = thetas[1] - thetas[0]
    best = thetas[idx]
    return _golden_max(ratio, best - step, best + step)


def dual_norm(spec: NormSpec, x) -> np.ndarray | float:
    """Return the polar norm ``H0(x) = sup <x, xi> / H(xi)``."""
    x = np.asarray(x, dtype=float)
    if spec.kind == EUCLIDEAN:
        out = np.hypot(x[..., 0], x[..., 1])
    elif spec.kind == ELLIPSE:
        Ainv = np.linalg.inv(spec.A)
        a, b = x[..., 0], x[..., 1]
        quad = Ainv[0, 0] * a * a + 2.0 * Ainv[0, 1] * a * b + Ainv[1, 1] * b * b
        out = np.sqrt(np.maximum(quad, 0.0))
    else:
        out = _dual_generic(spec, x)
    return out[()] if np.ndim(out) == 0 else out


def _norm_on_circle(spec: NormSpec, n: int = _SCAN):
    thetas = 2.0 * np.pi * np.arange(n) / n
    return thetas, eval_norm(spec, _unit(thetas))


def _dual_generic(spec: NormSpec, x: np.ndarray) -> np.ndarray:
    shape = x.shape[:-1]
    pts = x.reshape(-1, 2)
    out = np.zeros(len(pts))
    nz = np.any(pts != 0.0, axis=1)
    if not np.any(nz):
        return out.reshape(shape)
    p = pts[nz]
    thetas, hvals = _norm_on_circle(spec)
    scan = (p[:, :1] * np.cos(thetas) + p[:, 1:] * np.sin(thetas)) / hvals

    def ratio(th):
        return (p[:, 0] * np.cos(th) + p[:, 1] * np.sin(th)) / eval_norm(spec, _unit(th))

    _, best = _scan_max(ratio, thetas, scan)
    out[nz] = best
    return out.reshape(shape)


def _equivalence_constants(spec: NormSpec) -> tuple[float, float]:
    thetas, hvals = _norm_on_circle(spec, 1024)

    def h(th):
        return eval_norm(spec, _unit(th))

    def neg_h(th):
        return -h(th)

    step = thetas[1] - thetas[0]
    i_max, i_min = np.argmax(hvals), np.argmin(hvals)
    _, k2 = _golden_max(h, thetas[i_max] - step, thetas[i_max] + step)
    _, mk1 = _golden_max(neg_h, thetas[i_min] - step, thetas[i_min] + step)
    k1 = min(float(-mk1), float(hvals.min()))
    k2 = max(float(k2), float(hvals.max()))
    return k1, k2


def bidual_check(spec: NormSpec, samples: int, seed: int = 0) -> float:
    """Max relative error of reconstructing ``H`` from ``H0`` on random vectors."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    xi = rng.normal(size=(samples, 2)) * rng.uniform(0.1, 10.0, size=(samples, 1))
    thetas = 2.0 * np.pi * np.arange(_SCAN) / _SCAN
    h0_grid = dual_norm(spec, _unit(thetas))
    scan = (xi[:, :1] * np.cos(thetas) + xi[:, 1:] * np.sin(thetas)) / h0_grid

    def ratio(th):
        return (xi[:, 0] * np.cos(th) + xi[:, 1] * np.sin(th)) / dual_norm(spec, _unit(th))

    _, rebuilt = _scan_max(ratio, thetas, scan)
    exact = eval_norm(spec, xi)
    return float(np.max(np.abs(rebuilt - exact) / exact))


# ---------------------------------------------------------------------------
# Wulff shapes


def wulff_points(spec: NormSpec, thetas, center=(0.0, 0.0), r: float = 1.0) -> np.ndarray:
    """Points of ``{H0(x - center) = r}`` along the rays of angles ``thetas``.

    ``H0`` is 1-homogeneous, so the crossing on the ray of unit direction ``d``
    sits at radial scale ``r / H0(d)``.
    """
    if not r > 0.0:
        raise ValueError("radius must be positive")
    dirs = _unit(np.asarray(thetas, dtype=float))
    h0 = np.atleast_1d(dual_norm(spec, dirs))
    if not np.all(np.isfinite(h0) & (h0 > 0.0)):
        raise WulffError("dual norm vanished on a ray direction")
    return np.asarray(center, float) + dirs * (r / h0)[:, None]


def wulff_boundary(spec: NormSpec, center, r: float, n: int) -> np.ndarray:
    """``n`` points of the Wulff shape of radius ``r``, uniformly spaced in angle.

    Any ``n >= 3`` is accepted; polygons used for measurements want ``n >= 8``.
    """
    if n < 3:
        raise ValueError("need at least 3 boundary points")
    thetas = 2.0 * np.pi * np.arange(n) / n
    return wulff_points(spec, thetas, center, r)


def wulff_arc(spec: NormSpec, theta_lo: float, theta_hi: float, n: int,
              r: float = 1.0, center=(0.0, 0.0), by_length: bool = False) -> np.ndarray:
    """Closed arc of the Wulff shape between two angles, endpoints included.

    With ``by_length`` the points are redistributed to near-uniform arc length
    (used by the mesher); otherwise they are uniform in angle.
    """
    thetas = np.linspace(theta_lo, theta_hi, n)
    if by_length:
        fine = np.linspace(theta_lo, theta_hi, 16 * n)
        pts = wulff_points(spec, fine, (0.0, 0.0), r)
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        thetas = np.interp(np.linspace(0.0, s[-1], n), s, fine)
        thetas[0], thetas[-1] = theta_lo, theta_hi
    return wulff_points(spec, thetas, center, r)


def wulff_arc_length(spec: NormSpec, theta_lo: float, theta_hi: float, r: float = 1.0) -> float:
    pts = wulff_points(spec, np.linspace(theta_lo, theta_hi, 2049), (0.0, 0.0), r)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def norm_hessian(spec: NormSpec, xi: np.ndarray, p: float, eps: float,
                 rel_step: float = 1e-6) -> np.ndarray:
    """Hessian of ``xi -> psi_eps(H(xi))`` by central differences of its gradient.

    Returns an ``(n, 2, 2)`` symmetric positive semidefinite array; used only to
    precondition the energy minimizer.
    """
    xi = np.atleast_2d(np.asarray(xi, float))
    scale = np.maximum(np.linalg.norm(xi, axis=1), max(eps, 1e-12))
    step = rel_step * scale

    def flux(z):
        h = eval_norm(spec, z)
        return ((eps * eps + h * h) ** ((p - 2.0) / 2.0) * h)[:, None] * _grad_unchecked(spec, z)

    hess = np.empty((len(xi), 2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = 1.0
        dz = step[:, None] * e
        hess[:, :, j] = (flux(xi + dz) - flux(xi - dz)) / (2.0 * step[:, None])
    hess = 0.5 * (hess + np.transpose(hess, (0, 2, 1)))
    w, v = np.linalg.eigh(hess)
    floor = 1e-12 * np.maximum(np.abs(w).max(axis=1, keepdims=True), 1e-300)
    w = np.maximum(w, floor)
    return np.einsum("nij,nj,nkj->nik", v, w, v)
