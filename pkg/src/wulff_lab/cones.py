"""Planar convex cones, homogeneous weights, and weighted volumes/perimeters."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from shapely.geometry import LinearRing

from .finsler import NormSpec, eval_norm

FULL = "full"
HALF = "half"
SECTOR = "sector"

CONSTANT = "constant"
MONOMIAL = "monomial"


class GeometryError(ValueError):
    """Invalid geometric input (non-simple polygon, point outside the cone...)."""


# ---------------------------------------------------------------------------
# cones


@dataclass(frozen=True)
class ConeSpec:
    """An open convex cone with vertex at the origin.

    ``half`` cones are described by the angle of their inner normal, ``sector``
    cones by the angles of their two bounding half-lines. A sector of opening
    exactly ``pi`` is a half-plane and is stored as one.
    """

    kind: str
    normal_angle: float = np.pi / 2
    theta1: float = 0.0
    theta2: float = np.pi / 2

    def __post_init__(self):
        if self.kind == SECTOR:
            opening = self.theta2 - self.theta1
            if not opening > 0.0:
                raise GeometryError("sector needs theta1 < theta2")
            if opening > np.pi + 1e-12:
                raise GeometryError("sector opening exceeds pi: cone would not be convex")
            if abs(opening - np.pi) <= 1e-12:
                object.__setattr__(self, "kind", HALF)
                object.__setattr__(self, "normal_angle", 0.5 * (self.theta1 + self.theta2))
        elif self.kind not in (FULL, HALF):
            raise GeometryError(f"unknown cone kind {self.kind!r}")
        if self.kind == HALF:
            object.__setattr__(self, "theta1", self.normal_angle - np.pi / 2)
            object.__setattr__(self, "theta2", self.normal_angle + np.pi / 2)
        elif self.kind == FULL:
            object.__setattr__(self, "theta1", 0.0)
            object.__setattr__(self, "theta2", 2.0 * np.pi)

    @classmethod
    def full(cls) -> "ConeSpec":
        return cls(FULL)

    @classmethod
    def half(cls, normal_angle: float = np.pi / 2) -> "ConeSpec":
        return cls(HALF, normal_angle=float(normal_angle))

    @classmethod
    def sector(cls, theta1: float, theta2: float) -> "ConeSpec":
        return cls(SECTOR, theta1=float(theta1), theta2=float(theta2))

    @classmethod
    def quadrant(cls) -> "ConeSpec":
        return cls.sector(0.0, np.pi / 2)

    @property
    def opening(self) -> float:
        return self.theta2 - self.theta1

    @property
    def k(self) -> int:
        return {FULL: 2, HALF: 1, SECTOR: 0}[self.kind]

    def to_dict(self) -> dict:
        if self.kind == FULL:
            return {"kind": FULL}
        if self.kind == HALF:
            return {"kind": HALF, "normal_angle": self.normal_angle}
        return {"kind": SECTOR, "theta1": self.theta1, "theta2": self.theta2}


def _dir(theta):
    return np.array([np.cos(theta), np.sin(theta)])


def cone_contains(cone: ConeSpec, x) -> np.ndarray | bool:
    """True where ``x`` lies in the open cone."""
    x = np.asarray(x, dtype=float)
    if cone.kind == FULL:
        out = np.ones(x.shape[:-1], dtype=bool)
    elif cone.kind == HALF:
        out = x @ _dir(cone.normal_angle) > 0.0
    else:
        d1, d2 = _dir(cone.theta1), _dir(cone.theta2)
        c1 = d1[0] * x[..., 1] - d1[1] * x[..., 0]
        c2 = x[..., 0] * d2[1] - x[..., 1] * d2[0]
        out = (c1 > 0.0) & (c2 > 0.0)
    return out[()] if np.ndim(out) == 0 else out


def boundary_distance(cone: ConeSpec, x) -> np.ndarray:
    """Euclidean distance from ``x`` to the boundary of the cone (``inf`` for the plane)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if cone.kind == FULL:
        return np.full(len(x), np.inf)
    if cone.kind == HALF:
        return np.abs(x @ _dir(cone.normal_angle))
    out = np.full(len(x), np.inf)
    for th in (cone.theta1, cone.theta2):
        d = _dir(th)
        s = np.maximum(x @ d, 0.0)
        out = np.minimum(out, np.linalg.norm(x - s[:, None] * d, axis=1))
    return out


def outside_distance(cone: ConeSpec, x) -> np.ndarray:
    """Zero inside the closed cone, distance to the boundary outside."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    inside = np.atleast_1d(cone_contains(cone, x))
    dist = boundary_distance(cone, x)
    return np.where(inside, 0.0, np.where(np.isinf(dist), 0.0, dist))


@dataclass(frozen=True)
class Lineality:
    """Splitting of a cone as ``R^k x (cone without lines)``.

    ``rotation`` maps the cone so that its line factor (if any) is the first
    axis and the cone becomes ``{y > 0}``; ``basis`` spans the line factor in the
    original coordinates and is the space where admissible centers live.
    """

    k: int
    rotation: np.ndarray
    basis: np.ndarray


def lineality_decomposition(cone: ConeSpec) -> Lineality:
    if cone.kind == FULL:
        return Lineality(2, np.eye(2), np.eye(2))
    if cone.kind == SECTOR:
        return Lineality(0, np.eye(2), np.zeros((0, 2)))
    # rotate the inner normal onto e2; the line direction lands on e1
    phi = np.pi / 2 - cone.normal_angle
    c, s = np.cos(phi), np.sin(phi)
    rot = np.array([[c, -s], [s, c]])
    rot[np.abs(rot) < 1e-15] = 0.0
    line = rot.T @ np.array([1.0, 0.0])
    return Lineality(1, rot, line[None, :])


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightSpec:
    """``w = 1`` or ``w = x^a y^b`` (degree ``lam = a + b``)."""

    kind: str = CONSTANT
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind == CONSTANT:
            object.__setattr__(self, "a", 0.0)
            object.__setattr__(self, "b", 0.0)
        elif self.kind == MONOMIAL:
            if self.a < 0.0 or self.b < 0.0:
                raise ValueError("monomial exponents must be nonnegative")
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")

    @classmethod
    def constant(cls) -> "WeightSpec":
        return cls(CONSTANT)

    @classmethod
    def monomial(cls, a: float, b: float) -> "WeightSpec":
        return cls(MONOMIAL, float(a), float(b))

    @property
    def lam(self) -> float:
        return self.a + self.b

    def __call__(self, x):
        return _weight_raw(self, x)

    def to_dict(self) -> dict:
        if self.kind == CONSTANT:
            return {"kind": CONSTANT}
        return {"kind": MONOMIAL, "a": self.a, "b": self.b}


def _weight_raw(w: WeightSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if w.kind == CONSTANT:
        return np.ones(x.shape[:-1])
    # clamp round-off negatives on the cone boundary
    px = np.maximum(x[..., 0], 0.0) if w.a > 0 else x[..., 0]
    py = np.maximum(x[..., 1], 0.0) if w.b > 0 else x[..., 1]
    out = np.ones(x.shape[:-1])
    if w.a > 0:
        out = out * px**w.a
    if w.b > 0:
        out = out * py**w.b
    return out


def check_weight_on_cone(w: WeightSpec, cone: ConeSpec) -> None:
    """Reject monomial weights on cones where they would change sign."""
    if w.kind == CONSTANT:
        return
    lo, hi = cone.theta1, cone.theta2
    if cone.kind == FULL:
        raise GeometryError("monomial weights are not admissible on the full plane")
    angles = np.linspace(lo, hi, 721)
    d = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    tol = 1e-12
    if w.a > 0 and np.any(d[:, 0] < -tol):
        raise GeometryError("weight x^a needs the cone inside {x >= 0}")
    if w.b > 0 and np.any(d[:, 1] < -tol):
        raise GeometryError("weight y^b needs the cone inside {y >= 0}")


def weight_eval(w: WeightSpec, x, cone: Optional[ConeSpec] = None, tol: float = 1e-12):
    """Evaluate ``w`` at points of the closed cone.

    Raises
    ------
    GeometryError
        If a point is outside the closed cone (or outside the quadrant sides
        on which a monomial is defined).
    """
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 2)
    if w.kind == MONOMIAL:
        bad = (w.a > 0) & (pts[:, 0] < -tol) | (w.b > 0) & (pts[:, 1] < -tol)
        if np.any(bad):
            raise GeometryError("point outside the domain of the monomial weight")
    if cone is not None and np.any(outside_distance(cone, pts) > tol * (1.0 + np.abs(pts).max())):
        raise GeometryError("point outside the closed cone")
    out = _weight_raw(w, x)
    return out[()] if np.ndim(out) == 0 else out


def concavity_certificate(w: WeightSpec, cone: ConeSpec, samples: int, seed: int = 0) -> float:
    """Worst midpoint-concavity slack of ``w^(1/lam)`` over random pairs in the cone."""
    if w.lam <= 0.0:
        raise ValueError("concavity certificate needs lam > 0")
    check_weight_on_cone(w, cone)
    rng = np.random.default_rng(seed)

    def draw(n):
        th = rng.uniform(cone.theta1, cone.theta2, n)
        r = rng.uniform(0.0, 1.0, n)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)

    x, y = draw(samples), draw(samples)
    g = lambda z: _weight_raw(w, z) ** (1.0 / w.lam)  # noqa: E731
    slack = g(0.5 * (x + y)) - 0.5 * (g(x) + g(y))
    return float(slack.min())


# ---------------------------------------------------------------------------
# quadrature


def _dunavant5():
    s = np.sqrt(15.0)
    a1, b1 = (6.0 - s) / 21.0, (9.0 + 2.0 * s) / 21.0
    a2, b2 = (6.0 + s) / 21.0, (9.0 - 2.0 * s) / 21.0
    w1, w2 = (155.0 - s) / 1200.0, (155.0 + s) / 1200.0
    bary = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [b1, a1, a1], [a1, b1, a1], [a1, a1, b1],
        [b2, a2, a2], [a2, b2, a2], [a2, a2, b2],
    ])
    weights = np.array([9.0 / 40.0, w1, w1, w1, w2, w2, w2])
    return bary, weights


TRI_BARY, TRI_WEIGHTS = _dunavant5()


def _refined_rule(levels: int):
    """Composite 7-point rule on ``4**levels`` uniform subtriangles."""
    tris = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for T in tris:
            m01, m12, m20 = (T[0] + T[1]) / 2, (T[1] + T[2]) / 2, (T[2] + T[0]) / 2
            nxt += [np.array([T[0], m01, m20]), np.array([m01, T[1], m12]),
                    np.array([m20, m12, T[2]]), np.array([m01, m12, m20])]
        tris = nxt
    bary = np.concatenate([TRI_BARY @ T for T in tris])
    weights = np.tile(TRI_WEIGHTS, len(tris)) / len(tris)
    return bary, weights


REFINED_BARY, REFINED_WEIGHTS = _refined_rule(2)


def integrate_triangles(tri_xy: np.ndarray, fun, bary=TRI_BARY, weights=TRI_WEIGHTS) -> np.ndarray:
    """Per-triangle integrals of ``fun(points)`` for triangles ``(n, 3, 2)``.

    Signed: clockwise triangles contribute negatively.
    """
    tri_xy = np.asarray(tri_xy, dtype=float)
    e1 = tri_xy[:, 1] - tri_xy[:, 0]
    e2 = tri_xy[:, 2] - tri_xy[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = np.einsum("qk,nkd->nqd", bary, tri_xy)
    vals = fun(pts)
    return area * (vals @ weights)


# ---------------------------------------------------------------------------
# polygons


@dataclass(frozen=True)
class PolygonalSet:
    """A simple counterclockwise polygon with per-edge tags.

    ``on_boundary[i]`` marks edge ``vertices[i] -> vertices[i+1]`` as lying on
    the cone boundary; such edges carry no perimeter.
    """

    vertices: np.ndarray
    on_boundary: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        tags = self.on_boundary
        tags = np.zeros(len(v), dtype=bool) if tags is None else np.asarray(tags, dtype=bool)
        if tags.shape != (len(v),):
            raise GeometryError("one tag per edge required")
        if signed_area(v) < 0.0:
            # reverse orientation; edge i -> i+1 becomes edge (n-2-i)
            v = v[::-1].copy()
            tags = np.roll(tags[::-1], -1)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "on_boundary", tags)

    @classmethod
    def from_vertices(cls, vertices, cone: ConeSpec) -> "PolygonalSet":
        v = np.asarray(vertices, dtype=float)
        if signed_area(v) < 0.0:
            v = v[::-1].copy()
        return cls(v, tag_edges(v, cone))

    @property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def scaled(self, t: float) -> "PolygonalSet":
        return PolygonalSet(self.vertices * t, self.on_boundary.copy())

    def diameter(self) -> float:
        v = self.vertices
        return float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))


def signed_area(v) -> float:
    v = np.asarray(v, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def tag_edges(vertices, cone: ConeSpec, rel_tol: float = 1e-9) -> np.ndarray:
    """Tag edges whose endpoints and midpoint all sit on the cone boundary."""
    v = np.asarray(vertices, dtype=float)
    if cone.kind == FULL:
        return np.zeros(len(v), dtype=bool)
    diam = np.linalg.norm(v.max(axis=0) - v.min(axis=0))
    tol = rel_tol * max(diam, 1e-300)
    a, b = v, np.roll(v, -1, axis=0)
    on = (boundary_distance(cone, a) <= tol) & (boundary_distance(cone, b) <= tol)
    return on & (boundary_distance(cone, 0.5 * (a + b)) <= tol)


def check_simple(E: PolygonalSet) -> None:
    v = E.vertices
    keep = np.ones(len(v), dtype=bool)
    keep[1:] = np.any(np.diff(v, axis=0) != 0.0, axis=1)
    ring = LinearRing(v[keep])
    if not ring.is_simple:
        raise GeometryError("polygon is not simple")


def check_inside(E: PolygonalSet, cone: ConeSpec, rel_tol: float = 1e-9) -> None:
    tol = rel_tol * max(E.diameter(), 1e-300)
    if np.any(outside_distance(cone, E.vertices) > tol):
        raise GeometryError("polygon leaves the closed cone")


def _fan(E: PolygonalSet) -> np.ndarray:
    a, b = E.edges
    o = np.zeros_like(a)
    return np.stack([o, a, b], axis=1)


def weighted_volume(w: WeightSpec, E: PolygonalSet, cone: ConeSpec, validate: bool = True) -> float:
    """``w(E)`` by a signed fan from the cone vertex and refined 7-point quadrature.

    The fan is anchored at the origin, which belongs to the closed cone, so every
    fan triangle stays where ``w`` is defined.
    """
    if validate:
        check_simple(E)
        check_inside(E, cone)
    tris = _fan(E)
    if w.kind == CONSTANT:
        return signed_area(E.vertices)
    vals = integrate_triangles(tris, lambda p: _weight_raw(w, p), REFINED_BARY, REFINED_WEIGHTS)
    return float(vals.sum())


def edge_normals(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outer unit normals and lengths of counterclockwise edges ``a -> b``."""
    e = b - a
    length = np.linalg.norm(e, axis=1)
    safe = np.where(length > 0.0, length, 1.0)
    nu = np.stack([e[:, 1], -e[:, 0]], axis=1) / safe[:, None]
    return nu, length


def weighted_perimeter(H: NormSpec, w: WeightSpec, E: PolygonalSet, cone: ConeSpec,
                       validate: bool = True) -> float:
    """``P_{w,H}(E; cone)``: sum over interior edges of ``H(nu) w(mid) |edge|``."""
    if validate:
        check_simple(E)
        check_inside(E, cone)
    a, b = E.edges
    keep = ~E.on_boundary
    nu, length = edge_normals(a[keep], b[keep])
    mid = 0.5 * (a[keep] + b[keep])
    return float(np.sum(eval_norm(H, nu) * _weight_raw(w, mid) * length))


def effective_dimension(w: WeightSpec) -> float:
    return 2.0 + w.lam


# ---------------------------------------------------------------------------
# CSV


def save_polygon_csv(path, E: PolygonalSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y"])
        for x, y in E.vertices:
            writer.writerow([repr(float(x)), repr(float(y))])


def load_polygon_csv(path, cone: ConeSpec) -> PolygonalSet:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise GeometryError("polygon CSV must start with header 'x,y'")
    v = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r], dtype=float)
    return PolygonalSet.from_vertices(v, cone)
