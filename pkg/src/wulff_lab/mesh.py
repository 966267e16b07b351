"""Triangulations of ``cone ∩ B_R`` with Dirichlet / conormal boundary tags."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import triangle

from .cones import FULL, ConeSpec, boundary_distance
from .finsler import NormSpec, dual_norm, wulff_arc, wulff_arc_length

GAMMA0 = 0  # cone ∩ ∂Ω: Dirichlet
GAMMA1 = 1  # ∂cone ∩ Ω: natural (conormal) condition
_ARC, _SIDE = 2, 3
_TAG_NAMES = {GAMMA0: "gamma0", GAMMA1: "gamma1"}


class MeshError(RuntimeError):
    pass


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    h: float
    R: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        tri = np.asarray(self.triangles, dtype=np.int64)
        a, b, c = (self.vertices[tri[:, i]] for i in range(3))
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        flip = det < 0.0
        tri[flip] = tri[flip][:, [0, 2, 1]]
        self.triangles = np.ascontiguousarray(tri)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.edge_tags = np.asarray(self.edge_tags, dtype=np.int64)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def dphi(self) -> np.ndarray:
        """Constant gradients of the three hat functions on each triangle, ``(m, 3, 2)``."""
        v = self.vertices[self.triangles]
        out = np.empty((len(v), 3, 2))
        two_a = 2.0 * self.areas
        for k in range(3):
            p1, p2 = v[:, (k + 1) % 3], v[:, (k + 2) % 3]
            out[:, k, 0] = (p1[:, 1] - p2[:, 1]) / two_a
            out[:, k, 1] = (p2[:, 0] - p1[:, 0]) / two_a
        return out

    @cached_property
    def _edge_data(self):
        tri = self.triangles
        local = np.stack([tri, np.roll(tri, -1, axis=1)], axis=2).reshape(-1, 2)
        key = np.sort(local, axis=1)
        edges, inv = np.unique(key, axis=0, return_inverse=True)
        return edges.astype(np.int64), inv.reshape(-1, 3).astype(np.int64)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges ``(i, j)`` with ``i < j``."""
        return self._edge_data[0]

    @property
    def tri_edges(self) -> np.ndarray:
        """``tri_edges[t, k]`` is the edge joining local vertices ``k`` and ``k + 1``."""
        return self._edge_data[1]

    @cached_property
    def edge_triangles(self) -> np.ndarray:
        """Triangles adjacent to each edge; ``-1`` pads boundary edges."""
        out = np.full((len(self.edges), 2), -1, dtype=np.int64)
        flat = self.tri_edges.ravel()
        owner = np.repeat(np.arange(len(self.triangles)), 3)
        order = np.argsort(flat, kind="stable")
        flat, owner = flat[order], owner[order]
        first = np.ones(len(flat), dtype=bool)
        first[1:] = flat[1:] != flat[:-1]
        out[flat[first], 0] = owner[first]
        out[flat[~first], 1] = owner[~first]
        return out

    @cached_property
    def dirichlet(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges[self.edge_tags == GAMMA0].ravel()] = True
        return mask

    @property
    def free(self) -> np.ndarray:
        return ~self.dirichlet

    def min_angle(self) -> float:
        return float(np.degrees(triangle_angles(self.vertices, self.triangles).min()))

    def boundary_edge_owner(self) -> np.ndarray:
        """Triangle owning each boundary edge (same order as ``boundary_edges``)."""
        key = np.sort(self.boundary_edges, axis=1)
        lookup = {tuple(e): i for i, e in enumerate(self.edges.tolist())}
        idx = np.array([lookup[tuple(e)] for e in key.tolist()], dtype=np.int64)
        return self.edge_triangles[idx, 0]

    def oriented_boundary_edges(self) -> np.ndarray:
        """Boundary edges oriented counterclockwise (domain on the left)."""
        out = self.boundary_edges.copy()
        owner = self.boundary_edge_owner()
        for n, (i, j) in enumerate(out):
            t = self.triangles[owner[n]]
            k = int(np.nonzero(t == i)[0][0])
            if t[(k + 1) % 3] != j:
                out[n] = (j, i)
        return out

    def rotated(self, angle: float) -> "Mesh":
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        return Mesh(self.vertices @ rot.T, self.triangles.copy(), self.boundary_edges.copy(),
                    self.edge_tags.copy(), self.h, self.R, dict(self.meta))


def triangle_angles(vertices, triangles) -> np.ndarray:
    v = np.asarray(vertices)[np.asarray(triangles)]
    out = np.empty((len(v), 3))
    for k in range(3):
        a = v[:, (k + 1) % 3] - v[:, k]
        b = v[:, (k + 2) % 3] - v[:, k]
        cosang = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out[:, k] = np.arccos(np.clip(cosang, -1.0, 1.0))
    return out


def _side_points(length: float, h: float, graded_radius: float) -> np.ndarray:
    """Distances along a straight side, spacing ``h/2`` within ``graded_radius`` of 0."""
    if graded_radius > 0.0:
        g = min(graded_radius, length)
        near = np.linspace(0.0, g, max(1, int(np.ceil(g / (0.5 * h)))) + 1)
        if g >= length:
            return near
        far = np.linspace(g, length, max(1, int(np.ceil((length - g) / h))) + 1)
        return np.concatenate([near, far[1:]])
    return np.linspace(0.0, length, max(1, int(np.ceil(length / h))) + 1)


def generate_mesh(cone: ConeSpec, H: NormSpec, R: float, h: float, grading: bool = True,
                  min_angle: float = 20.0) -> Mesh:
    """Quality triangulation of ``cone ∩ {H0 < R}``.

    The curved part is sampled on the Wulff shape itself, and any vertex the
    mesher adds on it is moved radially back, so curved boundary vertices
    satisfy ``H0 = R`` to round-off. When
    the cone has a vertex, triangles within ``R/8`` of it are refined once more.

    Raises
    ------
    MeshError
        If ``h > R/4`` or the triangulation violates ``min_angle``.
    """
    if not 0.0 < h <= R / 4.0:
        raise MeshError("mesh size must satisfy 0 < h <= R/4")
    graded = grading and cone.kind != FULL
    g_rad = R / 8.0 if graded else 0.0
    if cone.kind == FULL:
        L = wulff_arc_length(H, 0.0, 2.0 * np.pi, R)
        n = max(16, int(np.ceil(L / h)))
        pts = wulff_arc(H, 0.0, 2.0 * np.pi, n + 1, r=R, by_length=True)[:-1]
    else:
        L = wulff_arc_length(H, cone.theta1, cone.theta2, R)
        n = max(4, int(np.ceil(L / h)))
        arc = wulff_arc(H, cone.theta1, cone.theta2, n + 1, r=R, by_length=True)
        d1 = np.array([np.cos(cone.theta1), np.sin(cone.theta1)])
        d2 = np.array([np.cos(cone.theta2), np.sin(cone.theta2)])
        l1 = float(np.linalg.norm(arc[0]))
        l2 = float(np.linalg.norm(arc[-1]))
        s1 = _side_points(l1, h, g_rad)[:-1]            # origin ... before arc start
        s2 = _side_points(l2, h, g_rad)[::-1][1:-1]      # after arc end ... before origin
        pts = np.vstack([s1[:, None] * d1, arc, s2[:, None] * d2])
    nb = len(pts)
    seg = np.stack([np.arange(nb), (np.arange(nb) + 1) % nb], axis=1)
    # marker 2: chords of the Wulff arc, marker 3: straight sides on the cone boundary
    if cone.kind == FULL:
        markers = np.full(nb, _ARC)
    else:
        markers = np.full(nb, _SIDE)
        markers[len(s1):len(s1) + n] = _ARC
    area = np.sqrt(3.0) / 4.0 * h * h
    # Triangle's quality refinement is only guaranteed to terminate up to about
    # 33.8 degrees; larger requests are checked after meshing instead
    flags = f"pq{min(max(min_angle, 30.0), 33.0):g}"
    out = triangle.triangulate({"vertices": pts, "segments": seg, "segment_markers": markers},
                               f"{flags}a{area:.20f}")
    if graded:
        V, T = out["vertices"], out["triangles"]
        cen = V[T].mean(axis=1)
        limit = np.where(np.linalg.norm(cen, axis=1) < g_rad, area / 4.0, area)
        out = triangle.triangulate(
            {"vertices": V, "triangles": T, "segments": out["segments"],
             "segment_markers": out["segment_markers"], "vertex_markers": out["vertex_markers"],
             "triangle_max_area": limit}, f"r{flags}a")
    V = np.asarray(out["vertices"], dtype=float)
    T = np.asarray(out["triangles"], dtype=np.int64)
    if not np.allclose(V[:nb], pts, rtol=0.0, atol=1e-15):
        raise MeshError("mesher moved boundary vertices")
    V[:nb] = pts
    # Steiner points inserted on arc chords are pushed radially onto the Wulff shape
    vm = np.asarray(out["vertex_markers"]).ravel()
    extra = np.nonzero(vm[nb:] == _ARC)[0] + nb
    if len(extra):
        V[extra] *= (R / dual_norm(H, V[extra]))[:, None]
    mesh = _finish(V, T, cone, h, R)
    mesh.meta.update({"cone": cone.to_dict(), "norm": H.to_dict(), "graded": graded})
    if mesh.min_angle() < min_angle:
        raise MeshError(f"minimum angle {mesh.min_angle():.2f} below {min_angle}")
    return mesh


def _finish(V, T, cone: ConeSpec, h: float, R: float) -> Mesh:
    local = np.stack([T, np.roll(T, -1, axis=1)], axis=2).reshape(-1, 2)
    key = np.sort(local, axis=1)
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    bnd = uniq[counts == 1]
    tol = 1e-9 * 2.0 * R * max(1.0, np.abs(V).max())
    if cone.kind == FULL:
        tags = np.full(len(bnd), GAMMA0)
    else:
        on = (boundary_distance(cone, V[bnd[:, 0]]) <= tol) & (boundary_distance(cone, V[bnd[:, 1]]) <= tol)
        on &= boundary_distance(cone, 0.5 * (V[bnd[:, 0]] + V[bnd[:, 1]])) <= tol
        tags = np.where(on, GAMMA1, GAMMA0)
    return Mesh(V, T, bnd, tags, h, R)


# ---------------------------------------------------------------------------
# CSV round trip


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != header:
        raise MeshError(f"{path}: expected header {','.join(header)}")
    return [r for r in rows[1:] if r]


def save_mesh(directory, mesh: Mesh) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_rows(d / "vertices.csv", ["x", "y"],
                [[repr(float(x)), repr(float(y))] for x, y in mesh.vertices])
    _write_rows(d / "triangles.csv", ["a", "b", "c"], mesh.triangles.tolist())
    _write_rows(d / "edges.csv", ["i", "j", "tag"],
                [[int(i), int(j), _TAG_NAMES[int(t)]]
                 for (i, j), t in zip(mesh.boundary_edges, mesh.edge_tags)])


def load_mesh(directory, h: float, R: float = 1.0) -> Mesh:
    d = Path(directory)
    V = np.array([[float(a), float(b)] for a, b in _read_rows(d / "vertices.csv", ["x", "y"])])
    T = np.array([[int(c) for c in r] for r in _read_rows(d / "triangles.csv", ["a", "b", "c"])],
                 dtype=np.int64)
    names = {v: k for k, v in _TAG_NAMES.items()}
    rows = _read_rows(d / "edges.csv", ["i", "j", "tag"])
    E = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64)
    tags = np.array([names[r[2].strip()] for r in rows], dtype=np.int64)
    return Mesh(V, T, E, tags, h, R)
