"""Level curves and superlevel sets of P1 fields on a :class:`~wulff_lab.mesh.Mesh`."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels
from .cones import TRI_BARY, TRI_WEIGHTS, PolygonalSet, signed_area
from .mesh import GAMMA1, Mesh


class EmptyLevelError(ValueError):
    pass


@dataclass
class LevelSet:
    """Segments of ``{u = t}``, each inside one triangle, ``{u > t}`` on the left."""

    t: float
    tri: np.ndarray        # owning triangle per segment
    edge_ids: np.ndarray   # (k, 2) mesh edges at the start / end of each segment
    points: np.ndarray     # (k, 4) x0, y0, x1, y1
    polylines: list        # lists of segment indices in traversal order
    closed: list           # whether each polyline is a loop

    @property
    def lengths(self) -> np.ndarray:
        d = self.points[:, 2:] - self.points[:, :2]
        return np.hypot(d[:, 0], d[:, 1])

    def polyline_points(self, k: int) -> np.ndarray:
        idx = self.polylines[k]
        pts = self.points[idx, :2]
        if self.closed[k]:
            return pts
        return np.vstack([pts, self.points[idx[-1], 2:]])

    def component_lengths(self) -> np.ndarray:
        L = self.lengths
        return np.array([L[idx].sum() for idx in self.polylines])

    def keep_mask(self, min_length: float) -> np.ndarray:
        """Segments belonging to components at least ``min_length`` long."""
        keep = np.zeros(len(self.tri), dtype=bool)
        for idx, L in zip(self.polylines, self.component_lengths()):
            if L >= min_length:
                keep[idx] = True
        return keep


def _chain(edge_ids: np.ndarray) -> tuple[list, list]:
    """Join segments whose end edge is the next segment's start edge."""
    by_start = {int(e): k for k, e in enumerate(edge_ids[:, 0])}
    ends = set(int(e) for e in edge_ids[:, 1])
    used = np.zeros(len(edge_ids), dtype=bool)
    lines, closed = [], []
    # open polylines first: their first segment starts on a boundary edge
    starts = [k for k, e in enumerate(edge_ids[:, 0]) if int(e) not in ends]
    for first in starts + list(range(len(edge_ids))):
        if used[first]:
            continue
        line = []
        k = first
        while k is not None and not used[k]:
            used[k] = True
            line.append(k)
            k = by_start.get(int(edge_ids[k, 1]))
        lines.append(line)
        closed.append(k == first)
    return lines, closed


def extract_level_set(mesh: Mesh, u, t: float, backend: Optional[str] = None) -> LevelSet:
    """Marching triangles for ``u = t``.

    Raises
    ------
    EmptyLevelError
        If no triangle is cut (``t`` at or above the maximum, or below the minimum).
    """
    u = np.asarray(u, dtype=float)
    tri, eids, pts = kernels.level_crossings(mesh.triangles, mesh.tri_edges, mesh.edges,
                                             mesh.vertices, u, t, backend=backend)
    if len(tri) == 0:
        raise EmptyLevelError(f"level {t!r} does not meet the mesh")
    lines, closed = _chain(eids)
    return LevelSet(float(t), tri, eids, pts, lines, closed)


def superlevel_region(mesh: Mesh, u, t: float, level: Optional[LevelSet] = None) -> PolygonalSet:
    """Polygon of the largest component of ``{u > t}``.

    The boundary is the level curve joined with the pieces of the mesh
    boundary where ``u > t``; pieces on the cone boundary are tagged so that
    they do not count towards the perimeter.

    Raises
    ------
    EmptyLevelError
        If ``{u > t}`` is empty.
    """
    u = np.asarray(u, dtype=float)
    if not np.any(u > t):
        raise EmptyLevelError(f"superlevel set of {t!r} is empty")
    V = mesh.vertices
    # each piece: start node -> (end node, start point, on cone boundary)
    succ: dict = {}
    if np.any(u <= t):
        level = level if level is not None else extract_level_set(mesh, u, t)
        for k in range(len(level.tri)):
            a, b = level.edge_ids[k]
            succ[("e", int(a))] = (("e", int(b)), level.points[k, :2], False)
    edge_index = {(int(i), int(j)): k for k, (i, j) in enumerate(mesh.edges)}
    oriented = mesh.oriented_boundary_edges()
    key = np.sort(mesh.boundary_edges, axis=1)
    tag_of = {(int(i), int(j)): int(tg) for (i, j), tg in zip(key, mesh.edge_tags)}
    for i, j in oriented:
        i, j = int(i), int(j)
        ek = (min(i, j), max(i, j))
        on_cone = tag_of[ek] == GAMMA1
        ai, aj = u[i] > t, u[j] > t
        if ai and aj:
            succ[("v", i)] = (("v", j), V[i], on_cone)
        elif ai:
            succ[("v", i)] = (("e", edge_index[ek]), V[i], on_cone)
        elif aj:
            s = (t - u[i]) / (u[j] - u[i])
            succ[("e", edge_index[ek])] = (("v", j), V[i] + s * (V[j] - V[i]), on_cone)
    seen = set()
    best, best_area = None, -np.inf
    for start in succ:
        if start in seen:
            continue
        pts, tags = [], []
        node = start
        while node not in seen:
            seen.add(node)
            nxt, p, on = succ[node]
            pts.append(p)
            tags.append(on)
            node = nxt
            if node not in succ:
                break
        if node != start or len(pts) < 3:
            continue
        area = signed_area(np.array(pts))
        if area > best_area:
            best, best_area = (np.array(pts), np.array(tags)), area
    if best is None:
        raise EmptyLevelError(f"superlevel set of {t!r} has no closed boundary")
    return PolygonalSet(best[0], best[1])


# ---------------------------------------------------------------------------
# clipped quadrature


def _clip_pieces(mesh: Mesh, u: np.ndarray, t: float):
    """Sub-triangles covering ``{u > t}`` inside the cut triangles.

    Returns ``(owner, xy (k, 3, 2), uv (k, 3))`` plus the mask of triangles
    lying entirely above ``t``.
    """
    ut = u[mesh.triangles]
    above = ut > t
    na = above.sum(axis=1)
    full = na == 3
    cut = np.nonzero((na == 1) | (na == 2))[0]
    xy = mesh.vertices[mesh.triangles[cut]]
    uv = ut[cut]
    ab = above[cut]
    one = na[cut] == 1
    lone = np.where(one, np.argmax(ab, axis=1), np.argmin(ab, axis=1))
    r = np.arange(len(cut))
    k0, k1, k2 = lone, (lone + 1) % 3, (lone + 2) % 3
    P0, P1, P2 = xy[r, k0], xy[r, k1], xy[r, k2]
    U0, U1, U2 = uv[r, k0], uv[r, k1], uv[r, k2]
    s1 = ((t - U0) / (U1 - U0))[:, None]
    s2 = ((t - U0) / (U2 - U0))[:, None]
    A = P0 + s1 * (P1 - P0)   # crossing on edge lone -> lone+1
    B = P0 + s2 * (P2 - P0)   # crossing on edge lone -> lone+2
    tt = np.full(len(cut), t)
    # single vertex above: triangle (P0, A, B)
    o1 = np.nonzero(one)[0]
    xy1 = np.stack([P0[o1], A[o1], B[o1]], axis=1)
    uv1 = np.stack([U0[o1], tt[o1], tt[o1]], axis=1)
    # two above (lone vertex below): quadrilateral (A, P1, P2, B)
    o2 = np.nonzero(~one)[0]
    xy2a = np.stack([A[o2], P1[o2], P2[o2]], axis=1)
    uv2a = np.stack([tt[o2], U1[o2], U2[o2]], axis=1)
    xy2b = np.stack([A[o2], P2[o2], B[o2]], axis=1)
    uv2b = np.stack([tt[o2], U2[o2], tt[o2]], axis=1)
    owner = np.concatenate([cut[o1], cut[o2], cut[o2]])
    return (owner, np.concatenate([xy1, xy2a, xy2b]), np.concatenate([uv1, uv2a, uv2b]), full)


def _quad(xy: np.ndarray, uv: np.ndarray, fun, bary=TRI_BARY, weights=TRI_WEIGHTS) -> np.ndarray:
    e1, e2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = np.einsum("qk,nkd->nqd", bary, xy)
    uq = uv @ bary.T
    return area * (fun(pts, uq) @ weights)


def triangle_integrals(mesh: Mesh, u, fun: Callable, bary=TRI_BARY, weights=TRI_WEIGHTS) -> np.ndarray:
    """``∫_T fun(x, u_h(x))`` for every triangle."""
    u = np.asarray(u, dtype=float)
    return _quad(mesh.vertices[mesh.triangles], u[mesh.triangles], fun, bary, weights)


def superlevel_integral(mesh: Mesh, u, t: float, fun: Callable,
                        per_triangle: Optional[np.ndarray] = None,
                        bary=TRI_BARY, weights=TRI_WEIGHTS) -> float:
    """``∫_{u_h > t} fun(x, u_h(x)) dx`` with exact clipping of cut triangles.

    ``per_triangle`` may hold precomputed whole-triangle integrals of ``fun``.
    """
    u = np.asarray(u, dtype=float)
    if per_triangle is None:
        per_triangle = triangle_integrals(mesh, u, fun, bary, weights)
    _, xy, uv, full = _clip_pieces(mesh, u, t)
    part = float(_quad(xy, uv, fun, bary, weights).sum()) if len(xy) else 0.0
    return float(per_triangle[full].sum()) + part
