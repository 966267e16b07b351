"""Deterministic CSV / JSON / SVG writers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mesh import GAMMA0, Mesh


def _clean(value):
    """Convert numpy scalars/arrays to JSON types; non-finite floats become ``None``."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def write_json(path, data: dict) -> None:
    text = json.dumps(_clean(data), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Comma separated, dot decimal, full double precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _color(s: float) -> str:
    # blue (low) to red (high)
    s = min(max(s, 0.0), 1.0)
    r, g, b = int(40 + 200 * s), int(60 + 60 * (1 - abs(2 * s - 1))), int(220 - 180 * s)
    return f"#{r:02x}{g:02x}{b:02x}"


def write_contour_svg(path, mesh: Mesh, polylines: list, size: int = 600) -> None:
    """Domain outline (Γ₀ solid, Γ₁ dashed) with level polylines.

    ``polylines`` holds ``(t_fraction, points, closed)`` triples, where
    ``t_fraction`` in ``[0, 1]`` picks the stroke color.
    """
    V = mesh.vertices
    lo, hi = V.min(axis=0), V.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 0.04 * span
    scale = size / (span + 2 * pad)
    width = (hi[0] - lo[0] + 2 * pad) * scale
    height = (hi[1] - lo[1] + 2 * pad) * scale

    def xy(p):
        return (p[0] - lo[0] + pad) * scale, (hi[1] - p[1] + pad) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1f}" height="{height:.1f}" '
           f'viewBox="0 0 {width:.3f} {height:.3f}">',
           '<rect width="100%" height="100%" fill="white"/>']
    for (i, j), tag in zip(mesh.boundary_edges, mesh.edge_tags):
        (x0, y0), (x1, y1) = xy(V[i]), xy(V[j])
        dash = "" if tag == GAMMA0 else ' stroke-dasharray="4 3"'
        out.append(f'<line x1="{x0:.3f}" y1="{y0:.3f}" x2="{x1:.3f}" y2="{y1:.3f}" '
                   f'stroke="black" stroke-width="1.2"{dash}/>')
    for frac, pts, closed in polylines:
        coords = " ".join("{:.3f},{:.3f}".format(*xy(p)) for p in pts)
        tag = "polygon" if closed else "polyline"
        out.append(f'<{tag} points="{coords}" fill="none" stroke="{_color(frac)}" '
                   f'stroke-width="1"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
