"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same two functions with the same argument order and
must agree to round-off; ``tests/test_kernels.py`` checks that.
"""

import numpy as np


def _norm_grad(code, params, gx, gy):
    if code == 0:
        h = np.hypot(gx, gy)
        safe = np.where(h > 0.0, h, 1.0)
        return h, gx / safe, gy / safe
    if code == 1:
        a11, a12, a22 = params[0], params[1], params[2]
        ax = a11 * gx + a12 * gy
        ay = a12 * gx + a22 * gy
        h = np.sqrt(np.maximum(gx * ax + gy * ay, 0.0))
        safe = np.where(h > 0.0, h, 1.0)
        return h, ax / safe, ay / safe
    q, d2, scale = params[0], params[1] ** 2, params[2]
    r2 = gx * gx + gy * gy
    nz = r2 > 0.0
    s1 = np.where(nz, gx * gx + d2 * r2, 1.0)
    s2 = np.where(nz, gy * gy + d2 * r2, 1.0)
    S = s1 ** (q / 2) + s2 ** (q / 2)
    h = np.where(nz, S ** (1.0 / q) / scale, 0.0)
    c1 = s1 ** (q / 2 - 1.0)
    c2 = s2 ** (q / 2 - 1.0)
    pre = S ** (1.0 / q - 1.0) / scale
    hx = np.where(nz, pre * (c1 + d2 * (c1 + c2)) * gx, 0.0)
    hy = np.where(nz, pre * (c2 + d2 * (c1 + c2)) * gy, 0.0)
    return h, hx, hy


def psi_energy_grad(tri, dphi, W, u, code, params, p, eps):
    """Energy ``sum_T psi_eps(H(grad u_T)) W_T`` and its gradient in ``u``."""
    ue = u[tri]
    gx = np.einsum("mk,mk->m", ue, dphi[:, :, 0])
    gy = np.einsum("mk,mk->m", ue, dphi[:, :, 1])
    h, hx, hy = _norm_grad(code, params, gx, gy)
    if eps > 0.0:
        s = eps * eps + h * h
        psi = (s ** (p / 2.0) - eps**p) / p
        dpsi = h * s ** ((p - 2.0) / 2.0)
    else:
        psi = h**p / p
        dpsi = h ** (p - 1.0)
    energy = float(np.sum(psi * W))
    fx = dpsi * hx * W
    fy = dpsi * hy * W
    local = fx[:, None] * dphi[:, :, 0] + fy[:, None] * dphi[:, :, 1]
    grad = np.bincount(tri.ravel(), local.ravel(), minlength=len(u))
    return energy, grad


def level_crossings(tri, tri_edges, edges, xy, u, t):
    """Marching triangles for the level ``u = t`` of a P1 field.

    Returns ``(seg_tri, seg_edges, pts)``: owning triangle, the mesh edges the
    segment starts and ends on, and ``(x0, y0, x1, y1)``. Segments keep
    ``{u > t}`` on their left for counterclockwise triangles.
    """
    above = u[tri] > t
    n_above = above.sum(axis=1)
    cut = (n_above == 1) | (n_above == 2)
    idx = np.nonzero(cut)[0]
    ab = above[idx]
    # the odd vertex is the lone vertex above (n=1) or the lone vertex below (n=2)
    lone = np.where(n_above[idx] == 1, np.argmax(ab, axis=1), np.argmin(ab, axis=1))
    e_out = tri_edges[idx, lone]                # edge (lone, lone + 1)
    e_in = tri_edges[idx, (lone + 2) % 3]       # edge (lone - 1, lone)
    single_above = n_above[idx] == 1
    start = np.where(single_above, e_out, e_in)
    end = np.where(single_above, e_in, e_out)

    def crossing(e):
        i, j = edges[e, 0], edges[e, 1]
        s = (t - u[i]) / (u[j] - u[i])
        return xy[i] + s[:, None] * (xy[j] - xy[i])

    p0, p1 = crossing(start), crossing(end)
    return idx.astype(np.int64), np.stack([start, end], axis=1).astype(np.int64), np.hstack([p0, p1])
