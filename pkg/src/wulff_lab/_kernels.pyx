# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element loops; numpy twins live in ``_kernels_py.py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, cbrt

cnp.import_array()


cdef inline double _fpow(double x, double a) noexcept nogil:
    """``x**a`` with sqrt/cbrt shortcuts for the exponents the solver meets most."""
    cdef double r
    if a == 1.0:
        return x
    if a == 0.5:
        return sqrt(x)
    if a == 2.0:
        return x * x
    if a == 1.5:
        return x * sqrt(x)
    if a == -0.5:
        return 1.0 / sqrt(x)
    if a == -0.25:
        return 1.0 / sqrt(sqrt(x))
    if a == 0.25:
        return sqrt(sqrt(x))
    if a == 1.0 / 3.0:
        return cbrt(x)
    if a == 0.0:
        return 1.0
    return pow(x, a)


cdef inline void _norm_grad(int code, double[::1] prm, double gx, double gy,
                            double* h, double* hx, double* hy) noexcept nogil:
    cdef double ax, ay, q, d2, scale, r2, s1, s2, S, c1, c2, pre, hh
    if code == 0:
        hh = sqrt(gx * gx + gy * gy)
        h[0] = hh
        if hh > 0.0:
            hx[0] = gx / hh
            hy[0] = gy / hh
        else:
            hx[0] = 0.0
            hy[0] = 0.0
    elif code == 1:
        ax = prm[0] * gx + prm[1] * gy
        ay = prm[1] * gx + prm[2] * gy
        hh = gx * ax + gy * ay
        hh = sqrt(hh) if hh > 0.0 else 0.0
        h[0] = hh
        if hh > 0.0:
            hx[0] = ax / hh
            hy[0] = ay / hh
        else:
            hx[0] = 0.0
            hy[0] = 0.0
    else:
        q = prm[0]
        d2 = prm[1] * prm[1]
        scale = prm[2]
        r2 = gx * gx + gy * gy
        if r2 > 0.0:
            s1 = gx * gx + d2 * r2
            s2 = gy * gy + d2 * r2
            # three pow calls: the other powers follow by division
            c1 = _fpow(s1, q / 2)
            c2 = _fpow(s2, q / 2)
            S = c1 + c2
            hh = _fpow(S, 1.0 / q)
            h[0] = hh / scale
            c1 = c1 / s1
            c2 = c2 / s2
            pre = hh / (S * scale)
            hx[0] = pre * (c1 + d2 * (c1 + c2)) * gx
            hy[0] = pre * (c2 + d2 * (c1 + c2)) * gy
        else:
            h[0] = 0.0
            hx[0] = 0.0
            hy[0] = 0.0


def psi_energy_grad(cnp.int64_t[:, ::1] tri, double[:, :, ::1] dphi, double[::1] W,
                    double[::1] u, int code, double[::1] params, double p, double eps):
    cdef Py_ssize_t m = tri.shape[0], n = u.shape[0], e, k
    cdef double gx, gy, h, hx, hy, s, sp, psi, dpsi, fx, fy, energy = 0.0
    cdef double epsp = pow(eps, p)
    cdef double half = (p - 2.0) / 2.0
    cdef bint quadratic = p == 2.0
    grad_arr = np.zeros(n)
    cdef double[::1] grad = grad_arr
    with nogil:
        for e in range(m):
            gx = 0.0
            gy = 0.0
            for k in range(3):
                gx += u[tri[e, k]] * dphi[e, k, 0]
                gy += u[tri[e, k]] * dphi[e, k, 1]
            _norm_grad(code, params, gx, gy, &h, &hx, &hy)
            if quadratic:
                psi = 0.5 * h * h
                dpsi = h
            elif eps > 0.0:
                s = eps * eps + h * h
                sp = _fpow(s, half)
                psi = (sp * s - epsp) / p
                dpsi = h * sp
            elif h > 0.0:
                sp = _fpow(h, p - 2.0)
                psi = sp * h * h / p
                dpsi = sp * h
            else:
                psi = 0.0
                dpsi = 0.0
            energy += psi * W[e]
            fx = dpsi * hx * W[e]
            fy = dpsi * hy * W[e]
            for k in range(3):
                grad[tri[e, k]] += fx * dphi[e, k, 0] + fy * dphi[e, k, 1]
    return energy, grad_arr


def level_crossings(cnp.int64_t[:, ::1] tri, cnp.int64_t[:, ::1] tri_edges,
                    cnp.int64_t[:, ::1] edges, double[:, ::1] xy, double[::1] u, double t):
    cdef Py_ssize_t m = tri.shape[0], e, k, cnt = 0, lone
    cdef int na, start, end, side
    cdef int ab[3]
    cdef Py_ssize_t i, j
    cdef double s
    seg_tri_arr = np.empty(m, dtype=np.int64)
    seg_edges_arr = np.empty((m, 2), dtype=np.int64)
    pts_arr = np.empty((m, 4), dtype=np.float64)
    cdef cnp.int64_t[::1] seg_tri = seg_tri_arr
    cdef cnp.int64_t[:, ::1] seg_edges = seg_edges_arr
    cdef double[:, ::1] pts = pts_arr
    with nogil:
        for e in range(m):
            na = 0
            for k in range(3):
                ab[k] = 1 if u[tri[e, k]] > t else 0
                na += ab[k]
            if na == 0 or na == 3:
                continue
            lone = 0
            for k in range(3):
                if (na == 1 and ab[k] == 1) or (na == 2 and ab[k] == 0):
                    lone = k
                    break
            if na == 1:
                start = <int>tri_edges[e, lone]
                end = <int>tri_edges[e, (lone + 2) % 3]
            else:
                start = <int>tri_edges[e, (lone + 2) % 3]
                end = <int>tri_edges[e, lone]
            seg_tri[cnt] = e
            seg_edges[cnt, 0] = start
            seg_edges[cnt, 1] = end
            for side in range(2):
                k = start if side == 0 else end
                i = edges[k, 0]
                j = edges[k, 1]
                s = (t - u[i]) / (u[j] - u[i])
                pts[cnt, 2 * side] = xy[i, 0] + s * (xy[j, 0] - xy[i, 0])
                pts[cnt, 2 * side + 1] = xy[i, 1] + s * (xy[j, 1] - xy[i, 1])
            cnt += 1
    return seg_tri_arr[:cnt], seg_edges_arr[:cnt], pts_arr[:cnt]
