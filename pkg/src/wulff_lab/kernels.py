"""Backend selection for the element kernels.

The compiled extension is used when it imports; setting
``WULFF_LAB_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("WULFF_LAB_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py


def backend_module(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or the default)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def psi_energy_grad(tri, dphi, W, u, code, params, p, eps, backend=None):
    mod = backend_module(backend)
    return mod.psi_energy_grad(
        np.ascontiguousarray(tri, dtype=np.int64),
        np.ascontiguousarray(dphi, dtype=float),
        np.ascontiguousarray(W, dtype=float),
        np.ascontiguousarray(u, dtype=float),
        int(code), np.ascontiguousarray(params, dtype=float), float(p), float(eps),
    )


def level_crossings(tri, tri_edges, edges, xy, u, t, backend=None):
    mod = backend_module(backend)
    return mod.level_crossings(
        np.ascontiguousarray(tri, dtype=np.int64),
        np.ascontiguousarray(tri_edges, dtype=np.int64),
        np.ascontiguousarray(edges, dtype=np.int64),
        np.ascontiguousarray(xy, dtype=float),
        np.ascontiguousarray(u, dtype=float),
        float(t),
    )
