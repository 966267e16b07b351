import json
import os
import subprocess
import sys
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ELLIPSE, EUCLID, SMOOTH
from wulff_lab import kernels
from wulff_lab.cones import ConeSpec
from wulff_lab.finsler import NormSpec
from wulff_lab.mesh import generate_mesh

needs_compiled = pytest.mark.skipif(kernels.BACKEND != "cython",
                                    reason="compiled kernels not built")


@lru_cache(maxsize=None)
def disc_mesh():
    return generate_mesh(ConeSpec.full(), EUCLID, 1.0, 0.1)


@st.composite
def norm_specs(draw):
    i = draw(st.integers(0, 4))
    if i == 0:
        return EUCLID
    if i == 1:
        return ELLIPSE
    if i == 2:
        return SMOOTH
    if i == 3:
        return NormSpec.ellipse([[1.5, -0.4], [-0.4, 0.8]])
    return NormSpec.smoothed_q(draw(st.floats(1.3, 5.0)), draw(st.floats(0.05, 0.8)))


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(norm_specs(), st.sampled_from([1.5, 2.0, 2.5, 3.0, 4.0]),
       st.sampled_from([0.0, 1e-4, 1e-2, 0.1]), st.integers(0, 2**31 - 1))
def test_energy_kernels_agree(H, p, eps, seed):
    mesh = disc_mesh()
    u = np.random.default_rng(seed).uniform(-0.3, 0.5, mesh.n_vertices)
    code, params = H.kernel_code()
    args = (mesh.triangles, mesh.dphi, mesh.areas, u, code, params, p, eps)
    e_c, g_c = kernels.psi_energy_grad(*args, backend="cython")
    e_p, g_p = kernels.psi_energy_grad(*args, backend="python")
    assert e_c == pytest.approx(e_p, rel=1e-12)
    np.testing.assert_allclose(g_c, g_p, rtol=1e-10, atol=1e-12 * np.abs(g_p).max())


@needs_compiled
def test_energy_kernels_handle_flat_triangles():
    mesh = disc_mesh()
    u = np.zeros(mesh.n_vertices)
    for H in (EUCLID, ELLIPSE, SMOOTH):
        code, params = H.kernel_code()
        for backend in ("cython", "python"):
            e, g = kernels.psi_energy_grad(mesh.triangles, mesh.dphi, mesh.areas, u, code,
                                           params, 1.5, 0.0, backend=backend)
            assert e == 0.0 and np.all(g == 0.0)


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95))
def test_level_crossing_kernels_agree(seed, frac):
    mesh = disc_mesh()
    u = np.random.default_rng(seed).uniform(0.0, 1.0, mesh.n_vertices)
    args = (mesh.triangles, mesh.tri_edges, mesh.edges, mesh.vertices, u, frac)
    out_c = kernels.level_crossings(*args, backend="cython")
    out_p = kernels.level_crossings(*args, backend="python")
    np.testing.assert_array_equal(out_c[0], out_p[0])
    np.testing.assert_array_equal(out_c[1], out_p[1])
    np.testing.assert_allclose(out_c[2], out_p[2], rtol=0, atol=1e-14)


def test_level_crossings_keep_superlevel_on_the_left():
    mesh = disc_mesh()
    V = mesh.vertices
    u = 1.0 - np.sum(V**2, axis=1)
    tri, _, pts = kernels.level_crossings(mesh.triangles, mesh.tri_edges, mesh.edges, V, u, 0.5)
    a, b = pts[:, :2], pts[:, 2:]
    # {u > t} is the disc, so counterclockwise travel: cross(a, b - a) > 0
    cross = a[:, 0] * (b - a)[:, 1] - a[:, 1] * (b - a)[:, 0]
    assert np.all(cross > 0.0)
    np.testing.assert_allclose(np.hypot(*a.T), np.sqrt(0.5), atol=0.02)


def test_backend_module_selection():
    assert kernels.backend_module("python").__name__.endswith("_kernels_py")
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")


def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("WULFF_LAB_PURE_PYTHON", None)
    else:
        env["WULFF_LAB_PURE_PYTHON"] = env_value
    code = ("import json, wulff_lab.kernels as k; "
            "print(json.dumps([k.BACKEND, k.backend_module().__name__]))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(out.stdout)


def test_pure_python_fallback_selected_by_environment():
    backend, module = _backend_in_subprocess("1")
    assert backend == "python"
    assert module.endswith("_kernels_py")


@needs_compiled
def test_compiled_backend_is_default():
    backend, module = _backend_in_subprocess(None)
    assert backend == "cython"
    assert module.endswith("._kernels")
