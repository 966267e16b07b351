import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ELLIPSE, EUCLID, SMOOTH, SMOOTH4
from wulff_lab.cones import ConeSpec, boundary_distance
from wulff_lab.finsler import dual_norm
from wulff_lab.mesh import GAMMA0, GAMMA1, MeshError, generate_mesh, load_mesh, save_mesh

FULL = ConeSpec.full()
QUAD = ConeSpec.quadrant()
HALF = ConeSpec.half()


def check_conforming(mesh):
    V, T = mesh.vertices, mesh.triangles
    assert np.all(mesh.areas > 0.0)
    # every edge borders one (boundary) or two (interior) triangles
    local = np.sort(np.stack([T, np.roll(T, -1, axis=1)], axis=2).reshape(-1, 2), axis=1)
    _, counts = np.unique(local, axis=0, return_counts=True)
    assert set(counts.tolist()) <= {1, 2}
    assert (counts == 1).sum() == len(mesh.boundary_edges) == len(mesh.edge_tags)
    # disc topology: V - E + F = 1
    assert len(V) - len(counts) + len(T) == 1
    used = np.zeros(len(V), dtype=bool)
    used[T.ravel()] = True
    assert used.all()


def test_full_plane_disc_mesh():
    mesh = generate_mesh(FULL, EUCLID, 1.0, 0.05)
    check_conforming(mesh)
    assert np.all(mesh.edge_tags == GAMMA0)
    assert mesh.min_angle() >= 20.0
    assert mesh.areas.sum() == pytest.approx(np.pi, rel=2e-3)


def test_quadrant_mesh_tags():
    mesh = generate_mesh(QUAD, EUCLID, 1.0, 0.05)
    check_conforming(mesh)
    V = mesh.vertices
    e = mesh.boundary_edges
    g1 = e[mesh.edge_tags == GAMMA1]
    g0 = e[mesh.edge_tags == GAMMA0]
    assert len(g1) > 0 and len(g0) > 0
    assert np.all(boundary_distance(QUAD, V[g1.ravel()]) <= 1e-12)
    np.testing.assert_allclose(np.hypot(*V[g0.ravel()].T), 1.0, atol=1e-12)
    on_x = np.all(np.abs(V[g1][:, :, 1]) <= 1e-12, axis=1)
    on_y = np.all(np.abs(V[g1][:, :, 0]) <= 1e-12, axis=1)
    assert np.all(on_x | on_y) and on_x.any() and on_y.any()
    # the cone vertex is a mesh vertex
    assert np.min(np.hypot(*V.T)) == 0.0


@pytest.mark.parametrize("cone", [FULL, HALF, QUAD], ids=["full", "half", "quad"])
@pytest.mark.parametrize("H", [ELLIPSE, SMOOTH4], ids=lambda h: h.kind)
def test_curved_boundary_on_wulff_shape(H, cone):
    mesh = generate_mesh(cone, H, 1.3, 0.06)
    check_conforming(mesh)
    arc = np.unique(mesh.boundary_edges[mesh.edge_tags == GAMMA0].ravel())
    assert np.abs(dual_norm(H, mesh.vertices[arc]) - 1.3).max() <= 1e-6
    assert mesh.min_angle() >= 20.0


def test_grading_refines_near_the_vertex():
    coarse = generate_mesh(QUAD, EUCLID, 1.0, 0.05, grading=False)
    graded = generate_mesh(QUAD, EUCLID, 1.0, 0.05, grading=True)
    near = lambda m: np.linalg.norm(m.vertices[m.triangles].mean(axis=1), axis=1) < 1 / 8  # noqa: E731
    assert graded.areas[near(graded)].mean() < 0.6 * coarse.areas[near(coarse)].mean()


def test_rejects_coarse_mesh_size():
    with pytest.raises(MeshError):
        generate_mesh(FULL, EUCLID, 1.0, 0.3)
    with pytest.raises(MeshError):
        generate_mesh(FULL, EUCLID, 1.0, 0.0)


def test_rejects_unreachable_angle():
    with pytest.raises(MeshError):
        generate_mesh(QUAD, EUCLID, 1.0, 0.1, min_angle=40.0)


@settings(max_examples=12, deadline=None)
@given(st.sampled_from([EUCLID, ELLIPSE, SMOOTH, SMOOTH4]),
       st.sampled_from(["full", "half", "quad", "sector"]),
       st.floats(0.5, 2.0), st.floats(0.05, 0.12))
def test_generated_meshes_are_valid(H, which, R, rel_h):
    cone = {"full": FULL, "half": HALF, "quad": QUAD,
            "sector": ConeSpec.sector(np.pi / 6, np.pi / 2)}[which]
    mesh = generate_mesh(cone, H, R, rel_h * R)
    check_conforming(mesh)
    assert mesh.min_angle() >= 20.0
    arc = np.unique(mesh.boundary_edges[mesh.edge_tags == GAMMA0].ravel())
    assert np.abs(dual_norm(H, mesh.vertices[arc]) - R).max() <= 1e-6 * R
    if cone.k < 2:
        assert np.all(mesh.edge_tags[mesh.edge_tags != GAMMA0] == GAMMA1)
        side = np.unique(mesh.boundary_edges[mesh.edge_tags == GAMMA1].ravel())
        assert np.all(boundary_distance(cone, mesh.vertices[side]) <= 1e-9 * R)


def test_csv_roundtrip(tmp_path):
    mesh = generate_mesh(HALF, SMOOTH, 1.0, 0.1)
    save_mesh(tmp_path, mesh)
    assert (tmp_path / "vertices.csv").read_text().splitlines()[0] == "x,y"
    assert (tmp_path / "triangles.csv").read_text().splitlines()[0] == "a,b,c"
    assert (tmp_path / "edges.csv").read_text().splitlines()[0] == "i,j,tag"
    back = load_mesh(tmp_path, mesh.h, mesh.R)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.boundary_edges, mesh.boundary_edges)
    np.testing.assert_array_equal(back.edge_tags, mesh.edge_tags)


def test_csv_header_checked(tmp_path):
    mesh = generate_mesh(FULL, EUCLID, 1.0, 0.2)
    save_mesh(tmp_path, mesh)
    (tmp_path / "vertices.csv").write_text("u,v\n0,0\n")
    with pytest.raises(MeshError):
        load_mesh(tmp_path, 0.2)


def test_rotation_preserves_geometry():
    mesh = generate_mesh(FULL, EUCLID, 1.0, 0.1)
    rot = mesh.rotated(0.7)
    np.testing.assert_allclose(rot.areas, mesh.areas, rtol=1e-12)
    np.testing.assert_allclose(np.hypot(*rot.vertices.T), np.hypot(*mesh.vertices.T), atol=1e-15)


def test_oriented_boundary_edges_run_counterclockwise():
    mesh = generate_mesh(QUAD, EUCLID, 1.0, 0.1)
    V = mesh.vertices
    e = mesh.oriented_boundary_edges()
    a, b = V[e[:, 0]], V[e[:, 1]]
    # shoelace over the boundary edges equals the (positive) mesh area
    assert 0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]) == pytest.approx(mesh.areas.sum())
