import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcsnet import DataError, TriangleMesh, chamfer, evaluate, hausdorff, point_to_face, triangle_quality
from pcsnet.io import sample_mesh_surface
from pcsnet.metrics import nearest_face_distances, point_triangle_distances, triangle_stats

from conftest import random_rotation


def brute_sq(A, B):
    return ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)


def brute_chamfer(P, Q):
    D = brute_sq(P, Q)
    return D.min(axis=1).mean() + D.min(axis=0).mean()


def brute_hausdorff(P, Q):
    D = brute_sq(P, Q)
    return max(D.min(axis=1).max(), D.min(axis=0).max())


def brute_point_triangle(p, a, b, c, res=400):
    # dense barycentric grid over the triangle
    u, v = np.meshgrid(np.linspace(0, 1, res), np.linspace(0, 1, res))
    keep = u + v <= 1
    S = a + np.outer(u[keep], b - a) + np.outer(v[keep], c - a)
    return np.sqrt(((S - p) ** 2).sum(axis=1).min())


def tri(*pts):
    return TriangleMesh(np.array(pts, dtype=float), [[0, 1, 2]])


def test_chamfer_hausdorff_examples():
    P = np.random.default_rng(0).normal(size=(20, 3))
    assert chamfer(P, P) == 0.0 and hausdorff(P, P) == 0.0
    assert chamfer([[0, 0, 0]], [[1, 0, 0]]) == 2.0
    assert hausdorff([[0, 0, 0], [3, 0, 0]], [[0, 0, 0]]) == 9.0


@pytest.mark.parametrize("trial", range(30))
def test_match_brute_force(trial):
    rng = np.random.default_rng(trial)
    n, m = rng.integers(1, 501, size=2)
    P, Q = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
    assert chamfer(P, Q) == pytest.approx(brute_chamfer(P, Q), rel=1e-12)
    assert hausdorff(P, Q) == pytest.approx(brute_hausdorff(P, Q), rel=1e-12)


def test_empty_cloud_rejected():
    with pytest.raises(DataError):
        chamfer(np.zeros((0, 3)), np.zeros((2, 3)))


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_rigid_invariance_and_scaling(seed, lam):
    rng = np.random.default_rng(seed)
    P, Q = rng.normal(size=(80, 3)), rng.normal(size=(60, 3))
    R, t = random_rotation(rng), rng.normal(size=3)
    c, h = chamfer(P, Q), hausdorff(P, Q)
    assert chamfer(P @ R.T + t, Q @ R.T + t) == pytest.approx(c, abs=1e-9)
    assert hausdorff(P @ R.T + t, Q @ R.T + t) == pytest.approx(h, abs=1e-9)
    assert chamfer(lam * P, lam * Q) == pytest.approx(lam**2 * c, rel=1e-9)
    assert hausdorff(lam * P, lam * Q) == pytest.approx(lam**2 * h, rel=1e-9)


# point to face

def test_p2f_interior_and_vertex_regions():
    mesh = tri([0, 0, 0], [1, 0, 0], [0, 1, 0])
    assert point_to_face([[0.2, 0.2, 1.0]], mesh) == pytest.approx(1.0, abs=1e-15)
    assert point_to_face([[2.0, 0, 0]], mesh) == pytest.approx(1.0, abs=1e-15)
    assert point_to_face([[1.0, 1.0, 0]], mesh) == pytest.approx(np.sqrt(0.5), abs=1e-15)


def test_p2f_on_surface_zero():
    rng = np.random.default_rng(1)
    V = rng.normal(size=(40, 3))
    T = np.array([rng.choice(40, 3, replace=False) for _ in range(60)])
    mesh = TriangleMesh(V, T)
    P = sample_mesh_surface(mesh, 2000, 0).points
    assert np.max(nearest_face_distances(P, mesh)) <= 1e-12


def test_closest_point_regions_match_dense_grid():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, b, c = rng.normal(size=(3, 3))
        p = rng.normal(size=3) * 2
        d = point_triangle_distances(p[None], np.array([[a, b, c]]))[0]
        approx = brute_point_triangle(p, a, b, c)
        # the grid only over-estimates, by at most its spacing
        assert d <= approx + 1e-12
        assert approx - d < 2 * max(np.linalg.norm(b - a), np.linalg.norm(c - a)) / 399


def test_nearest_face_matches_exhaustive():
    rng = np.random.default_rng(3)
    V = rng.normal(size=(60, 3))
    T = np.array([rng.choice(60, 3, replace=False) for _ in range(200)])
    mesh = TriangleMesh(V, T)
    P = rng.normal(size=(300, 3)) * 1.5
    corners = mesh.corners()
    expected = np.array([point_triangle_distances(np.repeat(p[None], len(corners), 0), corners).min()
                         for p in P])
    np.testing.assert_array_equal(nearest_face_distances(P, mesh), expected)


def test_face_distance_not_above_vertex_distance():
    rng = np.random.default_rng(4)
    V = rng.normal(size=(30, 3))
    T = np.array([rng.choice(30, 3, replace=False) for _ in range(40)])
    mesh = TriangleMesh(V, T)
    P = rng.normal(size=(200, 3))
    used = V[np.unique(T)]
    vert = np.sqrt(brute_sq(P, used).min(axis=1))
    assert np.all(nearest_face_distances(P, mesh) <= vert + 1e-15)


# triangle quality

def test_equilateral():
    mesh = tri([0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0])
    g, theta, pct = triangle_quality(mesh)
    assert abs(g - 1.0) < 1e-12
    assert abs(theta - 60.0) < 1e-9 and pct == 0.0


def test_right_isoceles():
    g, theta, pct = triangle_quality(tri([0, 0, 0], [1, 0, 0], [0, 1, 0]))
    assert abs(g - np.sqrt(3) / (1 + np.sqrt(2))) < 1e-9
    assert abs(theta - 45.0) < 1e-9 and pct == 0.0


def test_sliver_counted():
    # angles 10, 20, 150 by the law of sines
    A, B = np.radians(10), np.radians(20)
    c = np.sin(np.radians(150))
    b = np.sin(B)
    apex = b * np.array([np.cos(A), np.sin(A), 0])
    mesh = TriangleMesh(np.array([[0, 0, 0], [c, 0, 0], apex]), [[0, 1, 2], [0, 1, 2]])
    _, theta = triangle_stats(mesh)
    np.testing.assert_allclose(theta, 10.0, atol=1e-9)
    assert triangle_quality(mesh)[2] == 100.0


@given(st.integers(0, 2**32 - 1))
def test_g_in_unit_interval(seed):
    V = np.random.default_rng(seed).normal(size=(3, 3))
    G, _ = triangle_stats(TriangleMesh(V, [[0, 1, 2]]))
    assert 0 < G[0] <= 1 + 1e-12


def test_degenerate_triangle_rejected():
    mesh = TriangleMesh.__new__(TriangleMesh)
    mesh.vertices = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
    mesh.triangles = np.array([[0, 1, 2]])
    with pytest.raises(DataError) as exc:
        triangle_quality(mesh)
    assert exc.value.code == "degenerate-triangle"


# report

def test_evaluate_with_clouds_and_meshes():
    mesh = tri([0, 0, 0], [1, 0, 0], [0, 1, 0])
    P = sample_mesh_surface(mesh, 500, 0).points
    r = evaluate(P, gt_points=P)
    assert r.d_c == 0.0 and r.d_h == 0.0 and r.p2f is None
    r = evaluate(P, gt_mesh=mesh, recon_mesh=mesh, w=2000, rng=0)
    assert r.p2f <= 1e-12
    assert r.g_mean == pytest.approx(np.sqrt(3) / (1 + np.sqrt(2)))
    doc = json.loads(r.to_json())
    assert set(doc) == {"d_c", "d_h", "p2f", "g_mean", "theta_avg_degrees", "pct_below_30"}
    table = r.to_table("ours").splitlines()
    assert table[0].split("|")[0].strip() == "method" and "ours" in table[2]
    with pytest.raises(DataError):
        evaluate(P)
