import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artobj.errors import DegenerateGeometry, EmptyInput
from artobj.geom import (
    Obb,
    PointCloud,
    RigidTransform,
    TriMesh,
    chamfer,
    fit_obb,
    merge_meshes,
    obb_mesh,
    point_mesh_distance,
    rot_z,
    rotation_about_axis,
    sample_surface,
    transform_points,
)

from .oracles import (
    box_distance,
    brute_chamfer,
    point_mesh_distance_brute,
)


# ---------------------------------------------------------------- chamfer


def test_chamfer_matches_bruteforce_bitwise():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n, m = rng.integers(1, 400, size=2)
        a = rng.normal(size=(n, 3))
        b = rng.normal(size=(m, 3)) + rng.normal(size=3)
        got = chamfer(PointCloud(a), PointCloud(b))
        want = brute_chamfer(a, b)
        assert got == want  # bit-for-bit, not approx


def test_chamfer_symmetry_exact():
    rng = np.random.default_rng(11)
    a = PointCloud(rng.normal(size=(157, 3)))
    b = PointCloud(rng.normal(size=(211, 3)))
    assert chamfer(a, b) == chamfer(b, a)


def test_chamfer_identity_zero():
    rng = np.random.default_rng(12)
    a = PointCloud(rng.normal(size=(64, 3)))
    assert chamfer(a, a) == 0.0


def test_chamfer_two_points_known_value():
    # single points 0.1 apart: each directed mean is 0.01, sum 0.02, x1000
    a = PointCloud([[0.0, 0.0, 0.0]])
    b = PointCloud([[0.1, 0.0, 0.0]])
    assert chamfer(a, b) == pytest.approx(20.0, abs=1e-12)


def test_chamfer_empty_raises():
    a = PointCloud(np.zeros((0, 3)))
    b = PointCloud([[0.0, 0.0, 0.0]])
    with pytest.raises(EmptyInput):
        chamfer(a, b)
    with pytest.raises(EmptyInput):
        chamfer(b, a)


def test_chamfer_sphere_sampling_noise_floor():
    # Two independent 10k uniform samplings of a radius-0.5 sphere.  For a
    # Poisson process of intensity lam = n / (4 pi r^2) on the surface, the
    # mean squared cross-NN distance is ~ 1/(lam pi), so the expected CD is
    # about 2000 * 4 r^2 / n = 0.2 here.  Assert a 0.5 ceiling plus a
    # sanity window around the analytic value.
    def sphere(seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(10000, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return PointCloud(0.5 * v)

    cd = chamfer(sphere(1), sphere(2))
    assert cd < 0.5
    assert 0.1 < cd < 0.35


# ------------------------------------------------- point-to-mesh distance


def test_point_mesh_distance_matches_bruteforce():
    rng = np.random.default_rng(21)
    verts = rng.normal(size=(40, 3))
    faces = rng.integers(0, 40, size=(60, 3))
    # throw away degenerate index triples
    faces = faces[(faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])]
    mesh = TriMesh(verts, faces)
    pts = rng.normal(size=(200, 3)) * 2.0
    got = point_mesh_distance(pts, mesh)
    want = point_mesh_distance_brute(pts, mesh.vertices, mesh.faces)
    np.testing.assert_allclose(got, want, atol=1e-9, rtol=0)


def test_point_mesh_distance_box_analytic():
    half = np.array([0.8, 0.5, 0.3])
    box = obb_mesh(Obb(np.zeros(3), np.eye(3), half))
    rng = np.random.default_rng(22)
    pts = rng.uniform(-2, 2, size=(500, 3))
    got = point_mesh_distance(pts, box)
    np.testing.assert_allclose(got, box_distance(pts, half), atol=1e-9, rtol=0)


def test_point_mesh_distance_on_surface_zero():
    box = obb_mesh(Obb(np.zeros(3), np.eye(3), [1.0, 1.0, 1.0]))
    pts = sample_surface(box, 200, seed=3).points
    assert point_mesh_distance(pts, box).max() < 1e-9


# ---------------------------------------------------------------- fit_obb


def _box_cloud(center, rotation, half, seed=0):
    """Surface samples symmetrized over all 8 octant reflections (so the
    covariance is diagonal in the box frame to machine precision), plus the
    corners to pin the extents exactly."""
    local_box = Obb(np.zeros(3), np.eye(3), half)
    surf = sample_surface(obb_mesh(local_box), 400, seed=seed).points
    signs = np.array([[sx, sy, sz] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)])
    local = np.concatenate([surf * s for s in signs] + [local_box.corners()])
    return PointCloud(local @ np.asarray(rotation).T + np.asarray(center))


def test_fit_obb_recovers_rotated_box():
    rng = np.random.default_rng(31)
    half = np.array([1.0, 0.6, 0.3])
    for trial in range(10):
        axis = rng.normal(size=3)
        r0 = rotation_about_axis(axis, rng.uniform(0, 2 * np.pi))
        center = rng.normal(size=3)
        fitted = fit_obb(_box_cloud(center, r0, half, seed=trial))
        assert not fitted.degenerate
        np.testing.assert_allclose(fitted.half_lengths, half, atol=1e-9)
        np.testing.assert_allclose(fitted.center, center, atol=1e-9)
        # axes match up to sign, in extent order
        dots = np.abs(np.einsum("ij,ij->j", fitted.rotation, r0))
        np.testing.assert_allclose(dots, 1.0, atol=1e-9)


def test_fit_obb_sign_convention_and_handedness():
    rng = np.random.default_rng(32)
    for trial in range(10):
        pts = rng.normal(size=(50, 3)) * np.array([3.0, 1.5, 0.5])
        box = fit_obb(PointCloud(rng.permutation(pts)))
        r = box.rotation
        for i in (0, 1):
            col = r[:, i]
            assert col[np.argmax(np.abs(col))] > 0
        np.testing.assert_allclose(r[:, 2], np.cross(r[:, 0], r[:, 1]), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)
        # extent order is descending
        h = box.half_lengths
        assert h[0] >= h[1] >= h[2]


def test_fit_obb_containment():
    rng = np.random.default_rng(33)
    for _ in range(20):
        pts = rng.normal(size=(rng.integers(1, 300), 3)) * rng.uniform(0.1, 5)
        box = fit_obb(PointCloud(pts))
        assert box.contains(pts, tol=1e-9).all()


def test_fit_obb_collinear_sets_degenerate_flag():
    pts = np.array([[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [1.0, 0.0, 0.0]])
    box = fit_obb(PointCloud(pts))
    assert box.degenerate
    np.testing.assert_allclose(box.half_lengths, [0.5, 1e-6, 1e-6], atol=1e-12)
    np.testing.assert_allclose(np.abs(box.rotation[:, 0]), [1, 0, 0], atol=1e-12)
    assert box.rotation[0, 0] > 0  # sign rule


def test_fit_obb_single_point_degenerate():
    box = fit_obb(PointCloud([[1.0, 2.0, 3.0]]))
    assert box.degenerate
    np.testing.assert_allclose(box.center, [1, 2, 3])
    np.testing.assert_allclose(box.half_lengths, [1e-6] * 3)


def test_fit_obb_planar_not_degenerate():
    # one collapsed direction only: flag stays off
    rng = np.random.default_rng(34)
    pts = rng.normal(size=(100, 3))
    pts[:, 2] = 0.0
    box = fit_obb(PointCloud(pts))
    assert not box.degenerate
    assert box.half_lengths[2] == 1e-6


def test_fit_obb_empty_raises():
    with pytest.raises(EmptyInput):
        fit_obb(PointCloud(np.zeros((0, 3))))


# --------------------------------------------------------- sample_surface


def test_sample_surface_area_weighted_counts():
    # two parallel triangles, area ratio 4:1, separable by z
    verts = np.array(
        [
            [0, 0, 0], [4, 0, 0], [0, 4, 0],   # area 8
            [0, 0, 1], [2, 0, 1], [0, 2, 1],   # area 2
        ],
        dtype=np.float64,
    )
    mesh = TriMesh(verts, [[0, 1, 2], [3, 4, 5]])
    pc = sample_surface(mesh, 5000, seed=9)
    n_big = int(np.count_nonzero(pc.points[:, 2] < 0.5))
    p = 0.8
    sigma = np.sqrt(5000 * p * (1 - p))
    assert abs(n_big - 5000 * p) < 3 * sigma


def test_sample_surface_points_lie_on_mesh():
    rng = np.random.default_rng(41)
    verts = rng.normal(size=(10, 3))
    mesh = TriMesh(verts, [[0, 1, 2], [3, 4, 5], [6, 7, 8]])
    pc = sample_surface(mesh, 500, seed=1)
    assert point_mesh_distance(pc.points, mesh).max() < 1e-9


def test_sample_surface_deterministic():
    box = obb_mesh(Obb(np.zeros(3), np.eye(3), [1, 2, 3]))
    a = sample_surface(box, 100, seed=5)
    b = sample_surface(box, 100, seed=5)
    c = sample_surface(box, 100, seed=6)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_sample_surface_errors():
    with pytest.raises(EmptyInput):
        sample_surface(TriMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=int)), 10, seed=0)
    degenerate = TriMesh(np.zeros((3, 3)), [[0, 1, 2]])  # all vertices coincide
    with pytest.raises(DegenerateGeometry):
        sample_surface(degenerate, 10, seed=0)


# --------------------------------------------------------- RigidTransform


def _random_transform(draw_axis, angle, trans):
    axis = np.asarray(draw_axis)
    if np.linalg.norm(axis) < 1e-6:
        axis = np.array([0.0, 0.0, 1.0])
    return RigidTransform(rotation_about_axis(axis, angle), trans)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
angles = st.floats(-np.pi, np.pi, allow_nan=False)
vec3 = st.tuples(finite, finite, finite)


@settings(deadline=None, max_examples=50)
@given(vec3, angles, vec3, vec3, angles, vec3, vec3)
def test_rigid_compose_matches_sequential_apply(ax1, th1, t1, ax2, th2, t2, p):
    a = _random_transform(ax1, th1, t1)
    b = _random_transform(ax2, th2, t2)
    p = np.asarray(p)
    np.testing.assert_allclose((a @ b).apply(p), a.apply(b.apply(p)), atol=1e-9)


@settings(deadline=None, max_examples=50)
@given(vec3, angles, vec3, vec3)
def test_rigid_inverse_round_trip(axis, angle, trans, p):
    t = _random_transform(axis, angle, trans)
    p = np.asarray(p)
    np.testing.assert_allclose(t.inverse().apply(t.apply(p)), p, atol=1e-9)


def test_rotation_about_line_fixes_pivot():
    t = RigidTransform.rotation_about_line([0, 0, 1], [1.0, 2.0, 3.0], 1.234)
    np.testing.assert_allclose(t.apply(np.array([1.0, 2.0, 3.0])), [1, 2, 3], atol=1e-12)


def test_rotation_about_line_half_turn():
    # half turn about the vertical line through (1, 0, 0): origin -> (2, 0, 0)
    t = RigidTransform.rotation_about_line([0, 0, 1], [1.0, 0.0, 0.0], np.pi)
    np.testing.assert_allclose(t.apply(np.zeros(3)), [2, 0, 0], atol=1e-9)


def test_rigid_transform_rejects_non_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 2.0, np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))  # det = -1


def test_rotation_helper_agreement():
    for angle in (0.0, 0.3, -1.7, np.pi / 2):
        np.testing.assert_allclose(
            rotation_about_axis([0, 0, 1], angle), rot_z(angle), atol=1e-15
        )


def test_matrix_round_trip():
    t = RigidTransform(rot_z(0.7), [1.0, -2.0, 0.5])
    back = RigidTransform.from_matrix(t.as_matrix())
    np.testing.assert_array_equal(back.rotation, t.rotation)
    np.testing.assert_array_equal(back.translation, t.translation)


def test_transform_points_preserves_labels():
    pc = PointCloud([[0, 0, 0], [1, 1, 1]], labels=[2, 5])
    out = transform_points(RigidTransform.from_translation([1, 0, 0]), pc)
    np.testing.assert_array_equal(out.labels, [2, 5])
    np.testing.assert_allclose(out.points, [[1, 0, 0], [2, 1, 1]])


# -------------------------------------------------------------------- Obb


def test_obb_corners_and_contains():
    box = Obb([1, 0, 0], rot_z(np.pi / 4), [1, 1, 0.5])
    corners = box.corners()
    assert corners.shape == (8, 3)
    assert box.contains(corners).all()
    assert box.contains(box.center[None]).all()
    outside = box.center + box.rotation[:, 0] * (box.half_lengths[0] + 1e-3)
    assert not box.contains(outside[None]).any()
    assert box.volume() == pytest.approx(8 * 1 * 1 * 0.5)


def test_obb_transformed_preserves_geometry():
    box = Obb([0.5, 0, 0], rot_z(0.3), [2, 1, 0.5])
    t = RigidTransform(rotation_about_axis([1, 1, 0], 0.8), [0, 1, 2])
    moved = box.transformed(t)
    np.testing.assert_allclose(moved.corners(), t.apply(box.corners()), atol=1e-12)
    np.testing.assert_array_equal(moved.half_lengths, box.half_lengths)


def _corner_set(box):
    return np.array(sorted(map(tuple, np.round(box.corners(), 9))))


def test_obb_canonical_orders_extents():
    box = Obb(np.zeros(3), np.eye(3), [0.3, 2.0, 1.0])
    canon = box.canonical()
    np.testing.assert_allclose(canon.half_lengths, [2.0, 1.0, 0.3])
    np.testing.assert_allclose(canon.rotation[:, 0], [0, 1, 0], atol=1e-12)
    np.testing.assert_allclose(canon.rotation[:, 2], [1, 0, 0], atol=1e-12)
    # same cuboid, different labeling
    np.testing.assert_allclose(_corner_set(canon), _corner_set(box), atol=1e-9)


def test_obb_canonical_matches_fit_on_own_corners():
    rng = np.random.default_rng(55)
    for trial in range(5):
        box = Obb(
            rng.normal(size=3),
            rotation_about_axis(rng.normal(size=3), rng.uniform(0, 3)),
            np.sort(rng.uniform(0.2, 2.0, size=3))[::-1],
        )
        canon = box.canonical()
        assert canon.half_lengths[0] >= canon.half_lengths[1] >= canon.half_lengths[2]
        np.testing.assert_allclose(_corner_set(canon), _corner_set(box), atol=1e-9)


def test_obb_clamps_half_lengths():
    box = Obb(np.zeros(3), np.eye(3), [1.0, 1e-9, 1.0])
    assert box.half_lengths[1] == 1e-6
    with pytest.raises(ValueError):
        Obb(np.zeros(3), np.eye(3), [1.0, 0.0, 1.0])


def test_obb_mesh_watertight_and_volume():
    box = Obb([1, 2, 3], rot_z(0.5), [0.5, 0.4, 0.3])
    mesh = obb_mesh(box)
    assert mesh.is_watertight()
    assert mesh.open_edge_count() == 0
    assert mesh.signed_volume() == pytest.approx(box.volume(), rel=1e-12)
    assert mesh.flipped().signed_volume() == pytest.approx(-box.volume(), rel=1e-12)
    assert mesh.area() == pytest.approx(2 * (0.8 * 0.6 + 0.8 * 1.0 + 0.6 * 1.0))


def test_open_mesh_reports_open_edges():
    tri = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert not tri.is_watertight()
    assert tri.open_edge_count() == 3


def test_merge_meshes_offsets_indices():
    a = obb_mesh(Obb([0, 0, 0], np.eye(3), [1, 1, 1]))
    b = obb_mesh(Obb([5, 0, 0], np.eye(3), [1, 1, 1]))
    merged = merge_meshes([a, b])
    assert merged.vertices.shape == (16, 3)
    assert merged.faces.shape == (24, 3)
    assert merged.is_watertight()
    assert merged.signed_volume() == pytest.approx(16.0, rel=1e-12)
    with pytest.raises(EmptyInput):
        merge_meshes([])


def test_values_are_immutable():
    box = fit_obb(PointCloud(np.random.default_rng(0).normal(size=(20, 3))))
    with pytest.raises(ValueError):
        box.center[0] = 9.0
    pc = PointCloud([[0, 0, 0]])
    with pytest.raises(ValueError):
        pc.points[0, 0] = 1.0
