"""Tests for the geometric kernels."""

import math

import numpy as np
import pytest
import torch
from scipy.spatial.transform import Rotation

from src.app.errors import (
    ConnectivityMismatch,
    DegenerateFace,
    EmptyCloud,
    InvalidCount,
    InvalidGeometry,
    IoFailure,
    IsolatedVertex,
    NonUnitQuaternion,
    ShapeMismatch,
    ZeroAreaMesh,
    ZeroVector,
)
from src.app.geometry import (
    PointCloud,
    SimilarityTransform,
    TriangleMesh,
    UnitQuaternion,
    adjacent_face_pairs,
    apply_similarity,
    chamfer_distance,
    cosine_feature_distance,
    face_normals,
    farthest_point_sample,
    farthest_rotation_sample,
    invert_similarity,
    laplacian_loss,
    load_mesh,
    load_point_cloud,
    meanshift_outlier_filter,
    mesh_laplacian,
    normal_consistency_loss,
    quaternion_distance,
    sample_surface,
    sample_surface_barycentric,
    save_mesh,
    save_point_cloud,
    subsample_cloud,
)
from src.app.geometry.outliers import merge_modes
from src.app.geometry.rotations import min_pairwise_distance
from src.app.geometry.transforms import random_similarity, rotation_angle_degrees


# =====================================================
# TYPES / TRANSFORMS
# =====================================================


def test_similarity_rejects_reflection():
    """A rotation with determinant -1 is not a valid similarity."""
    mirror = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(InvalidGeometry):
        SimilarityTransform.from_numpy(1.0, mirror, np.zeros(3))


def test_similarity_rejects_nonpositive_scale():
    with pytest.raises(InvalidGeometry):
        SimilarityTransform.from_numpy(0.0, np.eye(3), np.zeros(3))


def test_mesh_rejects_out_of_range_face():
    with pytest.raises(InvalidGeometry):
        TriangleMesh(torch.zeros(3, 3), torch.tensor([[0, 1, 3]]))


def test_apply_similarity_matches_formula():
    """s·R·p + T, checked on a 90 degree turn about z."""
    r = Rotation.from_euler("z", 90, degrees=True).as_matrix()
    t = SimilarityTransform.from_numpy(2.0, r, np.array([1.0, 0.0, 0.0]))
    out = apply_similarity(t, PointCloud(torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)))
    torch.testing.assert_close(out.points, torch.tensor([[1.0, 2.0, 0.0]], dtype=torch.float64))


def test_apply_similarity_empty_cloud():
    with pytest.raises(EmptyCloud):
        apply_similarity(SimilarityTransform.identity(), PointCloud(torch.zeros(0, 3)))


def test_inverse_composes_to_identity():
    """t⁻¹ ∘ t is the identity for random transforms."""
    rng = np.random.default_rng(0)
    for _ in range(20):
        t = random_similarity(rng)
        identity = invert_similarity(t).compose(t)
        assert float(identity.scale) == pytest.approx(1.0, abs=1e-12)
        torch.testing.assert_close(identity.rotation, torch.eye(3, dtype=torch.float64))
        torch.testing.assert_close(identity.translation, torch.zeros(3, dtype=torch.float64))


def test_rotation_angle_degrees():
    a = torch.eye(3, dtype=torch.float64)
    b = torch.as_tensor(Rotation.from_euler("x", 30, degrees=True).as_matrix())
    assert rotation_angle_degrees(a, b) == pytest.approx(30.0)


# =====================================================
# QUATERNIONS / VIEW SELECTION
# =====================================================


def test_quaternion_renormalizes_small_drift():
    q = UnitQuaternion(np.array([1.0 + 5e-7, 0.0, 0.0, 0.0]))
    assert np.linalg.norm(q.components) == pytest.approx(1.0, abs=1e-9)


def test_quaternion_rejects_non_unit():
    with pytest.raises(NonUnitQuaternion):
        UnitQuaternion(np.array([2.0, 0.0, 0.0, 0.0]))


def test_quaternion_distance_antipodal_is_zero():
    """q and -q describe the same rotation."""
    q = UnitQuaternion(np.array([0.5, 0.5, 0.5, 0.5]))
    assert quaternion_distance(q, UnitQuaternion(-q.components)) == pytest.approx(0.0)


def test_quaternion_distance_bounds():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a = UnitQuaternion.from_matrix(Rotation.random(random_state=rng).as_matrix())
        b = UnitQuaternion.from_matrix(Rotation.random(random_state=rng).as_matrix())
        assert 0.0 <= quaternion_distance(a, b) <= math.sqrt(2.0) + 1e-12


def _random_rotations(n: int, seed: int) -> list[UnitQuaternion]:
    matrices = Rotation.random(n, random_state=seed).as_matrix()
    return [UnitQuaternion.from_matrix(m) for m in matrices]


def test_farthest_rotation_sample_distinct_and_sized():
    rotations = _random_rotations(30, 2)
    chosen = farthest_rotation_sample(rotations, 16, seed=0)
    assert len(chosen) == 16
    assert len(set(chosen)) == 16


def test_farthest_rotation_sample_beats_random_subsets():
    """Greedy max-min spread beats nine in ten of 1000 random subsets."""
    rotations = _random_rotations(40, 3)
    greedy = min_pairwise_distance(rotations, farthest_rotation_sample(rotations, 8, seed=0))
    rng = np.random.default_rng(4)
    spreads = [
        min_pairwise_distance(rotations, rng.choice(40, 8, replace=False).tolist())
        for _ in range(1000)
    ]
    assert greedy >= np.percentile(spreads, 90)


def test_farthest_rotation_sample_half_turn():
    """From the identity, the half turn about z is farther than the quarter turn."""
    rotations = [
        UnitQuaternion.from_matrix(Rotation.from_euler("z", d, degrees=True).as_matrix())
        for d in (0, 90, 180)
    ]
    assert farthest_rotation_sample(rotations, 2, seed=0, start=0) == [0, 2]


def test_farthest_rotation_sample_extremes():
    rotations = _random_rotations(5, 5)
    single = farthest_rotation_sample(rotations, 1, seed=9)
    assert len(single) == 1
    assert sorted(farthest_rotation_sample(rotations, 5, seed=9)) == [0, 1, 2, 3, 4]


def test_farthest_rotation_sample_invalid_count():
    with pytest.raises(InvalidCount):
        farthest_rotation_sample(_random_rotations(3, 0), 4, seed=0)


# =====================================================
# LOSSES
# =====================================================


def test_chamfer_identical_clouds_is_zero(random_cloud):
    assert float(chamfer_distance(random_cloud, random_cloud)) == 0.0


def test_chamfer_single_point_pair():
    """One point each: both directions contribute the same squared distance."""
    a = PointCloud(torch.tensor([[0.0, 0.0, 0.0]], dtype=torch.float64))
    b = PointCloud(torch.tensor([[0.0, 3.0, 4.0]], dtype=torch.float64))
    assert float(chamfer_distance(a, b)) == pytest.approx(50.0)
    assert float(chamfer_distance(a, b, reduction="mean")) == pytest.approx(50.0)


def test_chamfer_is_symmetric(random_cloud):
    other = PointCloud(random_cloud.points[:50] + 0.1)
    assert float(chamfer_distance(random_cloud, other)) == pytest.approx(
        float(chamfer_distance(other, random_cloud))
    )


def test_chamfer_empty_raises(random_cloud):
    with pytest.raises(EmptyCloud):
        chamfer_distance(random_cloud, PointCloud(torch.zeros(0, 3)))


def test_chamfer_gradcheck():
    generator = torch.Generator().manual_seed(0)
    a = torch.rand(6, 3, generator=generator, dtype=torch.float64, requires_grad=True)
    b = torch.rand(5, 3, generator=generator, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(
        lambda x, y: chamfer_distance(PointCloud(x), PointCloud(y)), (a, b)
    )


def test_cosine_feature_distance_values():
    f = torch.tensor([1.0, 0.0])
    assert float(cosine_feature_distance(f, f)) == pytest.approx(0.0)
    assert float(cosine_feature_distance(f, -f)) == pytest.approx(2.0)
    with pytest.raises(ZeroVector):
        cosine_feature_distance(f, torch.zeros(2))
    with pytest.raises(ShapeMismatch):
        cosine_feature_distance(f, torch.ones(3))


# =====================================================
# MESH OPERATORS
# =====================================================


def test_laplacian_identical_meshes_is_zero(tetrahedron):
    assert float(laplacian_loss(tetrahedron, tetrahedron)) == 0.0


def test_laplacian_invariant_to_translation(sphere):
    moved = sphere.with_vertices(sphere.vertices + torch.tensor([0.3, -1.0, 2.0]).double())
    assert float(laplacian_loss(sphere, moved)) == pytest.approx(0.0, abs=1e-20)


def test_laplacian_connectivity_mismatch(tetrahedron):
    other = TriangleMesh(tetrahedron.vertices, tetrahedron.faces[[1, 0, 2, 3]])
    with pytest.raises(ConnectivityMismatch):
        laplacian_loss(tetrahedron, other)


def test_laplacian_isolated_vertex():
    vertices = torch.tensor([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], dtype=torch.float64)
    mesh = TriangleMesh(vertices, torch.tensor([[0, 1, 2]]))
    with pytest.raises(IsolatedVertex):
        mesh_laplacian(mesh)


def _star() -> TriangleMesh:
    """Center (1, 0, 0) fanned to a four-vertex ring whose mean is the origin."""
    vertices = torch.tensor(
        [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0], [0, 0, -1]], dtype=torch.float64
    )
    faces = torch.tensor([[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]])
    return TriangleMesh(vertices, faces)


def test_laplacian_star_center_row():
    lpc = mesh_laplacian(_star())
    torch.testing.assert_close(lpc[0], torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64))


def test_laplacian_loss_star_hand_value():
    """Moving the center by 0.1 changes its row by 0.1 and each ring row by 0.1 / 3."""
    star = _star()
    moved = star.vertices.clone()
    moved[0, 0] += 0.1
    expected = 0.1**2 + 4 * (0.1 / 3) ** 2
    assert float(laplacian_loss(star, star.with_vertices(moved))) == pytest.approx(expected)
    assert expected == pytest.approx(0.0144444, abs=1e-7)


def test_laplacian_gradcheck(tetrahedron):
    base = tetrahedron.vertices.clone()
    moved = (base + 0.1 * torch.randn(4, 3, dtype=torch.float64)).requires_grad_(True)
    assert torch.autograd.gradcheck(
        lambda v: laplacian_loss(tetrahedron, tetrahedron.with_vertices(v)), (moved,)
    )


def test_adjacent_face_pairs_tetrahedron(tetrahedron):
    """Every pair of tetrahedron faces shares exactly one edge."""
    pairs = adjacent_face_pairs(tetrahedron.faces)
    assert pairs.shape == (6, 2)


def test_normal_consistency_planar_is_zero():
    """Two coplanar triangles sharing an edge have identical normals."""
    vertices = torch.tensor([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=torch.float64)
    mesh = TriangleMesh(vertices, torch.tensor([[0, 1, 2], [0, 2, 3]]))
    assert float(normal_consistency_loss(mesh)) == pytest.approx(0.0, abs=1e-12)


def test_normal_consistency_folded_pair():
    """A 90 degree fold costs 1 - cos(90°) = 1."""
    vertices = torch.tensor([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=torch.float64)
    mesh = TriangleMesh(vertices, torch.tensor([[0, 1, 2], [0, 3, 1]]))
    assert float(normal_consistency_loss(mesh)) == pytest.approx(1.0)


def test_normal_consistency_gradcheck(sphere):
    vertices = sphere.vertices[:, :].clone().requires_grad_(True)
    small = TriangleMesh(vertices, sphere.faces[:20])
    assert torch.autograd.gradcheck(
        lambda v: normal_consistency_loss(small.with_vertices(v)), (vertices,)
    )


def test_face_normals_degenerate():
    vertices = torch.tensor([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=torch.float64)
    with pytest.raises(DegenerateFace):
        face_normals(TriangleMesh(vertices, torch.tensor([[0, 1, 2]])))


# =====================================================
# SAMPLING
# =====================================================


def test_sample_surface_count_and_determinism(sphere):
    a = sample_surface(sphere, 500, seed=3)
    b = sample_surface(sphere, 500, seed=3)
    assert len(a) == 500
    torch.testing.assert_close(a.points, b.points)


def test_sample_surface_single_triangle_inside():
    """Barycentric weights are nonnegative and sum to one."""
    vertices = torch.tensor([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=torch.float64)
    mesh = TriangleMesh(vertices, torch.tensor([[0, 1, 2]]))
    samples = sample_surface_barycentric(mesh, 1000, seed=0)
    assert (samples.weights >= 0).all()
    torch.testing.assert_close(samples.weights.sum(dim=1), torch.ones(1000, dtype=torch.float64))
    points = samples.points_on(mesh)
    assert (points[:, 0] + points[:, 1] <= 1.0 + 1e-12).all()


def test_sample_surface_invalid_count(sphere):
    with pytest.raises(InvalidCount):
        sample_surface(sphere, 0, seed=0)


def test_sample_surface_zero_area():
    vertices = torch.zeros(3, 3, dtype=torch.float64)
    with pytest.raises(ZeroAreaMesh):
        sample_surface(TriangleMesh(vertices, torch.tensor([[0, 1, 2]])), 10, seed=0)


def test_sample_surface_gradcheck(tetrahedron):
    vertices = tetrahedron.vertices.clone().requires_grad_(True)
    assert torch.autograd.gradcheck(
        lambda v: sample_surface(tetrahedron.with_vertices(v), 16, seed=1).points, (vertices,)
    )


def test_farthest_point_sample_spread():
    """On a line, the first picks are the two ends."""
    points = torch.linspace(0, 1, 11, dtype=torch.float64).unsqueeze(1).repeat(1, 3)
    picked = farthest_point_sample(points, 2).tolist()
    assert sorted(picked) == [0, 10]


def test_subsample_cloud(random_cloud):
    assert len(subsample_cloud(random_cloud, 50, seed=0)) == 50
    assert subsample_cloud(random_cloud, 500, seed=0) is random_cloud


# =====================================================
# OUTLIERS / IO
# =====================================================


def test_meanshift_drops_far_cluster():
    rng = np.random.default_rng(0)
    inliers = rng.normal(scale=0.05, size=(300, 3))
    outliers = rng.normal(scale=0.01, size=(10, 3)) + np.array([3.0, 0.0, 0.0])
    filtered = meanshift_outlier_filter(PointCloud(np.concatenate([inliers, outliers])), 0.4)
    assert len(filtered) == 300
    assert float(filtered.points[:, 0].max()) < 1.0


def test_meanshift_removes_single_far_point():
    rng = np.random.default_rng(1)
    directions = rng.normal(size=(100, 3))
    cluster = 0.01 * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    points = np.concatenate([cluster, [[1.0, 0.0, 0.0]]])
    filtered = meanshift_outlier_filter(PointCloud(points), 0.05)
    assert len(filtered) == 100


def test_meanshift_keeps_a_whole_hollow_shell():
    """A hollow sphere narrower than the bandwidth stays one cluster; axis fliers are dropped."""
    rng = np.random.default_rng(2)
    directions = rng.normal(size=(500, 3))
    shell = 0.25 * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    fliers = np.concatenate([np.eye(3) * 2.0, np.eye(3) * -2.0])
    filtered = meanshift_outlier_filter(PointCloud(np.concatenate([shell, fliers])), 0.6)
    assert len(filtered) == 500
    np.testing.assert_allclose(filtered.numpy(), shell)


def test_merge_modes_keeps_the_stronger_of_close_modes():
    modes = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [1.0, 0.0, 0.0]])
    merged = merge_modes(modes, np.array([3, 7, 1]), radius=0.2)
    np.testing.assert_array_equal(merged, modes[[1, 2]])


def test_meanshift_errors(random_cloud):
    with pytest.raises(EmptyCloud):
        meanshift_outlier_filter(PointCloud(torch.zeros(0, 3)), 0.4)
    with pytest.raises(InvalidCount):
        meanshift_outlier_filter(random_cloud, 0.0)


def test_mesh_and_cloud_files(tmp_path, sphere, random_cloud):
    """OBJ keeps vertex order; PLY keeps point positions."""
    save_mesh(sphere, tmp_path / "sphere.obj")
    loaded = load_mesh(tmp_path / "sphere.obj")
    torch.testing.assert_close(loaded.vertices, sphere.vertices, atol=1e-6, rtol=0)
    assert torch.equal(loaded.faces, sphere.faces)

    save_point_cloud(random_cloud, tmp_path / "cloud.ply")
    torch.testing.assert_close(
        load_point_cloud(tmp_path / "cloud.ply").points, random_cloud.points, atol=1e-6, rtol=0
    )


def test_load_mesh_missing(tmp_path):
    with pytest.raises(IoFailure):
        load_mesh(tmp_path / "nope.obj")
