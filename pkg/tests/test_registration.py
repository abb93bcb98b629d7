"""Tests for closed-form fitting, correspondences and the registration network."""

import numpy as np
import pytest
import torch
from scipy.spatial.transform import Rotation

from src.app.config import (
    AttentionConfig,
    CorrespondenceConfig,
    PoseLossWeights,
    RegistrationConfig,
)
from src.app.errors import (
    AllGroupsDegenerate,
    DegenerateConfiguration,
    EmptySet,
    TooFewCandidates,
    TooFewPoints,
)
from src.app.geometry import PointCloud, SimilarityTransform
from src.app.geometry.transforms import random_similarity, rotation_angle_degrees
from src.app.networks import (
    CorrespondenceSet,
    RegistrationNet,
    estimate_pose_scale,
    explore_correspondences,
    extract_registration_features,
    registration_loss,
    split_groups,
    umeyama_fit,
)
from src.app.networks.regnet import select_best_group


def _points(n: int, seed: int) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    return torch.rand(n, 3, generator=generator, dtype=torch.float64) * 2.0 - 1.0


# =====================================================
# UMEYAMA
# =====================================================


def test_umeyama_recovers_random_transforms():
    """Noiseless pairs give the generating transform to 1e-9."""
    rng = np.random.default_rng(0)
    for trial in range(1000):
        t = random_similarity(rng, scale_range=(0.2, 5.0))
        p = _points(int(rng.integers(5, 51)), trial)
        fitted, residual = umeyama_fit(p, t.apply_points(p))
        assert abs(float(fitted.scale - t.scale)) < 1e-9
        assert np.radians(rotation_angle_degrees(fitted.rotation, t.rotation)) < 1e-9
        assert float((fitted.translation - t.translation).abs().max()) < 1e-9
        assert float(residual) < 1e-12


def test_umeyama_mirrored_target_keeps_proper_rotation():
    """A reflected target still yields det(R) = +1."""
    p = _points(20, 1)
    q = p * torch.tensor([1.0, 1.0, -1.0], dtype=torch.float64)
    fitted, _ = umeyama_fit(p, q)
    assert float(torch.linalg.det(fitted.rotation)) == pytest.approx(1.0, abs=1e-9)


def test_umeyama_degenerate_inputs():
    with pytest.raises(DegenerateConfiguration):
        umeyama_fit(_points(2, 0), _points(2, 1))
    line = torch.linspace(0, 1, 10, dtype=torch.float64).unsqueeze(1) * torch.tensor(
        [[1.0, 2.0, 3.0]], dtype=torch.float64
    )
    with pytest.raises(DegenerateConfiguration):
        umeyama_fit(line, line)


def test_umeyama_weights_ignore_zero_weight_outlier():
    p = _points(10, 2)
    t = SimilarityTransform.from_numpy(
        1.5, Rotation.from_euler("xyz", [10, 20, 30], degrees=True).as_matrix(), np.ones(3)
    )
    q = t.apply_points(p).clone()
    q[0] += 5.0
    weights = torch.ones(10, dtype=torch.float64)
    weights[0] = 0.0
    fitted, _ = umeyama_fit(p, q, weights)
    assert float(fitted.scale) == pytest.approx(1.5, abs=1e-9)


def test_umeyama_gradcheck():
    rng = np.random.default_rng(3)
    for trial in range(20):
        p = _points(6, 100 + trial).requires_grad_(True)
        t = random_similarity(rng, scale_range=(0.5, 2.0))
        noise = 0.05 * _points(6, 200 + trial)
        q = (t.apply_points(p.detach()) + noise).requires_grad_(True)

        def residual_and_pose(a, b):
            fitted, residual = umeyama_fit(a, b)
            return residual, fitted.scale, fitted.rotation, fitted.translation

        assert torch.autograd.gradcheck(residual_and_pose, (p, q), atol=1e-6, rtol=1e-2)


# =====================================================
# CORRESPONDENCES
# =====================================================


def test_ratio_test_weights():
    """w = 1 - D1/D2 over the two smallest cosine distances."""
    feats_a = torch.tensor([[0.8, 0.6]], dtype=torch.float64)
    feats_b = torch.tensor([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]], dtype=torch.float64)
    corrs = explore_correspondences(
        feats_a, feats_b, _points(1, 0), _points(3, 1), CorrespondenceConfig(top_k=1)
    )
    assert corrs.scene_index.tolist() == [1]
    assert float(corrs.w[0]) == pytest.approx(0.8)


def test_ratio_test_duplicate_candidates_weight_zero():
    feats = torch.tensor([[1.0, 0.0], [1.0, 0.0]], dtype=torch.float64)
    corrs = explore_correspondences(
        feats[:1], feats, _points(1, 0), _points(2, 1), CorrespondenceConfig(top_k=1)
    )
    assert float(corrs.w[0]) == 0.0


def test_explore_correspondences_needs_two_candidates():
    with pytest.raises(TooFewCandidates):
        explore_correspondences(
            torch.eye(2).double(),
            torch.eye(2)[:1].double(),
            _points(2, 0),
            _points(1, 1),
            CorrespondenceConfig(),
        )


def test_top_k_keeps_highest_weights():
    feats = torch.eye(8, dtype=torch.float64)
    corrs = explore_correspondences(
        feats, feats, _points(8, 0), _points(8, 1), CorrespondenceConfig(top_k=5)
    )
    assert len(corrs) == 5
    assert torch.equal(corrs.model_index, corrs.scene_index)


def _identity_set(n: int) -> CorrespondenceSet:
    p = _points(n, 4)
    return CorrespondenceSet(p, p.clone(), torch.ones(n).double(), torch.arange(n), torch.arange(n))


def test_split_groups_sizes_and_determinism():
    corrs = _identity_set(20)
    cfg = CorrespondenceConfig(groups=7, group_size=6)
    groups = split_groups(corrs, cfg, seed=5)
    assert len(groups) == 7
    for group in groups:
        assert len(group) == 6
        assert len(set(group.model_index.tolist())) == 6
    again = split_groups(corrs, cfg, seed=5)
    assert all(torch.equal(a.model_index, b.model_index) for a, b in zip(groups, again))


def test_split_groups_shrinks_to_available_pairs():
    groups = split_groups(_identity_set(3), CorrespondenceConfig(groups=2, group_size=40), seed=0)
    assert [len(g) for g in groups] == [3, 3]


def test_split_groups_empty():
    empty = _identity_set(3).subset(torch.zeros(0, dtype=torch.long))
    with pytest.raises(EmptySet):
        split_groups(empty, CorrespondenceConfig(), seed=0)


def test_select_best_group_skips_degenerate():
    good = _identity_set(5)
    line = good.subset(torch.tensor([0, 0, 0]))
    index, transform, residuals = select_best_group([line, good])
    assert index == 1
    assert residuals[0] == float("inf")
    assert float(transform.scale) == pytest.approx(1.0)


def test_select_best_group_all_degenerate():
    line = _identity_set(5).subset(torch.tensor([0, 0, 0]))
    with pytest.raises(AllGroupsDegenerate):
        select_best_group([line, line])


def test_select_best_group_rejects_shuffled_group():
    """A group whose targets are shuffled fits worse than the clean one and is not chosen."""
    rotation = Rotation.from_euler("xyz", [10, 40, -25], degrees=True).as_matrix()
    t = SimilarityTransform.from_numpy(0.5, rotation, np.array([0.2, 0.0, 1.0]))
    p = _points(12, 8)
    q = t.apply_points(p)
    clean = CorrespondenceSet(p, q, torch.ones(12).double(), torch.arange(12), torch.arange(12))
    shuffle = torch.randperm(12, generator=torch.Generator().manual_seed(1))
    poisoned = CorrespondenceSet(p, q[shuffle], clean.w, clean.model_index, shuffle)

    index, transform, residuals = select_best_group([poisoned, clean])
    assert index == 1
    assert residuals[0] > residuals[1]
    assert float(transform.scale) == pytest.approx(0.5, abs=1e-9)


def test_estimate_pose_invariant_to_scene_order():
    """Reordering the scene cloud (with its features) leaves the estimate unchanged."""
    model = PointCloud(_points(40, 6))
    rotation = Rotation.from_euler("zyx", [-15, 35, 70], degrees=True).as_matrix()
    t = SimilarityTransform.from_numpy(0.3, rotation, np.array([0.0, 0.1, 0.9]))
    noise = 0.002 * _points(40, 7)
    scene_points = t.apply_points(model.points) + noise
    feats = torch.eye(40, dtype=torch.float64)
    cfg = CorrespondenceConfig(top_k=40, groups=5, group_size=6)

    base = estimate_pose_scale(
        model, PointCloud(scene_points), None, cfg, seed=3, features=(feats, feats)
    )
    perm = torch.randperm(40, generator=torch.Generator().manual_seed(2))
    shuffled = estimate_pose_scale(
        model,
        PointCloud(scene_points[perm]),
        None,
        cfg,
        seed=3,
        features=(feats, feats[perm]),
    )
    assert shuffled.group_index == base.group_index
    assert float(shuffled.transform.scale) == pytest.approx(float(base.transform.scale), abs=1e-6)
    torch.testing.assert_close(
        shuffled.transform.rotation, base.transform.rotation, atol=1e-6, rtol=0
    )
    torch.testing.assert_close(
        shuffled.transform.translation, base.transform.translation, atol=1e-6, rtol=0
    )


def test_estimate_pose_with_exact_features():
    """One-hot features make every pair correct, so the pose is exact."""
    model = PointCloud(_points(40, 6))
    rotation = Rotation.from_euler("zyx", [30, -20, 60], degrees=True).as_matrix()
    t = SimilarityTransform.from_numpy(0.2, rotation, np.array([0.1, -0.05, 0.8]))
    perm = torch.randperm(40, generator=torch.Generator().manual_seed(0))
    scene = PointCloud(t.apply_points(model.points)[perm])
    feats_a = torch.eye(40, dtype=torch.float64)
    feats_b = feats_a[perm]
    estimate = estimate_pose_scale(
        model,
        scene,
        None,
        CorrespondenceConfig(top_k=40, groups=5, group_size=4),
        seed=0,
        features=(feats_a, feats_b),
    )
    assert float(estimate.transform.scale) == pytest.approx(0.2, abs=1e-9)
    torch.testing.assert_close(estimate.transform.translation, t.translation)
    assert len(estimate.residuals) == 5


# =====================================================
# NETWORK / LOSS
# =====================================================


def _net() -> RegistrationNet:
    torch.manual_seed(0)
    cfg = RegistrationConfig(
        sa_centers=[32, 8], sa_widths=[16, 32], sa_neighbors=8, feature_dim=16
    )
    return RegistrationNet(cfg, AttentionConfig(heads=2, head_dim=8, projection_dim=8)).double()


def test_registration_features_are_unit_vectors():
    feats_a, feats_b = extract_registration_features(
        PointCloud(_points(64, 0)), PointCloud(_points(50, 1)), _net()
    )
    assert feats_a.shape == (64, 16)
    assert feats_b.shape == (50, 16)
    torch.testing.assert_close(feats_a.norm(dim=1), torch.ones(64, dtype=torch.float64))


def test_registration_features_too_few_points():
    with pytest.raises(TooFewPoints):
        extract_registration_features(PointCloud(_points(64, 0)), PointCloud(_points(8, 1)), _net())


def test_registration_features_swap_with_inputs():
    net = _net().eval()
    model = PointCloud(_points(64, 0))
    scene = PointCloud(_points(50, 1))
    with torch.no_grad():
        feats_a, feats_b = extract_registration_features(model, scene, net)
        swapped_a, swapped_b = extract_registration_features(scene, model, net)
    torch.testing.assert_close(swapped_a, feats_b)
    torch.testing.assert_close(swapped_b, feats_a)


def test_registration_features_identical_inputs_match():
    net = _net().eval()
    cloud = PointCloud(_points(64, 0))
    with torch.no_grad():
        feats_a, feats_b = extract_registration_features(cloud, cloud, net)
    torch.testing.assert_close(feats_a, feats_b)


def test_registration_loss_terms():
    scene = PointCloud(_points(30, 0))
    corrs = _identity_set(10)
    loss = registration_loss(scene, scene, corrs, SimilarityTransform.identity(), PoseLossWeights())
    assert float(loss.terms["geo"]) == 0.0
    assert float(loss.terms["w_corr"]) == 0.0

    shifted = SimilarityTransform.from_numpy(1.0, np.eye(3), np.array([0.0, 0.0, 0.1]))
    loss = registration_loss(scene, scene, corrs, shifted, PoseLossWeights())
    # every pair is off by 0.1 m with weight 1
    assert float(loss.terms["w_corr"]) == pytest.approx(0.01)
    assert float(loss.total) == pytest.approx(0.1 * 0.01)


def test_registration_loss_backpropagates_to_network():
    net = _net()
    model = PointCloud(_points(64, 2))
    scene = PointCloud(_points(64, 3) * 0.2 + torch.tensor([0.0, 0.0, 1.0]).double())
    estimate = estimate_pose_scale(
        model, scene, net, CorrespondenceConfig(top_k=30, groups=3, group_size=10), seed=0
    )
    lifted = PointCloud(estimate.transform.apply_points(model.points))
    loss = registration_loss(
        lifted, scene, estimate.correspondences, estimate.transform, PoseLossWeights()
    )
    loss.total.backward()
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in net.parameters())
