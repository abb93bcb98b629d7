"""Partial-to-complete registration.

A shared (Siamese) point backbone with self and cross attention produces unit features
for the model and scene clouds. Feature nearest neighbors with a ratio-test weight give
candidate pairs; random groups of pairs are each fitted in closed form and the group with
the lowest residual wins.
"""

from dataclasses import dataclass, field
from typing import Optional

import structlog
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config.experiment import (
    AttentionConfig,
    CorrespondenceConfig,
    PoseLossWeights,
    RegistrationConfig,
)
from ..errors import (
    AllGroupsDegenerate,
    DegenerateConfiguration,
    EmptySet,
    ShapeMismatch,
    TooFewCandidates,
    TooFewPoints,
)
from ..geometry.losses import Reduction, chamfer_tensors, cosine_distance_matrix
from ..geometry.types import PointCloud, SimilarityTransform
from .attention import AttentionBlock
from .encoder import MIN_POINTS
from .fitting import umeyama_fit
from .pointnet import FeaturePropagation, SetAbstraction, normalize_cloud
from .results import LossBreakdown

logger = structlog.get_logger()


# =====================================================
# FEATURES
# =====================================================


class RegistrationNet(nn.Module):
    """Set abstraction to a coarse level, attention there, propagation back to every point."""

    def __init__(self, cfg: RegistrationConfig, attention_cfg: AttentionConfig):
        super().__init__()
        self.cfg = cfg
        self.down = nn.ModuleList()
        in_channel = 0
        for centers, width in zip(cfg.sa_centers, cfg.sa_widths):
            self.down.append(
                SetAbstraction(centers, cfg.sa_neighbors, in_channel, [width // 2, width])
            )
            in_channel = width
        coarse = cfg.sa_widths[-1]
        self.self_attention = AttentionBlock(coarse, attention_cfg)
        self.cross_attention = AttentionBlock(coarse, attention_cfg)

        self.up = nn.ModuleList()
        widths = list(cfg.sa_widths)
        for level in range(len(widths) - 1, 0, -1):
            self.up.append(
                FeaturePropagation(widths[level - 1] + widths[level], [widths[level - 1]])
            )
        self.up.append(FeaturePropagation(widths[0], [cfg.feature_dim, cfg.feature_dim]))
        self.head = nn.Linear(cfg.feature_dim, cfg.feature_dim)

    def _encode(self, points: torch.Tensor):
        xyz = [points]
        feats: list[Optional[torch.Tensor]] = [None]
        for sa in self.down:
            centers, f = sa(xyz[-1], feats[-1])
            xyz.append(centers)
            feats.append(f)
        return xyz, feats

    def _decode(self, xyz, feats, coarse: torch.Tensor) -> torch.Tensor:
        current = coarse
        for i, fp in enumerate(self.up):
            fine = len(xyz) - 2 - i
            current = fp(xyz[fine], xyz[fine + 1], feats[fine], current)
        return F.normalize(self.head(current), dim=-1)

    def forward(self, model_points: torch.Tensor, scene_points: torch.Tensor):
        weight = self.head.weight
        home = model_points.device
        a = normalize_cloud(model_points.to(weight.device, weight.dtype))
        b = normalize_cloud(scene_points.to(weight.device, weight.dtype))
        xyz_a, feats_a = self._encode(a)
        xyz_b, feats_b = self._encode(b)

        ctx_a = self.self_attention(feats_a[-1], feats_a[-1])
        ctx_b = self.self_attention(feats_b[-1], feats_b[-1])
        # both directions read the same inputs so swapping the clouds swaps the outputs
        cross_a = self.cross_attention(ctx_a, ctx_b)
        cross_b = self.cross_attention(ctx_b, ctx_a)
        return (
            self._decode(xyz_a, feats_a, cross_a).to(home),
            self._decode(xyz_b, feats_b, cross_b).to(home),
        )


def extract_registration_features(
    model_pc: PointCloud, scene_pc: PointCloud, net: RegistrationNet
) -> tuple[torch.Tensor, torch.Tensor]:
    """Unit-norm per-point features for both clouds.

    Raises:
        TooFewPoints: If either cloud has fewer than 32 points.
    """
    for name, pc in (("model", model_pc), ("scene", scene_pc)):
        if len(pc) < MIN_POINTS:
            raise TooFewPoints(f"{name} cloud needs at least {MIN_POINTS} points, got {len(pc)}")
    return net(model_pc.points, scene_pc.points)


# =====================================================
# CORRESPONDENCES
# =====================================================


@dataclass
class CorrespondenceSet:
    """Pairs p (model frame) -> q (camera frame) with weights in [0, 1]."""

    p: torch.Tensor
    q: torch.Tensor
    w: torch.Tensor
    model_index: torch.Tensor
    scene_index: torch.Tensor

    def __len__(self) -> int:
        return int(self.p.shape[0])

    def subset(self, index: torch.Tensor) -> "CorrespondenceSet":
        return CorrespondenceSet(
            self.p[index],
            self.q[index],
            self.w[index],
            self.model_index[index],
            self.scene_index[index],
        )


def explore_correspondences(
    feats_a: torch.Tensor,
    feats_b: torch.Tensor,
    pts_a: torch.Tensor,
    pts_b: torch.Tensor,
    cfg: CorrespondenceConfig,
    eps: float = 1e-12,
) -> CorrespondenceSet:
    """Match every point of ``a`` to its nearest feature in ``b`` and keep the top K by weight.

    The weight is 1 - D1/D2 for the two smallest cosine distances, 0 when D2 vanishes.

    Raises:
        TooFewCandidates: If ``b`` has fewer than two points.
        ShapeMismatch: If features and points disagree in count.
    """
    if feats_a.shape[0] != pts_a.shape[0] or feats_b.shape[0] != pts_b.shape[0]:
        raise ShapeMismatch("feature and point counts differ")
    if pts_b.shape[0] < 2:
        raise TooFewCandidates(f"ratio test needs two candidates, got {pts_b.shape[0]}")

    dist = cosine_distance_matrix(feats_a, feats_b)
    nearest = torch.sort(dist.detach(), dim=1, stable=True).indices[:, :2]
    d1 = dist.gather(1, nearest[:, :1]).squeeze(1)
    d2 = dist.gather(1, nearest[:, 1:2]).squeeze(1)
    ratio = d1 / d2.clamp_min(eps)
    w = torch.where(d2 > eps, 1.0 - ratio, torch.zeros_like(d1)).clamp(0.0, 1.0)

    order = torch.sort(w.detach(), descending=True, stable=True).indices[: cfg.top_k]
    scene_index = nearest[order, 0]
    return CorrespondenceSet(
        p=pts_a[order],
        q=pts_b[scene_index],
        w=w[order],
        model_index=order,
        scene_index=scene_index,
    )


def split_groups(
    corrs: CorrespondenceSet, cfg: CorrespondenceConfig, seed: int
) -> list[CorrespondenceSet]:
    """G groups of min(K_g, |corrs|) pairs; no repeats inside a group, repeats across groups.

    Raises:
        EmptySet: If ``corrs`` is empty.
    """
    n = len(corrs)
    if n == 0:
        raise EmptySet("no correspondences to split")
    size = min(cfg.group_size, n)
    generator = torch.Generator().manual_seed(seed)
    groups = []
    for _ in range(cfg.groups):
        index = torch.randperm(n, generator=generator)[:size].to(corrs.p.device)
        groups.append(corrs.subset(index))
    return groups


# =====================================================
# POSE
# =====================================================


@dataclass
class PoseEstimate:
    transform: SimilarityTransform
    correspondences: CorrespondenceSet
    group_index: int
    residuals: list[float] = field(default_factory=list)
    groups: list[CorrespondenceSet] = field(default_factory=list)

    @property
    def best_group(self) -> CorrespondenceSet:
        return self.groups[self.group_index]


def fit_group(group: CorrespondenceSet, weighted: bool) -> tuple[SimilarityTransform, torch.Tensor]:
    weights = group.w if weighted and float(group.w.detach().sum()) > 0 else None
    return umeyama_fit(group.p, group.q, weights)


def select_best_group(
    groups: list[CorrespondenceSet], weighted: bool = True
) -> tuple[int, SimilarityTransform, list[float]]:
    """Fit every group and return the lowest-residual one; ties go to the lowest index.

    Raises:
        AllGroupsDegenerate: If no group can be fitted.
    """
    best: Optional[tuple[int, SimilarityTransform]] = None
    best_residual = float("inf")
    residuals: list[float] = []
    for i, group in enumerate(groups):
        try:
            transform, residual = fit_group(group, weighted)
        except DegenerateConfiguration as e:
            logger.debug("Degenerate correspondence group", group=i, error=e.message)
            residuals.append(float("inf"))
            continue
        value = float(residual.detach())
        residuals.append(value)
        if value < best_residual:
            best_residual = value
            best = (i, transform)
    if best is None:
        raise AllGroupsDegenerate(f"all {len(groups)} correspondence groups are degenerate")
    return best[0], best[1], residuals


def estimate_pose_scale(
    model_pc: PointCloud,
    scene_pc: PointCloud,
    net: Optional[RegistrationNet],
    cfg: CorrespondenceConfig,
    seed: int,
    weighted: bool = True,
    features: Optional[tuple[torch.Tensor, torch.Tensor]] = None,
) -> PoseEstimate:
    """Features, correspondences, groups, per-group fit; keep the lowest residual.

    Args:
        model_pc: Points sampled on the deformed model, normalized frame.
        scene_pc: Observed points, camera frame.
        net: Feature network; unused when ``features`` is given.
        cfg: Top-K and grouping parameters.
        seed: Seed for group sampling.
        weighted: Weight each pair by its ratio-test confidence in the fit.
        features: Precomputed (model, scene) features.

    Returns:
        The selected transform with the correspondences it came from.
    """
    if features is None:
        if net is None:
            raise ShapeMismatch("either a network or precomputed features are required")
        features = extract_registration_features(model_pc, scene_pc, net)
    feats_a, feats_b = features
    corrs = explore_correspondences(feats_a, feats_b, model_pc.points, scene_pc.points, cfg)
    groups = split_groups(corrs, cfg, seed)
    index, transform, residuals = select_best_group(groups, weighted)
    return PoseEstimate(
        transform=transform,
        correspondences=corrs,
        group_index=index,
        residuals=residuals,
        groups=groups,
    )


def registration_loss(
    lifted_pred: PointCloud,
    scene_pc: PointCloud,
    corrs: CorrespondenceSet,
    t: SimilarityTransform,
    weights: PoseLossWeights,
    reduction: Reduction = "mean",
) -> LossBreakdown:
    """λ_geo·chamfer(lifted, scene) + λ_w_corr·mean_i w_i·||q_i - t(p_i)||².

    The correspondence term averages over the pairs actually present.

    Raises:
        EmptyCloud: If either cloud is empty.
    """
    l_geo = chamfer_tensors(lifted_pred.points, scene_pc.points, reduction)
    if len(corrs) == 0:
        l_corr = l_geo * 0.0
    else:
        p = corrs.p.to(t.rotation.dtype)
        q = corrs.q.to(t.rotation.dtype)
        err = (q - t.apply_points(p)).pow(2).sum(dim=1)
        l_corr = (corrs.w.to(err.dtype) * err).sum() / len(corrs)
    l_corr = l_corr.to(l_geo.dtype)
    total = weights.lambda_geo * l_geo + weights.lambda_w_corr * l_corr
    return LossBreakdown(total, {"geo": l_geo, "w_corr": l_corr})
