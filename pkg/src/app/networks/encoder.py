"""Shift- and scale-invariant graph-convolution encoder.

Every layer sees geometry only through unit direction vectors from a point to its k
nearest neighbors. Unit directions and k-NN graphs do not change under global
translation or uniform positive scaling, so neither do the features.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config.experiment import EncoderConfig
from ..errors import GraphMismatch, TooFewPoints
from ..geometry.losses import squared_distances
from ..geometry.sampling import farthest_point_sample

MIN_POINTS = 32


# =====================================================
# GRAPH HELPERS
# =====================================================


def build_knn_graph(points: torch.Tensor, k: int) -> torch.Tensor:
    """Indices (N, k) of each point's k nearest neighbors, itself excluded.

    Ties are broken by ascending index.

    Raises:
        TooFewPoints: If N <= k.
    """
    n = points.shape[0]
    if n <= k:
        raise TooFewPoints(f"k-NN graph with k={k} needs more than {k} points, got {n}")
    d = squared_distances(points.detach(), points.detach())
    d.fill_diagonal_(float("inf"))
    order = torch.sort(d, dim=1, stable=True).indices
    return order[:, :k]


def neighbor_directions(points: torch.Tensor, graph: torch.Tensor) -> torch.Tensor:
    """Unit vectors (N, k, 3) from each point to its neighbors."""
    offsets = points[graph] - points.unsqueeze(1)
    return F.normalize(offsets, dim=-1)


def _check_graph(points: torch.Tensor, graph: torch.Tensor, features: torch.Tensor | None) -> None:
    n = points.shape[0]
    if graph.dim() != 2 or graph.shape[0] != n:
        raise GraphMismatch(f"graph has {graph.shape[0]} rows for {n} points")
    if graph.numel() and (graph.min() < 0 or graph.max() >= n):
        raise GraphMismatch("graph references a point that does not exist")
    if features is not None and features.shape[0] != n:
        raise GraphMismatch(f"{features.shape[0]} feature rows for {n} points")


# =====================================================
# LAYERS
# =====================================================


class SurfaceConv(nn.Module):
    """First layer: responses from neighbor directions alone."""

    def __init__(self, kernel_num: int, support_num: int = 1):
        super().__init__()
        self.kernel_num = kernel_num
        self.support_num = support_num
        self.directions = nn.Parameter(torch.randn(3, support_num * kernel_num))
        with torch.no_grad():
            self.directions.copy_(F.normalize(self.directions, dim=0))

    def forward(self, points: torch.Tensor, graph: torch.Tensor) -> torch.Tensor:
        _check_graph(points, graph, None)
        n, k = graph.shape
        dirs = neighbor_directions(points, graph)
        theta = F.relu(dirs @ F.normalize(self.directions, dim=0))
        theta = theta.view(n, k, self.support_num, self.kernel_num)
        return theta.max(dim=1).values.sum(dim=1)


class InvariantConv(nn.Module):
    """Graph convolution: center term plus max over neighbors of direction-gated features."""

    def __init__(self, in_channel: int, out_channel: int, support_num: int = 1):
        super().__init__()
        self.in_channel = in_channel
        self.out_channel = out_channel
        self.support_num = support_num

        stdv = 1.0 / math.sqrt(out_channel * (support_num + 1))
        self.weights = nn.Parameter(
            torch.empty(in_channel, (support_num + 1) * out_channel).uniform_(-stdv, stdv)
        )
        self.bias = nn.Parameter(torch.empty((support_num + 1) * out_channel).uniform_(-stdv, stdv))
        self.directions = nn.Parameter(
            F.normalize(torch.randn(3, support_num * out_channel), dim=0)
        )

    def forward(
        self, points: torch.Tensor, features: torch.Tensor, graph: torch.Tensor
    ) -> torch.Tensor:
        _check_graph(points, graph, features)
        n, k = graph.shape
        dirs = neighbor_directions(points, graph)
        theta = F.relu(dirs @ F.normalize(self.directions, dim=0))

        out = features @ self.weights + self.bias
        center = out[:, : self.out_channel]
        support = out[:, self.out_channel :][graph]

        activation = (theta * support).view(n, k, self.support_num, self.out_channel)
        return center + activation.max(dim=1).values.sum(dim=1)


def invariant_conv_layer(
    points: torch.Tensor,
    features: torch.Tensor,
    graph: torch.Tensor,
    layer: InvariantConv,
) -> torch.Tensor:
    """Apply one invariant convolution.

    Raises:
        GraphMismatch: If ``graph`` or ``features`` do not match ``points``.
    """
    return layer(points, features, graph)


# =====================================================
# PYRAMID
# =====================================================


@dataclass
class FeatureLevel:
    """Per-point features of one level; ``indices`` point into the encoder input."""

    features: torch.Tensor
    indices: torch.Tensor
    points: torch.Tensor


@dataclass
class FeaturePyramid:
    levels: list[FeatureLevel]
    global_feature: torch.Tensor

    @property
    def num_levels(self) -> int:
        return len(self.levels)


class InvariantEncoder(nn.Module):
    """Multi-level encoder with farthest-point downsampling between levels."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        widths = cfg.level_widths
        self.surface = SurfaceConv(widths[0], cfg.support_num)
        self.convs = nn.ModuleList(
            InvariantConv(widths[i - 1], widths[i], cfg.support_num) for i in range(1, len(widths))
        )

    @property
    def out_width(self) -> int:
        return self.cfg.level_widths[-1]

    def forward(self, points: torch.Tensor) -> FeaturePyramid:
        n = points.shape[0]
        if n < MIN_POINTS:
            raise TooFewPoints(f"encoder needs at least {MIN_POINTS} points, got {n}")
        points = points.to(self.surface.directions.dtype)

        indices = torch.arange(n, device=points.device)
        count = self._level_count(n, 0)
        if count < n:
            indices = farthest_point_sample(points, count)
        level_points = points[indices]
        graph = build_knn_graph(level_points, min(self.cfg.neighbors_k, count - 1))
        features = F.relu(self.surface(level_points, graph))
        levels = [FeatureLevel(features, indices, level_points)]

        for i, conv in enumerate(self.convs, start=1):
            prev = levels[-1]
            count = min(self._level_count(n, i), prev.points.shape[0])
            keep = farthest_point_sample(prev.points, count)
            # k-NN max pool on the finer level before subsampling
            pooled = prev.features[graph].max(dim=1).values[keep]
            level_points = prev.points[keep]
            graph = build_knn_graph(level_points, min(self.cfg.neighbors_k, count - 1))
            features = F.relu(conv(level_points, pooled, graph))
            levels.append(FeatureLevel(features, prev.indices[keep], level_points))

        return FeaturePyramid(levels, levels[-1].features.max(dim=0).values)

    def _level_count(self, n: int, level: int) -> int:
        # at least 4 points so every level has a 3-neighbor graph
        return max(4, int(round(self.cfg.downsample_ratios[level] * n)))


def encode_multiscale(points: torch.Tensor, encoder: InvariantEncoder) -> FeaturePyramid:
    """Encode an (N, 3) cloud into a feature pyramid.

    Raises:
        TooFewPoints: If N < 32.
    """
    return encoder(points)
