"""Hierarchical point encoder: set abstraction down, feature propagation back up."""

import torch
import torch.nn as nn

from ..geometry.losses import squared_distances
from ..geometry.sampling import farthest_point_sample


def normalize_cloud(points: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Center on the mean and divide by the RMS radius."""
    centered = points - points.mean(dim=0)
    rms = centered.pow(2).sum(dim=1).mean().sqrt().clamp_min(eps)
    return centered / rms


def _mlp(in_dim: int, widths: list[int]) -> nn.Sequential:
    layers: list[nn.Module] = []
    for width in widths:
        layers += [nn.Linear(in_dim, width), nn.ReLU()]
        in_dim = width
    return nn.Sequential(*layers)


class SetAbstraction(nn.Module):
    """Farthest-point centers, k-NN groups, shared MLP, max pool per group."""

    def __init__(self, n_centers: int, neighbors: int, in_channel: int, widths: list[int]):
        super().__init__()
        self.n_centers = n_centers
        self.neighbors = neighbors
        self.mlp = _mlp(in_channel + 3, widths)

    def forward(
        self, xyz: torch.Tensor, features: torch.Tensor | None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        n = xyz.shape[0]
        centers_idx = farthest_point_sample(xyz, min(self.n_centers, n))
        centers = xyz[centers_idx]
        k = min(self.neighbors, n)
        d = squared_distances(centers.detach(), xyz.detach())
        group = torch.sort(d, dim=1, stable=True).indices[:, :k]

        local = xyz[group] - centers.unsqueeze(1)
        if features is not None:
            local = torch.cat([local, features[group]], dim=-1)
        return centers, self.mlp(local).max(dim=1).values


class FeaturePropagation(nn.Module):
    """Inverse-distance interpolation from 3 nearest coarse points, then a shared MLP."""

    def __init__(self, in_channel: int, widths: list[int]):
        super().__init__()
        self.mlp = _mlp(in_channel, widths)

    def forward(
        self,
        xyz_fine: torch.Tensor,
        xyz_coarse: torch.Tensor,
        features_fine: torch.Tensor | None,
        features_coarse: torch.Tensor,
    ) -> torch.Tensor:
        if xyz_coarse.shape[0] == 1:
            interpolated = features_coarse.expand(xyz_fine.shape[0], -1)
        else:
            d = squared_distances(xyz_fine.detach(), xyz_coarse.detach())
            d, idx = torch.sort(d, dim=1, stable=True)
            k = min(3, xyz_coarse.shape[0])
            recip = 1.0 / (d[:, :k] + 1e-8)
            weight = recip / recip.sum(dim=1, keepdim=True)
            interpolated = (features_coarse[idx[:, :k]] * weight.unsqueeze(-1)).sum(dim=1)
        if features_fine is not None:
            interpolated = torch.cat([features_fine, interpolated], dim=-1)
        return self.mlp(interpolated)
