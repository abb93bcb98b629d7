"""Point-set distances used as training losses."""

from typing import Literal

import torch

from ..errors import EmptyCloud, ShapeMismatch, ZeroVector
from .types import PointCloud

Reduction = Literal["sum", "mean"]


def squared_distances(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise squared Euclidean distances, shape (len(a), len(b))."""
    diff = a[:, None, :] - b[None, :, :]
    return (diff * diff).sum(dim=-1)


def chamfer_tensors(a: torch.Tensor, b: torch.Tensor, reduction: Reduction = "sum") -> torch.Tensor:
    """Chamfer distance between two (N, 3) / (M, 3) tensors."""
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyCloud("chamfer distance needs two non-empty clouds")
    if a.dtype != b.dtype:
        b = b.to(a.dtype)
    d = squared_distances(a, b)
    a_to_b = d.min(dim=1).values
    b_to_a = d.min(dim=0).values
    if reduction == "mean":
        return a_to_b.mean() + b_to_a.mean()
    return a_to_b.sum() + b_to_a.sum()


def chamfer_distance(a: PointCloud, b: PointCloud, reduction: Reduction = "sum") -> torch.Tensor:
    """Bidirectional sum of squared nearest-neighbor distances.

    Args:
        a: First cloud.
        b: Second cloud.
        reduction: ``"sum"`` over points, or ``"mean"`` per direction.

    Returns:
        Scalar tensor, differentiable w.r.t. both point sets.

    Raises:
        EmptyCloud: If either cloud is empty.
    """
    return chamfer_tensors(a.points, b.points, reduction)


def cosine_feature_distance(f: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """1 - cos(f, g), in [0, 2].

    Raises:
        ShapeMismatch: If the vectors differ in length.
        ZeroVector: If either vector has zero norm.
    """
    if f.shape != g.shape:
        raise ShapeMismatch(f"feature shapes differ: {tuple(f.shape)} vs {tuple(g.shape)}")
    nf = torch.linalg.norm(f)
    ng = torch.linalg.norm(g)
    if float(nf.detach()) == 0.0 or float(ng.detach()) == 0.0:
        raise ZeroVector("cosine distance is undefined for a zero vector")
    return 1.0 - (f @ g) / (nf * ng)


def cosine_distance_matrix(fa: torch.Tensor, fb: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Pairwise cosine distances between rows of ``fa`` (N, C) and ``fb`` (M, C)."""
    na = fa / fa.norm(dim=-1, keepdim=True).clamp_min(eps)
    nb = fb / fb.norm(dim=-1, keepdim=True).clamp_min(eps)
    return (1.0 - na @ nb.T).clamp(0.0, 2.0)
