"""Similarity transform operations."""

import math

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from ..errors import EmptyCloud
from .types import PointCloud, SimilarityTransform


def apply_similarity(t: SimilarityTransform, pc: PointCloud) -> PointCloud:
    """Map every point p to s·R·p + T.

    Raises:
        EmptyCloud: If ``pc`` has no points.
    """
    if pc.is_empty:
        raise EmptyCloud("cannot transform an empty point cloud")
    points = pc.points.to(t.rotation.dtype)
    return PointCloud(t.apply_points(points))


def invert_similarity(t: SimilarityTransform) -> SimilarityTransform:
    """Inverse transform: s' = 1/s, R' = Rᵀ, T' = -(1/s)·Rᵀ·T."""
    inv_scale = 1.0 / t.scale
    rt = t.rotation.T
    return SimilarityTransform(inv_scale, rt, -inv_scale * (rt @ t.translation))


def compose_similarity(
    outer: SimilarityTransform, inner: SimilarityTransform
) -> SimilarityTransform:
    """``outer ∘ inner``."""
    return outer.compose(inner)


def rotation_about_axis(
    axis: str, degrees: float, dtype: torch.dtype = torch.float64
) -> torch.Tensor:
    """Right-handed rotation matrix about ``x``, ``y`` or ``z``."""
    matrix = Rotation.from_euler(axis, degrees, degrees=True).as_matrix()
    return torch.as_tensor(matrix, dtype=dtype)


def random_similarity(
    generator: np.random.Generator,
    scale_range: tuple[float, float] = (0.2, 5.0),
    translation_scale: float = 1.0,
) -> SimilarityTransform:
    """Random transform with uniformly distributed rotation."""
    rotation = Rotation.random(random_state=generator).as_matrix()
    scale = generator.uniform(*scale_range)
    translation = generator.normal(scale=translation_scale, size=3)
    return SimilarityTransform.from_numpy(scale, rotation, translation)


def rotation_angle_degrees(r_a: torch.Tensor, r_b: torch.Tensor) -> float:
    """Geodesic angle of r_aᵀ·r_b in degrees."""
    relative = (r_a.detach().double().T @ r_b.detach().double()).cpu().numpy()
    return math.degrees(float(Rotation.from_matrix(relative).magnitude()))
