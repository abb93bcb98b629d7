"""Coarse object point cloud from several posed depth views."""

import structlog
import torch

from ..errors import TooFewViews
from ..geometry.outliers import meanshift_outlier_filter
from ..geometry.rotations import farthest_rotation_sample
from ..geometry.transforms import invert_similarity
from ..geometry.types import PointCloud, UnitQuaternion
from .scenes import SceneSample

logger = structlog.get_logger()

DEFAULT_VIEWS = 16


def select_views(views: list[SceneSample], n_views: int, seed: int) -> list[int]:
    """Indices of ``n_views`` views spread as far apart in rotation as possible."""
    rotations = [UnitQuaternion.from_matrix(v.gt_transform.rotation) for v in views]
    return farthest_rotation_sample(rotations, n_views, seed)


def build_coarse_pointcloud(
    views: list[SceneSample],
    n_views: int = DEFAULT_VIEWS,
    bandwidth: float = 1.0,
    seed: int = 0,
) -> PointCloud:
    """Aggregate masked depth of selected views in the normalized object frame.

    Each view's object points are mapped back through the inverse ground-truth similarity,
    the views are concatenated and outliers are removed with mean shift.

    Raises:
        TooFewViews: If fewer than ``n_views`` views are given or none has object pixels.
    """
    if len(views) < n_views:
        raise TooFewViews(f"need {n_views} views, got {len(views)}")

    selected = select_views(views, n_views, seed)
    parts = []
    for index in selected:
        view = views[index]
        camera_points = view.object_points()
        if camera_points.is_empty:
            continue
        inverse = invert_similarity(view.gt_transform)
        parts.append(inverse.apply_points(camera_points.points.to(inverse.rotation.dtype)))
    if not parts:
        raise TooFewViews("no selected view contains object pixels")

    merged = PointCloud(torch.cat(parts, dim=0))
    filtered = meanshift_outlier_filter(merged, bandwidth)
    logger.debug(
        "Coarse point cloud built",
        views=len(selected),
        points=len(merged),
        kept=len(filtered),
    )
    return filtered
