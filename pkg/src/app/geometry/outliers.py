"""Mean-shift outlier removal for aggregated multi-view clouds.

Gaussian kernel truncated at one bandwidth, seeds from a bandwidth-sized grid, modes
closer than half a bandwidth merged into the stronger one.
"""

import numpy as np
import structlog
import torch
from sklearn.cluster import get_bin_seeds
from sklearn.neighbors import NearestNeighbors

from ..errors import EmptyCloud, InvalidCount
from .types import PointCloud

logger = structlog.get_logger()

SHIFT_TOLERANCE = 1e-5
MAX_ITERATIONS = 300


def shift_to_mode(
    seed: np.ndarray, points: np.ndarray, neighbors: NearestNeighbors, bandwidth: float
) -> tuple[np.ndarray, int]:
    """Climb from ``seed`` to a density mode; returns the mode and its neighbor count."""
    mean = seed
    support = 0
    for _ in range(MAX_ITERATIONS):
        index = neighbors.radius_neighbors(mean[None], bandwidth, return_distance=False)[0]
        if len(index) == 0:
            break
        local = points[index]
        weights = np.exp(-((local - mean) ** 2).sum(axis=1) / (2.0 * bandwidth**2))
        shifted = weights @ local / weights.sum()
        support = len(index)
        moved = float(np.linalg.norm(shifted - mean))
        mean = shifted
        if moved < SHIFT_TOLERANCE:
            break
    return mean, support


def merge_modes(modes: np.ndarray, support: np.ndarray, radius: float) -> np.ndarray:
    """Keep modes strongest first, dropping any within ``radius`` of a kept one."""
    kept: list[np.ndarray] = []
    for i in np.argsort(-support, kind="stable"):
        if all(np.linalg.norm(modes[i] - k) >= radius for k in kept):
            kept.append(modes[i])
    return np.stack(kept)


def meanshift_labels(points: np.ndarray, bandwidth: float) -> np.ndarray:
    """Cluster label per point; -1 for points farther than one bandwidth from every mode."""
    if len(points) == 1:
        return np.zeros(1, dtype=np.int64)
    seeds = get_bin_seeds(points, bandwidth, min_bin_freq=1)
    neighbors = NearestNeighbors().fit(points)
    climbed = [shift_to_mode(seed, points, neighbors, bandwidth) for seed in seeds]
    climbed = [(mode, n) for mode, n in climbed if n > 0]
    modes = merge_modes(
        np.stack([mode for mode, _ in climbed]),
        np.array([n for _, n in climbed]),
        bandwidth / 2.0,
    )

    distance, nearest = NearestNeighbors(n_neighbors=1).fit(modes).kneighbors(points)
    labels = nearest[:, 0].astype(np.int64)
    within = distance[:, 0] <= bandwidth
    if within.any():
        labels[~within] = -1
    logger.debug("Mean shift finished", seeds=len(seeds), modes=len(modes))
    return labels


def meanshift_inlier_mask(points: np.ndarray, bandwidth: float) -> np.ndarray:
    """Boolean mask of the points in the most populated cluster; ties go to the lower label."""
    labels = meanshift_labels(points, bandwidth)
    counts = np.bincount(labels[labels >= 0])
    return labels == int(np.argmax(counts))


def meanshift_outlier_filter(pc: PointCloud, bandwidth: float) -> PointCloud:
    """Keep only the largest mean-shift cluster; output order follows input order.

    Raises:
        EmptyCloud: If ``pc`` is empty.
        InvalidCount: If ``bandwidth`` is not positive.
    """
    if pc.is_empty:
        raise EmptyCloud("cannot filter an empty point cloud")
    if bandwidth <= 0:
        raise InvalidCount(f"bandwidth must be positive, got {bandwidth}")
    mask = meanshift_inlier_mask(pc.numpy(), bandwidth)
    return pc.subset(torch.as_tensor(np.flatnonzero(mask), device=pc.points.device))
