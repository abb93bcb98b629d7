"""Rotation distances and view selection."""

import numpy as np

from ..errors import InvalidCount, NonUnitQuaternion
from .types import UnitQuaternion


def quaternion_distance(q1: UnitQuaternion, q2: UnitQuaternion) -> float:
    """min(||q1 - q2||, ||q1 + q2||), in [0, √2]; q and -q are the same rotation."""
    a, b = q1.components, q2.components
    for q in (a, b):
        if abs(float(np.linalg.norm(q)) - 1.0) > 1e-6:
            raise NonUnitQuaternion("quaternion is not unit length")
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def quaternion_distance_matrix(quats: np.ndarray) -> np.ndarray:
    """Pairwise distances for an (N, 4) array of unit quaternions."""
    diff = np.linalg.norm(quats[:, None, :] - quats[None, :, :], axis=-1)
    summ = np.linalg.norm(quats[:, None, :] + quats[None, :, :], axis=-1)
    return np.minimum(diff, summ)


def farthest_rotation_sample(
    rotations: list[UnitQuaternion],
    k: int,
    seed: int,
    start: int | None = None,
) -> list[int]:
    """Greedy max-min selection of ``k`` rotations.

    The first index is element 0 of a seed-shuffled order unless ``start`` is given.
    Each following index maximizes the minimum distance to the selected set; ties go to
    the lowest index.

    Raises:
        InvalidCount: If k is not in [1, len(rotations)].
    """
    n = len(rotations)
    if not 1 <= k <= n:
        raise InvalidCount(f"cannot select {k} of {n} rotations")
    if start is None:
        start = int(np.random.default_rng(seed).permutation(n)[0])

    quats = np.stack([r.components for r in rotations])
    dist = quaternion_distance_matrix(quats)
    selected = [start]
    min_dist = dist[start].copy()
    min_dist[start] = -np.inf
    while len(selected) < k:
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        min_dist = np.minimum(min_dist, dist[nxt])
        min_dist[selected] = -np.inf
    return selected


def min_pairwise_distance(rotations: list[UnitQuaternion], indices: list[int]) -> float:
    """Smallest quaternion distance within a subset; inf for fewer than two."""
    if len(indices) < 2:
        return float("inf")
    quats = np.stack([rotations[i].components for i in indices])
    dist = quaternion_distance_matrix(quats)
    return float(dist[np.triu_indices(len(indices), k=1)].min())
