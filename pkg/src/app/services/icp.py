"""Similarity ICP: a template-only baseline and a refinement stage for predicted poses."""

import numpy as np
import structlog
import torch
from scipy.spatial import cKDTree

from ..config.experiment import IcpConfig
from ..errors import DegenerateConfiguration, EmptyCloud
from ..geometry.types import PointCloud, SimilarityTransform
from ..networks.fitting import umeyama_fit

logger = structlog.get_logger()

# Residuals below this are treated as an exact fit.
EXACT_RESIDUAL = 1e-20


def _trimmed_matches(
    tree: cKDTree, moved: np.ndarray, reject_fraction: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """Nearest-neighbor matches with the worst ``reject_fraction`` dropped.

    Returns:
        Kept source indices, their target indices and the mean kept squared distance.
    """
    distances, target_index = tree.query(moved, k=1)
    keep = max(3, int(np.ceil(len(moved) * (1.0 - reject_fraction))))
    order = np.argsort(distances, kind="stable")[:keep]
    return order, target_index[order], float(np.mean(distances[order] ** 2))


def icp_similarity(
    source: PointCloud,
    target: PointCloud,
    init: SimilarityTransform,
    cfg: IcpConfig,
) -> tuple[SimilarityTransform, list[float]]:
    """Align ``source`` to ``target`` with scale re-estimated every iteration.

    Args:
        source: Points to move.
        target: Fixed points.
        init: Initial transform applied to ``source``.
        cfg: Iteration limit, convergence tolerance and rejection fraction.

    Returns:
        The final transform and the trimmed mean squared residual before each update plus
        the final one. The history never increases.

    Raises:
        EmptyCloud: If either cloud is empty.
        DegenerateConfiguration: If a cloud has fewer than 3 points or a fit degenerates.
    """
    if source.is_empty or target.is_empty:
        raise EmptyCloud("ICP needs non-empty source and target clouds")
    if len(source) < 3 or len(target) < 3:
        raise DegenerateConfiguration(
            f"ICP needs at least 3 points per cloud, got {len(source)} and {len(target)}"
        )

    src = source.numpy()
    dst = target.numpy()
    tree = cKDTree(dst)
    current = init.detach().to(torch.float64)

    moved = current.apply_points(torch.as_tensor(src)).numpy()
    kept, matched, residual = _trimmed_matches(tree, moved, cfg.reject_fraction)
    history = [residual]

    for iteration in range(cfg.max_iterations):
        if residual <= EXACT_RESIDUAL:
            break
        candidate, _ = umeyama_fit(torch.as_tensor(src[kept]), torch.as_tensor(dst[matched]))
        moved = candidate.apply_points(torch.as_tensor(src)).numpy()
        next_kept, next_matched, next_residual = _trimmed_matches(
            tree, moved, cfg.reject_fraction
        )
        if next_residual > residual:
            # only floating-point noise can get here; keep the better pose
            break

        change = (residual - next_residual) / max(residual, EXACT_RESIDUAL)
        current, kept, matched, residual = candidate, next_kept, next_matched, next_residual
        history.append(residual)
        if change < cfg.convergence_tol:
            break

    logger.debug(
        "ICP finished",
        iterations=len(history) - 1,
        residual=history[-1],
        scale=float(current.scale),
    )
    return current, history


def baseline_init(model: PointCloud, scene: PointCloud) -> SimilarityTransform:
    """Scene centroid, identity rotation, scale from the bounding-sphere radius ratio."""
    if model.is_empty or scene.is_empty:
        raise EmptyCloud("baseline initialization needs non-empty clouds")
    m = model.numpy()
    s = scene.numpy()
    m_center, s_center = m.mean(axis=0), s.mean(axis=0)
    m_radius = float(np.linalg.norm(m - m_center, axis=1).max())
    s_radius = float(np.linalg.norm(s - s_center, axis=1).max())
    if m_radius <= 0.0 or s_radius <= 0.0:
        raise DegenerateConfiguration("cannot size a cloud whose points coincide")
    scale = s_radius / m_radius
    return SimilarityTransform.from_numpy(scale, np.eye(3), s_center - scale * m_center)


def refine_with_history(
    rendered_pc: PointCloud,
    scene_pc: PointCloud,
    init: SimilarityTransform,
    cfg: IcpConfig,
) -> tuple[SimilarityTransform, list[float]]:
    """Align the cloud rendered at ``init`` to the scene and fold the correction into ``init``.

    Returns:
        The refined transform and the ICP residual history.

    Raises:
        EmptyCloud: If the rendered cloud is empty.
    """
    if rendered_pc.is_empty:
        raise EmptyCloud("rendered point cloud is empty; nothing to refine")
    correction, history = icp_similarity(
        rendered_pc, scene_pc, SimilarityTransform.identity(), cfg
    )
    logger.debug("Prediction refined", initial=history[0], final=history[-1])
    return correction.compose(init.detach().to(torch.float64)), history


def refine_prediction(
    rendered_pc: PointCloud,
    scene_pc: PointCloud,
    init: SimilarityTransform,
    cfg: IcpConfig,
) -> SimilarityTransform:
    """Refined transform only; see ``refine_with_history``."""
    return refine_with_history(rendered_pc, scene_pc, init, cfg)[0]
