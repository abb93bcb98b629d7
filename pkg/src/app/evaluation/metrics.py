"""Pose, size and alignment metrics.

Evaluation follows the mask-given protocol: there is exactly one prediction per
ground-truth instance, so average precision at a threshold is the fraction of instances
that pass it.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree

from ..errors import CountMismatch, EmptyModel
from ..geometry.types import SimilarityTransform
from .boxes import OrientedBox, iou3d

# Object-frame symmetry axis of rotationally symmetric categories.
SYMMETRY_AXIS = 1

IOU_CURVE = np.linspace(0.0, 1.0, 101)
ROTATION_CURVE_DEG = np.linspace(0.0, 60.0, 61)
TRANSLATION_CURVE_CM = np.linspace(0.0, 10.0, 101)
AUC_SAMPLES = 1000


@dataclass(frozen=True)
class PoseSizePrediction:
    """A pose with its box; used for both predictions and ground truth."""

    transform: SimilarityTransform
    box: OrientedBox
    category: str
    symmetric: bool = False


Predicate = Callable[[PoseSizePrediction, PoseSizePrediction], bool]


def _numpy_pose(t: SimilarityTransform) -> tuple[float, np.ndarray, np.ndarray]:
    return (
        float(t.scale.detach()),
        t.rotation.detach().cpu().double().numpy(),
        t.translation.detach().cpu().double().numpy(),
    )


def pose_error(
    pred: SimilarityTransform, gt: SimilarityTransform, symmetric: bool
) -> tuple[float, float]:
    """Rotation error in degrees and translation error in centimeters.

    For symmetric objects only the mapped symmetry axes are compared, so any rotation
    about that axis is free.
    """
    _, r_pred, t_pred = _numpy_pose(pred)
    _, r_gt, t_gt = _numpy_pose(gt)
    if symmetric:
        cos = float(r_pred[:, SYMMETRY_AXIS] @ r_gt[:, SYMMETRY_AXIS])
    else:
        cos = 0.5 * (float(np.trace(r_pred.T @ r_gt)) - 1.0)
    degrees = float(np.rad2deg(np.arccos(np.clip(cos, -1.0, 1.0))))
    return degrees, float(np.linalg.norm(t_pred - t_gt) * 100.0)


# =====================================================
# AVERAGE PRECISION
# =====================================================


def iou_predicate(threshold: float) -> Predicate:
    def passes(pred: PoseSizePrediction, gt: PoseSizePrediction) -> bool:
        return iou3d(pred.box, gt.box) >= threshold

    return passes


def pose_predicate(max_degrees: float, max_cm: float) -> Predicate:
    def passes(pred: PoseSizePrediction, gt: PoseSizePrediction) -> bool:
        degrees, cm = pose_error(pred.transform, gt.transform, gt.symmetric)
        return degrees <= max_degrees and cm <= max_cm

    return passes


def _check_counts(preds: Sequence, gts: Sequence) -> None:
    if len(preds) != len(gts):
        raise CountMismatch(f"{len(preds)} predictions for {len(gts)} ground-truth instances")
    if not gts:
        raise CountMismatch("no instances to evaluate")


def average_precision(
    preds: Sequence[PoseSizePrediction],
    gts: Sequence[PoseSizePrediction],
    predicate: Predicate,
) -> float:
    """Fraction of (prediction, ground truth) pairs that satisfy ``predicate``.

    Raises:
        CountMismatch: If the sequences differ in length or are empty.
    """
    _check_counts(preds, gts)
    hits = sum(bool(predicate(p, g)) for p, g in zip(preds, gts))
    return hits / len(gts)


def iou_column(threshold: float) -> str:
    return f"IoU{int(round(threshold * 100))}"


def pose_column(max_degrees: float, max_cm: float) -> str:
    return f"{max_degrees:g}°{max_cm:g}cm"


def precision_curves(
    preds: Sequence[PoseSizePrediction], gts: Sequence[PoseSizePrediction]
) -> dict[str, list[float]]:
    """Precision against IoU, rotation and translation thresholds."""
    _check_counts(preds, gts)
    ious = np.array([iou3d(p.box, g.box) for p, g in zip(preds, gts)])
    errors = np.array(
        [pose_error(p.transform, g.transform, g.symmetric) for p, g in zip(preds, gts)]
    )
    return {
        "iou": [float((ious >= x).mean()) for x in IOU_CURVE],
        "rotation": [float((errors[:, 0] <= x).mean()) for x in ROTATION_CURVE_DEG],
        "translation": [float((errors[:, 1] <= x).mean()) for x in TRANSLATION_CURVE_CM],
    }


# =====================================================
# ADD / ADD-S
# =====================================================


def add_distance(
    pred: SimilarityTransform,
    gt: SimilarityTransform,
    model_points: np.ndarray,
    symmetric: bool,
) -> float:
    """Mean model-point distance; closest-point distance for symmetric objects.

    Raises:
        EmptyModel: If ``model_points`` is empty.
    """
    pts = np.asarray(model_points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyModel("model point set is empty")
    s_p, r_p, t_p = _numpy_pose(pred)
    s_g, r_g, t_g = _numpy_pose(gt)
    pts_pred = s_p * pts @ r_p.T + t_p
    pts_gt = s_g * pts @ r_g.T + t_g
    if symmetric:
        distances, _ = cKDTree(pts_gt).query(pts_pred, k=1)
        return float(distances.mean())
    return float(np.linalg.norm(pts_pred - pts_gt, axis=1).mean())


def add_auc(
    preds: Sequence[SimilarityTransform],
    gts: Sequence[SimilarityTransform],
    model_points: np.ndarray | Sequence[np.ndarray],
    symmetric: bool,
    max_threshold: float = 0.1,
) -> float:
    """Area under the accuracy-threshold curve on [0, max_threshold], normalized to [0, 1].

    ``model_points`` is one (N, 3) array shared by every instance or one array per instance.
    The curve is sampled at ``AUC_SAMPLES`` evenly spaced thresholds and integrated with the
    trapezoid rule.
    """
    _check_counts(preds, gts)
    if isinstance(model_points, np.ndarray) and model_points.ndim == 2:
        per_instance = [model_points] * len(gts)
    else:
        per_instance = list(model_points)
        if len(per_instance) != len(gts):
            raise CountMismatch(f"{len(per_instance)} models for {len(gts)} instances")
    distances = np.array(
        [add_distance(p, g, m, symmetric) for p, g, m in zip(preds, gts, per_instance)]
    )
    thresholds = np.linspace(0.0, max_threshold, AUC_SAMPLES)
    accuracy = (distances[None, :] <= thresholds[:, None]).mean(axis=1)
    return float(trapezoid(accuracy, thresholds) / max_threshold)
