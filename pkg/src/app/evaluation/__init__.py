"""Pose and size evaluation metrics and reports."""

from .boxes import OrientedBox, box_from_transform, iou3d
from .metrics import (
    PoseSizePrediction,
    add_auc,
    add_distance,
    average_precision,
    iou_predicate,
    pose_error,
    pose_predicate,
    precision_curves,
)
from .report import MetricReport, build_report, emit_report, format_table, load_report

__all__ = [
    "MetricReport",
    "OrientedBox",
    "PoseSizePrediction",
    "add_auc",
    "add_distance",
    "average_precision",
    "box_from_transform",
    "build_report",
    "emit_report",
    "format_table",
    "iou3d",
    "iou_predicate",
    "load_report",
    "pose_error",
    "pose_predicate",
    "precision_curves",
]
