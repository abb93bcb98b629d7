"""Metric reports: assembly, emission (JSON, text table, curve plot) and loading."""

import json
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import structlog  # noqa: E402
from pydantic import BaseModel, Field, ValidationError, field_validator  # noqa: E402

from ..config.experiment import EvalConfig  # noqa: E402
from ..errors import IoFailure  # noqa: E402
from .metrics import (  # noqa: E402
    IOU_CURVE,
    ROTATION_CURVE_DEG,
    TRANSLATION_CURVE_CM,
    PoseSizePrediction,
    add_auc,
    average_precision,
    iou_column,
    iou_predicate,
    pose_column,
    pose_predicate,
    precision_curves,
)

logger = structlog.get_logger()

CURVE_AXES = {
    "iou": ("3D IoU", IOU_CURVE),
    "rotation": ("Rotation error (degrees)", ROTATION_CURVE_DEG),
    "translation": ("Translation error (cm)", TRANSLATION_CURVE_CM),
}


class MetricReport(BaseModel):
    """Evaluation results of one method on one dataset split."""

    method: str
    num_instances: int = Field(ge=1)
    iou_ap: dict[str, float]
    pose_ap: dict[str, float]
    auc: dict[str, float] = Field(default_factory=dict)
    curves: dict[str, list[float]] = Field(default_factory=dict)
    timings_ms: dict[str, float] = Field(default_factory=dict)
    # free-form scalar diagnostics, e.g. mean trimmed ICP error before and after refinement
    diagnostics: dict[str, float] = Field(default_factory=dict)
    config_hash: Optional[str] = None

    @field_validator("iou_ap", "pose_ap")
    @classmethod
    def _check_range(cls, value: dict[str, float]) -> dict[str, float]:
        for name, ap in value.items():
            if not 0.0 <= ap <= 1.0:
                raise ValueError(f"AP {name}={ap} outside [0, 1]")
        return value

    @property
    def columns(self) -> list[str]:
        return [*self.iou_ap, *self.pose_ap]

    def row(self) -> dict[str, float]:
        return {**self.iou_ap, **self.pose_ap}


def build_report(
    method: str,
    preds: Sequence[PoseSizePrediction],
    gts: Sequence[PoseSizePrediction],
    cfg: EvalConfig,
    model_points: Optional[Sequence[np.ndarray]] = None,
    timings_ms: Optional[dict[str, float]] = None,
    diagnostics: Optional[dict[str, float]] = None,
    config_hash: Optional[str] = None,
) -> MetricReport:
    """Compute every metric for aligned prediction and ground-truth lists.

    Raises:
        CountMismatch: If the lists differ in length or are empty.
    """
    iou_ap = {
        iou_column(t): average_precision(preds, gts, iou_predicate(t)) for t in cfg.iou_thresholds
    }
    pose_ap = {
        pose_column(deg, cm): average_precision(preds, gts, pose_predicate(deg, cm))
        for deg, cm in cfg.pose_thresholds
    }

    auc: dict[str, float] = {}
    if model_points is not None:
        transforms_pred = [p.transform for p in preds]
        transforms_gt = [g.transform for g in gts]
        auc["ADD"] = add_auc(
            transforms_pred, transforms_gt, model_points, False, cfg.add_max_threshold
        )
        auc["ADD-S"] = add_auc(
            transforms_pred, transforms_gt, model_points, True, cfg.add_max_threshold
        )

    return MetricReport(
        method=method,
        num_instances=len(gts),
        iou_ap=iou_ap,
        pose_ap=pose_ap,
        auc=auc,
        curves=precision_curves(preds, gts),
        timings_ms=timings_ms or {},
        diagnostics=diagnostics or {},
        config_hash=config_hash,
    )


# =====================================================
# EMISSION
# =====================================================


def format_table(report: MetricReport) -> str:
    """Fixed-width text table with one column per threshold, values in percent."""
    columns = report.columns
    widths = [max(len(c), 6) for c in columns]
    method_width = max(len(report.method), len("Method"))
    header = "Method".ljust(method_width) + " | " + " | ".join(
        c.rjust(w) for c, w in zip(columns, widths)
    )
    values = report.row()
    line = report.method.ljust(method_width) + " | " + " | ".join(
        f"{values[c] * 100:.1f}".rjust(w) for c, w in zip(columns, widths)
    )
    lines = [header, "-" * len(header), line]
    for name, value in report.auc.items():
        lines.append(f"{name} AUC: {value * 100:.1f}")
    for stage, ms in report.timings_ms.items():
        lines.append(f"{stage}: {ms:.1f} ms")
    for name, value in report.diagnostics.items():
        lines.append(f"{name}: {value:.6g}")
    if report.config_hash:
        lines.append(f"config: {report.config_hash}")
    return "\n".join(lines) + "\n"


def plot_curves(report: MetricReport, path: Path) -> None:
    fig, axes = plt.subplots(1, len(CURVE_AXES), figsize=(4 * len(CURVE_AXES), 3.5))
    for ax, (key, (label, xs)) in zip(axes, CURVE_AXES.items()):
        if key in report.curves:
            ax.plot(xs, np.asarray(report.curves[key]) * 100.0, label=report.method)
        ax.set_xlabel(label)
        ax.set_ylabel("AP (%)")
        ax.set_xlim(float(xs[0]), float(xs[-1]))
        ax.set_ylim(0.0, 100.0)
        ax.grid(True, alpha=0.3)
    axes[0].legend(loc="lower left")
    fig.tight_layout()
    try:
        fig.savefig(path, dpi=100)
    finally:
        plt.close(fig)


def emit_report(report: MetricReport, directory: Path, stem: str = "report") -> dict[str, Path]:
    """Write ``<stem>.json``, ``<stem>.txt`` and ``<stem>.png`` into ``directory``.

    Returns:
        Paths of the written files keyed by kind.

    Raises:
        IoFailure: If any file cannot be written.
    """
    directory = Path(directory)
    paths = {
        "json": directory / f"{stem}.json",
        "text": directory / f"{stem}.txt",
        "plot": directory / f"{stem}.png",
    }
    try:
        directory.mkdir(parents=True, exist_ok=True)
        paths["json"].write_text(report.model_dump_json(indent=2), encoding="utf-8")
        paths["text"].write_text(format_table(report), encoding="utf-8")
        plot_curves(report, paths["plot"])
    except OSError as e:
        raise IoFailure(f"Cannot write report ({e})", path=str(directory)) from e

    logger.info("Report written", method=report.method, path=str(paths["json"]), **report.row())
    return paths


def load_report(path: Path) -> MetricReport:
    """Parse a report written by ``emit_report``."""
    try:
        return MetricReport.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise IoFailure(f"Cannot read report ({e})", path=str(path)) from e
