"""``eval`` and ``baseline-icp``: score a method on the test split and write its report."""

from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import structlog

from ..errors import AllGroupsDegenerate, DegenerateConfiguration, MalformedDataset, TooFewPoints
from ..evaluation.boxes import box_from_transform
from ..evaluation.metrics import PoseSizePrediction
from ..evaluation.report import MetricReport, build_report, emit_report
from ..geometry.sampling import sample_surface, subsample_cloud
from ..geometry.types import PointCloud, SimilarityTransform, TriangleMesh
from ..repositories.fixtures import iter_split, load_template
from ..services.deform_trainer import load_deform_net
from ..services.icp import baseline_init, icp_similarity
from ..services.pipeline import PosePipeline
from ..services.registration_trainer import load_registration_net
from ..synth.scenes import SceneSample
from .context import CommandContext

logger = structlog.get_logger()

METHOD = "Ours-M"
METHOD_REFINED = "Ours-M + ICP"
METHOD_BASELINE = "ICP"


@dataclass
class FrameOutcome:
    """Predictions of one test frame; ``refined`` is set only when ICP refinement ran."""

    gt: PoseSizePrediction
    model_points: np.ndarray
    pred: PoseSizePrediction
    refined: Optional[PoseSizePrediction] = None
    timings_ms: dict[str, float] = field(default_factory=dict)
    icp_residuals: list[float] = field(default_factory=list)
    # weighted Umeyama residual of the selected correspondence group
    fit_residual: Optional[float] = None


Predictor = Callable[[SceneSample, PointCloud, int], FrameOutcome]


def _ground_truth(
    ctx: CommandContext, sample: SceneSample, seed: int
) -> tuple[PoseSizePrediction, np.ndarray]:
    if sample.gt_mesh is None:
        raise MalformedDataset("Test frame has no ground-truth model", path=sample.instance_id)
    symmetric = ctx.cfg.is_symmetric(sample.category)
    gt = PoseSizePrediction(
        sample.gt_transform,
        box_from_transform(sample.gt_transform, sample.gt_mesh),
        sample.category,
        symmetric,
    )
    points = sample_surface(sample.gt_mesh, ctx.cfg.eval.add_model_points, seed).numpy()
    return gt, points


def _placed(
    t: SimilarityTransform, mesh: TriangleMesh, gt: PoseSizePrediction
) -> PoseSizePrediction:
    return PoseSizePrediction(t, box_from_transform(t, mesh), gt.category, gt.symmetric)


def _fallback(
    ctx: CommandContext, template: TriangleMesh, object_points: PointCloud, seed: int
) -> SimilarityTransform:
    """Template at the observation's centroid and radius; used when a method cannot fit."""
    model = sample_surface(template, ctx.cfg.registration.model_points, seed)
    return baseline_init(model, object_points)


def run_on_test_split(ctx: CommandContext, predictor: Predictor) -> list[FrameOutcome]:
    """Apply ``predictor`` to every non-empty test frame, fanning out over worker threads.

    Raises:
        MalformedDataset: If the test split is missing or holds no usable frame.
    """
    jobs: list[tuple[SceneSample, PointCloud, int]] = []
    for index, sample in enumerate(iter_split(ctx.dataset_root, "test")):
        points = sample.object_points()
        if points.is_empty:
            logger.warning("Frame without object pixels skipped", frame=sample.instance_id)
            continue
        jobs.append((sample, points, ctx.cfg.seed + index))
    if not jobs:
        raise MalformedDataset("Test split has no usable frames", path=str(ctx.dataset_root))

    workers = max(1, ctx.settings.num_workers)
    logger.info("Evaluating", frames=len(jobs), workers=workers)
    if workers == 1:
        return [predictor(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: predictor(*job), jobs))


def _mean_timings(outcomes: list[FrameOutcome]) -> dict[str, float]:
    stages = sorted({k for o in outcomes for k in o.timings_ms})
    return {
        s: float(np.mean([o.timings_ms[s] for o in outcomes if s in o.timings_ms]))
        for s in stages
    }


def _report(
    ctx: CommandContext,
    method: str,
    outcomes: list[FrameOutcome],
    preds: list[PoseSizePrediction],
    diagnostics: Optional[dict[str, float]] = None,
) -> MetricReport:
    report = build_report(
        method,
        preds,
        [o.gt for o in outcomes],
        ctx.cfg.eval,
        model_points=[o.model_points for o in outcomes],
        timings_ms=_mean_timings(outcomes),
        diagnostics=diagnostics,
        config_hash=ctx.cfg.config_hash(),
    )
    stem = method.lower().replace(" + ", "_").replace(" ", "_").replace("-", "_")
    emit_report(report, ctx.reports_dir, stem=stem)
    return report


# =====================================================
# LEARNED PIPELINE
# =====================================================


def cmd_eval(ctx: CommandContext, icp_refine: Optional[bool] = None) -> list[MetricReport]:
    """Run deformation, registration and rendering on every test frame.

    With ICP refinement a second report for the refined poses is written from the same pass.

    Raises:
        MissingCheckpoint: If a required training stage has not been run.
        CheckpointMismatch: If a checkpoint does not match the config's architecture.
        MalformedDataset: If the dataset is missing or malformed.
    """
    cfg = ctx.cfg
    refine = cfg.eval.icp_refine if icp_refine is None else icp_refine
    device = ctx.settings.device
    registration_net = load_registration_net(cfg, ctx.experiment_dir, device)
    deform_net = load_deform_net(cfg, ctx.experiment_dir, device) if cfg.deform.enabled else None
    template = load_template(ctx.dataset_root)
    pipeline = PosePipeline(cfg, template, deform_net, registration_net)
    logger.info("Evaluation started", icp_refine=refine, config_hash=cfg.config_hash())

    def predict(sample: SceneSample, points: PointCloud, seed: int) -> FrameOutcome:
        gt, model_points = _ground_truth(ctx, sample, seed)
        try:
            result = pipeline.predict(points, sample.intrinsics, seed, icp_refine=refine)
        except (TooFewPoints, AllGroupsDegenerate, DegenerateConfiguration) as e:
            logger.warning("Prediction failed", frame=sample.instance_id, reason=e.message)
            t = _fallback(ctx, template, points, seed)
            fallback = _placed(t, template, gt)
            return FrameOutcome(gt, model_points, fallback, fallback if refine else None)

        outcome = FrameOutcome(
            gt,
            model_points,
            _placed(result.transform, result.deformed_mesh, gt),
            timings_ms=dict(result.timings_ms),
            icp_residuals=list(result.icp_residuals),
            fit_residual=result.estimate.residuals[result.estimate.group_index],
        )
        if refine:
            outcome.refined = _placed(result.final_transform, result.deformed_mesh, gt)
        return outcome

    outcomes = run_on_test_split(ctx, predict)
    fit_residuals = [o.fit_residual for o in outcomes if o.fit_residual is not None]
    diagnostics = {}
    if fit_residuals:
        diagnostics["umeyama_residual"] = float(np.mean(fit_residuals))
    reports = [_report(ctx, METHOD, outcomes, [o.pred for o in outcomes], dict(diagnostics))]
    if refine:
        # trimmed mean squared nearest-neighbor distance, not a correspondence residual
        histories = [o.icp_residuals for o in outcomes if o.icp_residuals]
        if histories:
            diagnostics["icp_trimmed_mse_initial"] = float(np.mean([h[0] for h in histories]))
            diagnostics["icp_trimmed_mse_final"] = float(np.mean([h[-1] for h in histories]))
        refined = [o.refined if o.refined is not None else o.pred for o in outcomes]
        reports.append(_report(ctx, METHOD_REFINED, outcomes, refined, diagnostics))
    logger.info("Evaluation finished", reports=[r.method for r in reports])
    return reports


# =====================================================
# ICP BASELINE
# =====================================================


def cmd_baseline_icp(ctx: CommandContext) -> MetricReport:
    """Align the raw category template to every test observation with similarity ICP.

    Raises:
        MalformedDataset: If the dataset is missing, malformed or has no test frames.
    """
    cfg = ctx.cfg
    template = load_template(ctx.dataset_root)
    logger.info("ICP baseline started", config_hash=cfg.config_hash())

    def predict(sample: SceneSample, points: PointCloud, seed: int) -> FrameOutcome:
        gt, model_points = _ground_truth(ctx, sample, seed)
        model = sample_surface(template, cfg.registration.model_points, seed)
        scene = subsample_cloud(points, cfg.registration.scene_points, seed)
        init = baseline_init(model, scene)
        try:
            t, history = icp_similarity(model, scene, init, cfg.icp)
        except DegenerateConfiguration as e:
            logger.warning("ICP failed", frame=sample.instance_id, reason=e.message)
            t, history = init, []
        return FrameOutcome(gt, model_points, _placed(t, template, gt), icp_residuals=history)

    outcomes = run_on_test_split(ctx, predict)
    report = _report(ctx, METHOD_BASELINE, outcomes, [o.pred for o in outcomes])
    logger.info("ICP baseline finished", **report.row())
    return report
