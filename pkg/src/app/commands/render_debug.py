"""``render-debug``: ground-truth and predicted depth of one test frame, side by side."""

from itertools import islice
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import structlog  # noqa: E402
import torch  # noqa: E402

from ..errors import IoFailure, MalformedDataset  # noqa: E402
from ..rendering.camera import DepthImage  # noqa: E402
from ..rendering.depth_io import write_depth_png  # noqa: E402
from ..rendering.rasterizer import render_depth  # noqa: E402
from ..repositories.fixtures import iter_split, load_template  # noqa: E402
from ..services.deform_trainer import load_deform_net  # noqa: E402
from ..services.pipeline import PosePipeline  # noqa: E402
from ..services.registration_trainer import load_registration_net  # noqa: E402
from .context import CommandContext  # noqa: E402

logger = structlog.get_logger()


def plot_depth_pair(gt: DepthImage, pred: DepthImage, path: Path, title: str) -> None:
    """Ground truth, prediction and their absolute difference on shared depth limits."""
    gt_v = gt.values.detach().cpu().numpy()
    pred_v = pred.values.detach().cpu().numpy()
    valid = gt_v[gt_v > 0].tolist() + pred_v[pred_v > 0].tolist()
    vmin, vmax = (min(valid), max(valid)) if valid else (0.0, 1.0)
    both = (gt_v > 0) & (pred_v > 0)
    diff = abs(gt_v - pred_v) * both

    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    for ax, image, name in zip(axes[:2], (gt_v, pred_v), ("Ground truth", "Prediction")):
        shown = ax.imshow(
            image, vmin=vmin, vmax=vmax, cmap="viridis", alpha=(image > 0).astype(float)
        )
        ax.set_title(name)
        ax.axis("off")
    fig.colorbar(shown, ax=axes[:2].tolist(), label="Depth (m)", shrink=0.8)
    residual = axes[2].imshow(diff, cmap="magma")
    axes[2].set_title("|difference|")
    axes[2].axis("off")
    fig.colorbar(residual, ax=axes[2], label="m", shrink=0.8)
    fig.suptitle(title)
    try:
        fig.savefig(path, dpi=100)
    except OSError as e:
        raise IoFailure(f"Cannot write plot ({e})", path=str(path)) from e
    finally:
        plt.close(fig)


def cmd_render_debug(ctx: CommandContext, frame_index: int = 0) -> dict[str, Path]:
    """Render the ``frame_index``-th test frame at its predicted pose next to the observation.

    Returns:
        Paths of the two depth PNGs and the comparison plot.

    Raises:
        MissingCheckpoint: If the networks have not been trained.
        MalformedDataset: If the test split has fewer frames than ``frame_index + 1``.
    """
    cfg = ctx.cfg
    root = ctx.dataset_root
    sample = next(islice(iter_split(root, "test"), frame_index, None), None)
    if sample is None:
        raise MalformedDataset(f"Test split has no frame {frame_index}", path=str(root))

    device = ctx.settings.device
    registration_net = load_registration_net(cfg, ctx.experiment_dir, device)
    deform_net = load_deform_net(cfg, ctx.experiment_dir, device) if cfg.deform.enabled else None
    pipeline = PosePipeline(cfg, load_template(root), deform_net, registration_net)
    result = pipeline.predict(sample.object_points(), sample.intrinsics, cfg.seed + frame_index)

    with torch.no_grad():
        predicted = render_depth(
            result.deformed_mesh,
            result.final_transform,
            sample.intrinsics,
            cfg.renderer.near_plane,
            cfg.renderer.face_chunk,
        )
    observed = sample.depth.masked(sample.mask)

    out = ctx.experiment_dir / "render_debug"
    stem = sample.instance_id.replace("/", "_")
    paths = {
        "gt": out / f"{stem}_gt_depth.png",
        "pred": out / f"{stem}_pred_depth.png",
        "plot": out / f"{stem}_comparison.png",
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"Cannot create directory ({e})", path=str(out)) from e
    write_depth_png(paths["gt"], observed)
    write_depth_png(paths["pred"], predicted)
    plot_depth_pair(observed, predicted, paths["plot"], sample.instance_id)
    logger.info(
        "Debug render written",
        frame=sample.instance_id,
        observed_pixels=observed.coverage,
        predicted_pixels=predicted.coverage,
        path=str(paths["plot"]),
    )
    return paths
