"""Self-describing training checkpoints.

A checkpoint records the stage, the architecture hash of the config it was trained with,
the full config hash and seed, the last finished epoch, the loss history, and the model,
optimizer and scheduler state.
"""

from pathlib import Path
from typing import Any, Literal, Optional

import structlog
import torch

from ..config.experiment import ExperimentConfig
from ..errors import CheckpointMismatch, IoFailure, MissingCheckpoint

logger = structlog.get_logger()

Stage = Literal["deform", "registration"]


def checkpoint_path(output_dir: Path, stage: Stage) -> Path:
    return Path(output_dir) / "checkpoints" / f"{stage}.pt"


def save_checkpoint(
    path: Path,
    stage: Stage,
    cfg: ExperimentConfig,
    epoch: int,
    model: torch.nn.Module,
    optimizer: Optional[torch.optim.Optimizer] = None,
    scheduler: Optional[torch.optim.lr_scheduler.LRScheduler] = None,
    losses: Optional[list[dict[str, float]]] = None,
) -> Path:
    """Write a checkpoint atomically (temporary file, then rename).

    Raises:
        IoFailure: If the file cannot be written.
    """
    path = Path(path)
    payload: dict[str, Any] = {
        "stage": stage,
        "architecture_hash": cfg.architecture_hash(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "epoch": epoch,
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "scheduler": scheduler.state_dict() if scheduler is not None else None,
        "losses": losses or [],
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, tmp)
        tmp.replace(path)
    except OSError as e:
        raise IoFailure(f"Cannot write checkpoint ({e})", path=str(path)) from e

    logger.info(
        "Checkpoint written",
        stage=stage,
        epoch=epoch,
        path=str(path),
        architecture_hash=payload["architecture_hash"],
    )
    return path


def load_checkpoint(path: Path, stage: Stage, cfg: ExperimentConfig) -> dict[str, Any]:
    """Read a checkpoint and check it belongs to ``stage`` and to the config's architecture.

    Raises:
        MissingCheckpoint: If the file does not exist.
        CheckpointMismatch: If the stage or architecture hash differs.
        IoFailure: If the file cannot be parsed.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpoint(f"No {stage} checkpoint at {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise IoFailure(f"Cannot read checkpoint ({e})", path=str(path)) from e

    if payload.get("stage") != stage:
        raise CheckpointMismatch(
            f"Checkpoint {path} is a {payload.get('stage')} checkpoint, expected {stage}"
        )
    expected = cfg.architecture_hash()
    if payload.get("architecture_hash") != expected:
        raise CheckpointMismatch(
            f"Checkpoint {path} was trained with architecture {payload.get('architecture_hash')},"
            f" config describes {expected}"
        )
    return payload
