"""First training stage: template deformation."""

from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import structlog
import torch

from ..config.experiment import ExperimentConfig
from ..errors import EmptyDataset, MalformedDataset
from ..geometry.sampling import sample_surface
from ..geometry.types import PointCloud, TriangleMesh
from ..networks.deformnet import DeformNet, deform, deformation_loss
from ..repositories.checkpoints import checkpoint_path, load_checkpoint, save_checkpoint
from ..repositories.fixtures import TrainingFrame
from .training import (
    TrainingHistory,
    epoch_batches,
    plot_loss_curve,
    resolve_device,
    seed_everything,
)

logger = structlog.get_logger()


def build_deform_net(cfg: ExperimentConfig) -> DeformNet:
    return DeformNet(cfg.encoder, cfg.attention, cfg.deform)


def supervision_target(frame: TrainingFrame, cfg: ExperimentConfig, seed: int) -> PointCloud:
    """Coarse multi-view cloud, or a ground-truth surface sample when configured."""
    if cfg.deform.supervision == "gt_mesh":
        if frame.gt_mesh is None:
            raise MalformedDataset(f"frame {frame.name} has no ground-truth mesh")
        return sample_surface(frame.gt_mesh, cfg.deform.n_samples, seed)
    if frame.coarse is None:
        raise MalformedDataset(f"frame {frame.name} has no coarse point cloud")
    return frame.coarse


class DeformTrainer:
    """Adam with the learning rate halved every ``lr_halving_period`` epochs."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        template: TriangleMesh,
        output_dir: Path,
        device: str = "cpu",
    ):
        self.cfg = cfg
        self.template = template
        self.output_dir = Path(output_dir)
        seed_everything(cfg.seed)
        self.device = resolve_device(device)
        self.model = build_deform_net(cfg).to(self.device)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=cfg.deform.learning_rate)
        self.scheduler = torch.optim.lr_scheduler.StepLR(
            self.optimizer, step_size=cfg.deform.lr_halving_period, gamma=0.5
        )
        self.history = TrainingHistory()
        self.start_epoch = 0

    @property
    def checkpoint(self) -> Path:
        return checkpoint_path(self.output_dir, "deform")

    def resume(self) -> bool:
        """Restore model, optimizer, scheduler and history from the last checkpoint."""
        if not self.checkpoint.is_file():
            return False
        payload = load_checkpoint(self.checkpoint, "deform", self.cfg)
        self.model.load_state_dict(payload["model"])
        self.optimizer.load_state_dict(payload["optimizer"])
        self.scheduler.load_state_dict(payload["scheduler"])
        self.history = TrainingHistory(list(payload["losses"]))
        self.start_epoch = int(payload["epoch"]) + 1
        logger.info("Deformation training resumed", epoch=self.start_epoch)
        return True

    def frame_loss(self, frame: TrainingFrame, seed: int):
        result = deform(self.template, frame.scene_points, self.model)
        target = supervision_target(frame, self.cfg, seed)
        return deformation_loss(
            result,
            target,
            self.template,
            self.cfg.deform.loss_weights,
            n_samples=self.cfg.deform.n_samples,
            seed=seed,
            reduction=self.cfg.deform.chamfer_reduction,
        )

    def train_epoch(self, frames: Sequence[TrainingFrame], epoch: int) -> dict[str, float]:
        self.model.train()
        terms: list[dict[str, float]] = []
        cfg = self.cfg.deform
        for batch in epoch_batches(len(frames), cfg.batch_size, self.cfg.seed, epoch):
            self.optimizer.zero_grad()
            losses = [self.frame_loss(frames[i], self.cfg.seed + epoch * 7919 + i) for i in batch]
            total = torch.stack([loss.total for loss in losses]).mean()
            total.backward()
            self.optimizer.step()
            terms.extend(loss.as_floats() for loss in losses)

        lr = self.optimizer.param_groups[0]["lr"]
        self.scheduler.step()
        return self.history.append(epoch, terms, lr)

    def fit(self, frames: Sequence[TrainingFrame], epochs: Optional[int] = None) -> TrainingHistory:
        """Train until ``epochs`` (default: configured) epochs are done, checkpointing each.

        Raises:
            EmptyDataset: If ``frames`` is empty.
        """
        if not frames:
            raise EmptyDataset("no frames to train the deformation network on")
        last = epochs if epochs is not None else self.cfg.deform.epochs
        for epoch in range(self.start_epoch, last):
            summary = self.train_epoch(frames, epoch)
            logger.info(
                "Epoch finished",
                stage="deform",
                epoch=epoch,
                loss=summary["total"],
                cd=summary.get("cd"),
                lr=summary["lr"],
            )
            save_checkpoint(
                self.checkpoint,
                "deform",
                self.cfg,
                epoch,
                self.model,
                self.optimizer,
                self.scheduler,
                self.history.epochs,
            )
            self.start_epoch = epoch + 1
        plot_loss_curve(self.history, self.output_dir / "deform_loss.png", "Deformation")
        return self.history


def load_deform_net(cfg: ExperimentConfig, output_dir: Path, device: str = "cpu") -> DeformNet:
    """The trained deformation network in eval mode with frozen weights.

    Raises:
        MissingCheckpoint: If the deformation stage has not been trained.
        CheckpointMismatch: If the checkpoint does not match the config's architecture.
    """
    payload = load_checkpoint(checkpoint_path(output_dir, "deform"), "deform", cfg)
    model = build_deform_net(cfg).to(resolve_device(device))
    model.load_state_dict(payload["model"])
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model
