"""Second training stage: registration with the deformation network frozen.

The only supervision is geometric: the deformed mesh is placed by the estimated
similarity, rendered, lifted back to points and compared with the observed scene.
"""

from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import structlog
import torch

from ..config.experiment import ExperimentConfig
from ..errors import AllGroupsDegenerate, DegenerateConfiguration, EmptyDataset
from ..geometry.sampling import sample_surface, subsample_cloud
from ..geometry.types import PointCloud, SimilarityTransform, TriangleMesh
from ..networks.deformnet import DeformNet, deform
from ..networks.regnet import RegistrationNet, estimate_pose_scale, registration_loss
from ..networks.results import LossBreakdown
from ..rendering.camera import CameraIntrinsics
from ..rendering.rasterizer import lift_depth, render_depth
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


def build_registration_net(cfg: ExperimentConfig) -> RegistrationNet:
    return RegistrationNet(cfg.registration, cfg.attention)


def predicted_view(
    mesh: TriangleMesh,
    t: SimilarityTransform,
    cam: CameraIntrinsics,
    cfg: ExperimentConfig,
    seed: int,
) -> PointCloud:
    """What the camera would see of ``mesh`` placed by ``t``.

    With the renderer disabled the full transformed surface sample stands in for the
    visible part.
    """
    reg = cfg.registration
    if not reg.use_renderer:
        surface = sample_surface(mesh, reg.max_lifted_points, seed)
        return PointCloud(t.apply_points(surface.points.to(t.rotation.dtype)))
    depth = render_depth(mesh, t, cam, cfg.renderer.near_plane, cfg.renderer.face_chunk)
    return subsample_cloud(lift_depth(depth, cam), reg.max_lifted_points, seed)


class RegistrationTrainer:
    def __init__(
        self,
        cfg: ExperimentConfig,
        template: TriangleMesh,
        deform_net: Optional[DeformNet],
        output_dir: Path,
        device: str = "cpu",
    ):
        self.cfg = cfg
        self.template = template
        self.deform_net = deform_net
        self.output_dir = Path(output_dir)
        seed_everything(cfg.seed)
        self.device = resolve_device(device)
        self.model = build_registration_net(cfg).to(self.device)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(), lr=cfg.registration.learning_rate
        )
        self.scheduler = torch.optim.lr_scheduler.StepLR(
            self.optimizer, step_size=cfg.registration.lr_halving_period, gamma=0.5
        )
        self.history = TrainingHistory()
        self.start_epoch = 0
        self._deformed: dict[str, TriangleMesh] = {}

    @property
    def checkpoint(self) -> Path:
        return checkpoint_path(self.output_dir, "registration")

    def resume(self) -> bool:
        if not self.checkpoint.is_file():
            return False
        payload = load_checkpoint(self.checkpoint, "registration", self.cfg)
        self.model.load_state_dict(payload["model"])
        self.optimizer.load_state_dict(payload["optimizer"])
        self.scheduler.load_state_dict(payload["scheduler"])
        self.history = TrainingHistory(list(payload["losses"]))
        self.start_epoch = int(payload["epoch"]) + 1
        logger.info("Registration training resumed", epoch=self.start_epoch)
        return True

    def deformed_mesh(self, frame: TrainingFrame) -> TriangleMesh:
        """Frozen deformation of the template for one frame (cached)."""
        if self.deform_net is None or not self.cfg.deform.enabled:
            return self.template
        if frame.name not in self._deformed:
            with torch.no_grad():
                result = deform(self.template, frame.scene_points, self.deform_net)
            mesh = result.deformed_mesh
            self._deformed[frame.name] = TriangleMesh(mesh.vertices.detach().double(), mesh.faces)
        return self._deformed[frame.name]

    def frame_loss(self, frame: TrainingFrame, seed: int) -> Optional[LossBreakdown]:
        """Loss of one frame, or None when no pose can be fitted or nothing is visible."""
        reg = self.cfg.registration
        mesh = self.deformed_mesh(frame)
        model_pc = sample_surface(mesh, reg.model_points, seed)
        try:
            estimate = estimate_pose_scale(
                model_pc,
                frame.scene_points,
                self.model,
                reg.train_correspondences,
                seed,
                weighted=reg.weighted_fit,
            )
        except (AllGroupsDegenerate, DegenerateConfiguration) as e:
            logger.warning("Frame skipped", frame=frame.name, reason=e.message)
            return None

        lifted = predicted_view(mesh, estimate.transform, frame.intrinsics, self.cfg, seed)
        if lifted.is_empty:
            logger.warning("Frame skipped", frame=frame.name, reason="prediction renders empty")
            return None
        return registration_loss(
            lifted,
            frame.scene_points,
            estimate.correspondences,
            estimate.transform,
            reg.loss_weights,
            reduction=reg.chamfer_reduction,
        )

    def train_epoch(self, frames: Sequence[TrainingFrame], epoch: int) -> dict[str, float]:
        self.model.train()
        terms: list[dict[str, float]] = []
        reg = self.cfg.registration
        for batch in epoch_batches(len(frames), reg.batch_size, self.cfg.seed, epoch):
            losses = [
                loss
                for i in batch
                if (loss := self.frame_loss(frames[i], self.cfg.seed + epoch * 7919 + i))
                is not None
            ]
            if not losses:
                continue
            self.optimizer.zero_grad()
            total = torch.stack([loss.total for loss in losses]).mean()
            if total.requires_grad:
                total.backward()
                self.optimizer.step()
            terms.extend(loss.as_floats() for loss in losses)

        lr = self.optimizer.param_groups[0]["lr"]
        self.scheduler.step()
        return self.history.append(epoch, terms, lr)

    def fit(self, frames: Sequence[TrainingFrame], epochs: Optional[int] = None) -> TrainingHistory:
        """Train the registration network, checkpointing after every epoch.

        Raises:
            EmptyDataset: If ``frames`` is empty.
        """
        if not frames:
            raise EmptyDataset("no frames to train the registration network on")
        last = epochs if epochs is not None else self.cfg.registration.epochs
        for epoch in range(self.start_epoch, last):
            summary = self.train_epoch(frames, epoch)
            logger.info(
                "Epoch finished",
                stage="registration",
                epoch=epoch,
                loss=summary.get("total"),
                geo=summary.get("geo"),
                lr=summary["lr"],
                frames=int(summary["frames"]),
            )
            save_checkpoint(
                self.checkpoint,
                "registration",
                self.cfg,
                epoch,
                self.model,
                self.optimizer,
                self.scheduler,
                self.history.epochs,
            )
            self.start_epoch = epoch + 1
        plot_loss_curve(self.history, self.output_dir / "registration_loss.png", "Registration")
        return self.history


def load_registration_net(
    cfg: ExperimentConfig, output_dir: Path, device: str = "cpu"
) -> RegistrationNet:
    """The trained registration network in eval mode.

    Raises:
        MissingCheckpoint: If the registration stage has not been trained.
        CheckpointMismatch: If the checkpoint does not match the config's architecture.
    """
    payload = load_checkpoint(checkpoint_path(output_dir, "registration"), "registration", cfg)
    model = build_registration_net(cfg).to(resolve_device(device))
    model.load_state_dict(payload["model"])
    model.eval()
    return model
