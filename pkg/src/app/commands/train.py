"""``train-deform`` and ``train-reg``: the two training stages, in that order."""

import structlog

from ..errors import MissingCheckpoint
from ..repositories.checkpoints import checkpoint_path
from ..repositories.fixtures import load_template, load_training_frames
from ..services.deform_trainer import DeformTrainer, load_deform_net
from ..services.registration_trainer import RegistrationTrainer
from ..services.training import TrainingHistory
from .context import CommandContext

logger = structlog.get_logger()


def cmd_train_deform(ctx: CommandContext, resume: bool = True) -> TrainingHistory:
    """Train the deformation network on the training split.

    Raises:
        MalformedDataset: If the dataset, its template or a coarse cloud is missing.
        CheckpointMismatch: If resuming from a checkpoint of another architecture.
    """
    cfg = ctx.cfg
    root = ctx.dataset_root
    logger.info("Training deformation", dataset=str(root), config_hash=cfg.config_hash())
    template = load_template(root)
    frames = load_training_frames(
        root,
        "train",
        cfg.deform.scene_points,
        cfg.seed,
        with_coarse=cfg.deform.supervision == "coarse",
    )
    trainer = DeformTrainer(cfg, template, ctx.experiment_dir, device=ctx.settings.device)
    if resume:
        trainer.resume()
    history = trainer.fit(frames)
    logger.info("Deformation training finished", epochs=len(history.epochs))
    return history


def cmd_train_reg(ctx: CommandContext, resume: bool = True) -> TrainingHistory:
    """Train the registration network with the trained deformation network frozen.

    Raises:
        MissingCheckpoint: If the deformation stage has not been trained yet.
        MalformedDataset: If the dataset or its template is missing.
    """
    cfg = ctx.cfg
    root = ctx.dataset_root
    deform_net = None
    if cfg.deform.enabled:
        deform_ckpt = checkpoint_path(ctx.experiment_dir, "deform")
        if not deform_ckpt.is_file():
            raise MissingCheckpoint(
                f"train-deform must run before train-reg (no checkpoint at {deform_ckpt})"
            )
        deform_net = load_deform_net(cfg, ctx.experiment_dir, device=ctx.settings.device)

    logger.info("Training registration", dataset=str(root), config_hash=cfg.config_hash())
    template = load_template(root)
    frames = load_training_frames(
        root, "train", cfg.registration.scene_points, cfg.seed, with_coarse=False
    )
    trainer = RegistrationTrainer(
        cfg, template, deform_net, ctx.experiment_dir, device=ctx.settings.device
    )
    if resume:
        trainer.resume()
    history = trainer.fit(frames)
    logger.info("Registration training finished", epochs=len(history.epochs))
    return history

