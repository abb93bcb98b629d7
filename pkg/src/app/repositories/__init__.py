"""Repositories module: datasets and checkpoints on disk."""

from .checkpoints import checkpoint_path, load_checkpoint, save_checkpoint
from .fixtures import (
    TrainingFrame,
    iter_split,
    load_template,
    load_training_frames,
    read_manifest,
    save_coarse,
    save_template,
    write_manifest,
)
from .nocs import ingest_nocs, list_frames, write_nocs_frame

__all__ = [
    "TrainingFrame",
    "checkpoint_path",
    "ingest_nocs",
    "iter_split",
    "list_frames",
    "load_checkpoint",
    "load_template",
    "load_training_frames",
    "read_manifest",
    "save_checkpoint",
    "save_coarse",
    "save_template",
    "write_manifest",
    "write_nocs_frame",
]
