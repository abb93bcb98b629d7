"""Depth and mask image I/O.

Depth PNGs follow the NOCS convention: 16-bit unsigned integers in millimeters, 0 for
invalid pixels. ``.npz`` containers hold float depth losslessly.
"""

from pathlib import Path

import numpy as np
import structlog
import torch
from PIL import Image

from ..errors import IoFailure
from .camera import DepthImage

logger = structlog.get_logger()

MM_PER_METER = 1000.0
MAX_DEPTH_MM = np.iinfo(np.uint16).max


def write_depth_png(path: Path, depth: DepthImage) -> None:
    """Write depth as a 16-bit millimeter PNG; values beyond 65.535 m are clipped."""
    mm = np.rint(depth.values.detach().cpu().double().numpy() * MM_PER_METER)
    mm = np.clip(mm, 0, MAX_DEPTH_MM).astype(np.uint16)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(mm).save(path)
    except OSError as e:
        raise IoFailure(f"Cannot write depth PNG ({e})", path=str(path)) from e


def read_depth_png(path: Path, dtype: torch.dtype = torch.float64) -> DepthImage:
    """Read a 16-bit millimeter PNG into meters."""
    try:
        with Image.open(path) as image:
            mm = np.array(image)
    except OSError as e:
        raise IoFailure(f"Cannot read depth PNG ({e})", path=str(path)) from e
    if mm.ndim == 3:
        # some exporters store depth in the first channel of an RGB image
        mm = mm[..., 0]
    return DepthImage(torch.as_tensor(mm.astype(np.float64) / MM_PER_METER, dtype=dtype))


def write_mask_png(
    path: Path, mask: torch.Tensor, instance_id: int = 255, background: int = 0
) -> None:
    """Write a boolean mask as an 8-bit PNG with ``instance_id`` on object pixels."""
    data = np.where(mask.detach().cpu().numpy(), instance_id, background).astype(np.uint8)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(data).save(path)
    except OSError as e:
        raise IoFailure(f"Cannot write mask PNG ({e})", path=str(path)) from e


def read_instance_ids(path: Path) -> torch.Tensor:
    """Per-pixel instance ids of a NOCS mask PNG (255 marks background)."""
    try:
        with Image.open(path) as image:
            data = np.array(image)
    except OSError as e:
        raise IoFailure(f"Cannot read mask PNG ({e})", path=str(path)) from e
    if data.ndim == 3:
        data = data[..., 0]
    return torch.as_tensor(data.astype(np.int64))


def read_mask_png(path: Path) -> torch.Tensor:
    """Read a binary mask PNG; every nonzero pixel is object."""
    return read_instance_ids(path) > 0


def save_depth_npz(path: Path, depth: DepthImage) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(path, depth=depth.values.detach().cpu().numpy())
    except OSError as e:
        raise IoFailure(f"Cannot write depth container ({e})", path=str(path)) from e


def load_depth_npz(path: Path) -> DepthImage:
    try:
        with np.load(path) as data:
            values = data["depth"]
    except (OSError, KeyError, ValueError) as e:
        raise IoFailure(f"Cannot read depth container ({e})", path=str(path)) from e
    return DepthImage(torch.as_tensor(values))
