"""Pinhole camera model and depth image container."""

from dataclasses import dataclass

import numpy as np
import torch
from pydantic import BaseModel, Field, model_validator

from ..errors import InvalidGeometry

# Default intrinsics of the NOCS-REAL capture rig (640x480).
NOCS_REAL_INTRINSICS = {
    "fx": 591.0125,
    "fy": 590.16775,
    "cx": 322.525,
    "cy": 244.11084,
    "width": 640,
    "height": 480,
}


class CameraIntrinsics(BaseModel):
    """Pinhole intrinsics. Pixel centers sit on integer coordinates."""

    model_config = {"frozen": True, "extra": "forbid"}

    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    width: int = Field(ge=1)
    height: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_principal_point(self) -> "CameraIntrinsics":
        if not 0 <= self.cx < self.width or not 0 <= self.cy < self.height:
            raise ValueError("principal point must lie inside the image")
        return self

    def matrix(self) -> np.ndarray:
        """3x3 calibration matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )

    def pixel_footprint(self, depth: float) -> float:
        """Back-projected size of one pixel diagonal at the given depth (meters)."""
        return depth * max(1.0 / self.fx, 1.0 / self.fy) * float(np.sqrt(2.0))


@dataclass(frozen=True)
class DepthImage:
    """Depth in meters on a height x width grid; 0 marks invalid pixels."""

    values: torch.Tensor

    def __post_init__(self) -> None:
        if self.values.dim() != 2:
            raise InvalidGeometry(f"depth image must be 2-D, got shape {tuple(self.values.shape)}")
        detached = self.values.detach()
        if not torch.isfinite(detached).all():
            raise InvalidGeometry("depth image contains non-finite values")
        if (detached < 0).any():
            raise InvalidGeometry("depth image contains negative values")

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def valid_mask(self) -> torch.Tensor:
        return self.values.detach() > 0

    @property
    def coverage(self) -> int:
        """Number of valid pixels."""
        return int(self.valid_mask.sum().item())

    def masked(self, mask: torch.Tensor) -> "DepthImage":
        """Depth with every pixel outside ``mask`` set invalid."""
        return DepthImage(torch.where(mask, self.values, torch.zeros_like(self.values)))
