"""Depth rendering and depth image handling."""

from .camera import NOCS_REAL_INTRINSICS, CameraIntrinsics, DepthImage
from .depth_io import (
    load_depth_npz,
    read_depth_png,
    read_instance_ids,
    read_mask_png,
    save_depth_npz,
    write_depth_png,
    write_mask_png,
)
from .rasterizer import Rasterization, lift_depth, rasterize, render_depth

__all__ = [
    "NOCS_REAL_INTRINSICS",
    "CameraIntrinsics",
    "DepthImage",
    "Rasterization",
    "lift_depth",
    "load_depth_npz",
    "rasterize",
    "read_depth_png",
    "read_instance_ids",
    "read_mask_png",
    "render_depth",
    "save_depth_npz",
    "write_depth_png",
    "write_mask_png",
]
