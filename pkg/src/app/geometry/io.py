"""Mesh and point cloud files (OBJ / PLY, positions and triangles only)."""

from pathlib import Path

import numpy as np
import structlog
import torch
import trimesh

from ..errors import InvalidGeometry, IoFailure
from .types import PointCloud, TriangleMesh

logger = structlog.get_logger()


def load_mesh(path: Path) -> TriangleMesh:
    """Read an OBJ or PLY mesh without merging or reordering vertices.

    Raises:
        IoFailure: If the file is missing or not a triangle mesh.
    """
    path = Path(path)
    if not path.is_file():
        raise IoFailure("Mesh file not found", path=str(path))
    try:
        loaded = trimesh.load(path, process=False, force="mesh")
    except Exception as e:
        raise IoFailure(f"Cannot parse mesh ({e})", path=str(path)) from e
    try:
        return TriangleMesh(
            torch.as_tensor(np.asarray(loaded.vertices, dtype=np.float64)),
            torch.as_tensor(np.asarray(loaded.faces, dtype=np.int64)),
        )
    except InvalidGeometry as e:
        raise IoFailure(f"Invalid mesh ({e.message})", path=str(path)) from e


def save_mesh(mesh: TriangleMesh, path: Path) -> Path:
    """Write a mesh; the format follows the file suffix."""
    path = Path(path)
    tm = to_trimesh(mesh)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tm.export(path)
    except (OSError, ValueError) as e:
        raise IoFailure(f"Cannot write mesh ({e})", path=str(path)) from e
    logger.debug("Mesh written", path=str(path), vertices=mesh.num_vertices)
    return path


def load_point_cloud(path: Path) -> PointCloud:
    """Read the vertex positions of a PLY file."""
    path = Path(path)
    if not path.is_file():
        raise IoFailure("Point cloud file not found", path=str(path))
    try:
        loaded = trimesh.load(path, process=False)
    except Exception as e:
        raise IoFailure(f"Cannot parse point cloud ({e})", path=str(path)) from e
    return PointCloud(torch.as_tensor(np.asarray(loaded.vertices, dtype=np.float64)))


def save_point_cloud(pc: PointCloud, path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        trimesh.PointCloud(pc.numpy()).export(path)
    except (OSError, ValueError) as e:
        raise IoFailure(f"Cannot write point cloud ({e})", path=str(path)) from e
    return path


def to_trimesh(mesh: TriangleMesh) -> trimesh.Trimesh:
    return trimesh.Trimesh(
        vertices=mesh.vertices.detach().cpu().double().numpy(),
        faces=mesh.faces.cpu().numpy(),
        process=False,
    )


def from_trimesh(tm: trimesh.Trimesh) -> TriangleMesh:
    return TriangleMesh(
        torch.as_tensor(np.asarray(tm.vertices, dtype=np.float64)),
        torch.as_tensor(np.asarray(tm.faces, dtype=np.int64)),
    )
