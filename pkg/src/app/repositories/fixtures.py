"""Synthetic fixture datasets: manifest, template, coarse clouds and NOCS-layout splits.

Layout under the dataset root::

    manifest.json
    template.obj
    train/...            NOCS layout, one scene directory per instance
    train/coarse/<instance>.ply
    test/...
"""

import json
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional

import structlog

from ..errors import EmptyDataset, IoFailure, MalformedDataset
from ..geometry.io import load_mesh, load_point_cloud, save_mesh, save_point_cloud
from ..geometry.sampling import subsample_cloud
from ..geometry.types import PointCloud, SimilarityTransform, TriangleMesh
from ..rendering.camera import CameraIntrinsics
from ..synth.scenes import SceneSample
from .nocs import ingest_nocs

logger = structlog.get_logger()

Split = Literal["train", "test"]
MANIFEST = "manifest.json"
TEMPLATE = "template.obj"


@dataclass
class TrainingFrame:
    """What the trainers keep in memory per view."""

    name: str
    instance: str
    scene_points: PointCloud
    coarse: Optional[PointCloud]
    gt_mesh: Optional[TriangleMesh]
    gt_transform: SimilarityTransform
    intrinsics: CameraIntrinsics


def write_manifest(root: Path, payload: dict[str, Any]) -> Path:
    """Write the manifest with sorted keys so identical inputs give identical bytes."""
    path = Path(root) / MANIFEST
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"Cannot write manifest ({e})", path=str(path)) from e
    return path


def read_manifest(root: Path) -> dict[str, Any]:
    path = Path(root) / MANIFEST
    if not path.is_file():
        raise MalformedDataset("Missing dataset manifest", path=str(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedDataset(f"Invalid manifest ({e})", path=str(path)) from e


def save_template(root: Path, template: TriangleMesh) -> Path:
    return save_mesh(template, Path(root) / TEMPLATE)


def load_template(root: Path) -> TriangleMesh:
    path = Path(root) / TEMPLATE
    if not path.is_file():
        raise MalformedDataset("Missing category template", path=str(path))
    return load_mesh(path)


def coarse_path(root: Path, split: Split, instance: str) -> Path:
    return Path(root) / split / "coarse" / f"{instance}.ply"


def save_coarse(root: Path, split: Split, instance: str, pc: PointCloud) -> Path:
    return save_point_cloud(pc, coarse_path(root, split, instance))


def iter_split(root: Path, split: Split) -> Iterator[SceneSample]:
    """Stream the samples of one split."""
    yield from ingest_nocs(Path(root) / split)


def load_training_frames(
    root: Path,
    split: Split,
    scene_points: int,
    seed: int,
    with_coarse: bool = True,
) -> list[TrainingFrame]:
    """Every view of a split reduced to what training needs.

    Raises:
        EmptyDataset: If the split yields no usable frame.
        MalformedDataset: If a coarse cloud is required but missing.
    """
    frames: list[TrainingFrame] = []
    coarse_cache: dict[str, PointCloud] = {}
    for index, sample in enumerate(iter_split(root, split)):
        scene, frame, _ = sample.instance_id.split("/")
        points = sample.object_points()
        if points.is_empty:
            logger.warning("Frame without object pixels skipped", frame=sample.instance_id)
            continue
        coarse = None
        if with_coarse:
            if scene not in coarse_cache:
                path = coarse_path(root, split, scene)
                if not path.is_file():
                    raise MalformedDataset("Missing coarse point cloud", path=str(path))
                coarse_cache[scene] = load_point_cloud(path)
            coarse = coarse_cache[scene]
        frames.append(
            TrainingFrame(
                name=f"{scene}/{frame}",
                instance=scene,
                scene_points=subsample_cloud(points, scene_points, seed + index),
                coarse=coarse,
                gt_mesh=sample.gt_mesh,
                gt_transform=sample.gt_transform,
                intrinsics=sample.intrinsics,
            )
        )
    if not frames:
        raise EmptyDataset(f"split '{split}' under {root} has no usable frames")
    instances = len({f.instance for f in frames})
    logger.info("Frames loaded", split=split, frames=len(frames), instances=instances)
    return frames
