"""NOCS-style dataset directories: streaming reader and writer.

Layout::

    <root>/intrinsics.json                   optional; NOCS-REAL intrinsics otherwise
    <root>/models/<model_name>.obj           normalized instance meshes (optional)
    <root>/<scene>/<frame>_depth.png         16-bit depth in millimeters
    <root>/<scene>/<frame>_mask.png          8-bit instance ids, 255 = background
    <root>/<scene>/<frame>_meta.txt          "<inst_id> <category> <model_name>" per line
    <root>/<scene>/<frame>_pose.json         {"<inst_id>": {scale, rotation, translation}}
"""

import json
from collections.abc import Callable, Iterator
from pathlib import Path
from typing import Optional

import structlog

from ..errors import IoFailure, MalformedDataset
from ..geometry.io import load_mesh, save_mesh
from ..geometry.types import SimilarityTransform, TriangleMesh
from ..rendering.camera import NOCS_REAL_INTRINSICS, CameraIntrinsics, DepthImage
from ..rendering.depth_io import (
    read_depth_png,
    read_instance_ids,
    write_depth_png,
    write_mask_png,
)
from ..synth.scenes import SceneSample

logger = structlog.get_logger()

BACKGROUND_ID = 255
DEPTH_SUFFIX = "_depth.png"


def _read_intrinsics(root: Path) -> CameraIntrinsics:
    path = root / "intrinsics.json"
    if not path.is_file():
        return CameraIntrinsics(**NOCS_REAL_INTRINSICS)
    try:
        return CameraIntrinsics.model_validate_json(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise MalformedDataset(f"Invalid intrinsics ({e})", path=str(path)) from e


def _read_meta(path: Path) -> list[tuple[int, str, str]]:
    """Instance rows of a meta file as (instance id, category, model name)."""
    if not path.is_file():
        raise MalformedDataset("Missing meta file", path=str(path))
    rows = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 3 or not parts[0].isdigit():
            raise MalformedDataset(f"Bad meta line {number}", path=str(path))
        rows.append((int(parts[0]), parts[1], parts[2]))
    return rows


def _read_poses(path: Path) -> dict[int, SimilarityTransform]:
    if not path.is_file():
        raise MalformedDataset("Missing pose file", path=str(path))
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        return {int(k): SimilarityTransform.from_dict(v) for k, v in raw.items()}
    except (ValueError, KeyError, TypeError) as e:
        raise MalformedDataset(f"Invalid pose annotations ({e})", path=str(path)) from e


def list_frames(root: Path) -> list[Path]:
    """Frame prefixes (``<scene>/<frame>``) in sorted order."""
    return sorted(
        p.with_name(p.name[: -len(DEPTH_SUFFIX)]) for p in root.glob(f"*/*{DEPTH_SUFFIX}")
    )


def ingest_nocs(
    root_path: Path,
    category: Optional[str] = None,
    load_meshes: bool = True,
    on_frame_loaded: Optional[Callable[[Path], None]] = None,
) -> Iterator[SceneSample]:
    """Stream one ``SceneSample`` per annotated instance, one frame in memory at a time.

    Args:
        root_path: Dataset root.
        category: Only yield instances of this category.
        load_meshes: Attach ``models/<model_name>.obj`` as ground-truth mesh when present.
        on_frame_loaded: Called with the frame prefix each time a frame's arrays are read.

    Raises:
        MalformedDataset: If the root has no frames or a frame's files are missing or invalid.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise MalformedDataset("Dataset root not found", path=str(root))
    frames = list_frames(root)
    if not frames:
        raise MalformedDataset("Dataset contains no depth frames", path=str(root))
    intrinsics = _read_intrinsics(root)
    meshes: dict[str, Optional[TriangleMesh]] = {}

    for prefix in frames:
        mask_path = prefix.with_name(prefix.name + "_mask.png")
        if not mask_path.is_file():
            raise MalformedDataset("Missing mask file", path=str(mask_path))
        meta = _read_meta(prefix.with_name(prefix.name + "_meta.txt"))
        poses = _read_poses(prefix.with_name(prefix.name + "_pose.json"))
        wanted = [row for row in meta if category is None or row[1] == category]
        if not wanted:
            continue

        try:
            depth = read_depth_png(prefix.with_name(prefix.name + DEPTH_SUFFIX))
            instance_ids = read_instance_ids(mask_path)
        except IoFailure as e:
            raise MalformedDataset("Unreadable frame image", path=e.path) from e
        if on_frame_loaded is not None:
            on_frame_loaded(prefix)

        for inst_id, inst_category, model_name in wanted:
            if inst_id not in poses:
                raise MalformedDataset(
                    f"No pose for instance {inst_id}",
                    path=str(prefix.with_name(prefix.name + "_pose.json")),
                )
            mask = (instance_ids == inst_id) & depth.valid_mask
            if load_meshes and model_name not in meshes:
                model_path = root / "models" / f"{model_name}.obj"
                meshes[model_name] = load_mesh(model_path) if model_path.is_file() else None
            yield SceneSample(
                depth=depth,
                mask=mask,
                gt_transform=poses[inst_id],
                gt_mesh=meshes.get(model_name) if load_meshes else None,
                intrinsics=intrinsics,
                category=inst_category,
                instance_id=f"{prefix.parent.name}/{prefix.name}/{inst_id}",
            )
        del depth, instance_ids


def write_nocs_frame(
    root_path: Path,
    scene: str,
    frame: int,
    sample: SceneSample,
    model_name: str,
    inst_id: int = 1,
) -> Path:
    """Write one single-instance frame; the instance mesh is stored once per model name.

    Returns:
        The frame prefix.

    Raises:
        IoFailure: If any file cannot be written.
    """
    root = Path(root_path)
    prefix = root / scene / f"{frame:04d}"
    intrinsics_path = root / "intrinsics.json"
    try:
        prefix.parent.mkdir(parents=True, exist_ok=True)
        if not intrinsics_path.is_file():
            intrinsics_path.write_text(sample.intrinsics.model_dump_json(), encoding="utf-8")
        values = sample.depth.values.detach()
        masked = DepthImage(values * sample.mask.to(values.dtype))
        write_depth_png(prefix.with_name(prefix.name + DEPTH_SUFFIX), masked)
        write_mask_png(
            prefix.with_name(prefix.name + "_mask.png"),
            sample.mask,
            instance_id=inst_id,
            background=BACKGROUND_ID,
        )
        prefix.with_name(prefix.name + "_meta.txt").write_text(
            f"{inst_id} {sample.category or 'object'} {model_name}\n", encoding="utf-8"
        )
        prefix.with_name(prefix.name + "_pose.json").write_text(
            json.dumps({str(inst_id): sample.gt_transform.as_dict()}), encoding="utf-8"
        )
    except OSError as e:
        raise IoFailure(f"Cannot write frame ({e})", path=str(prefix)) from e

    model_path = root / "models" / f"{model_name}.obj"
    if sample.gt_mesh is not None and not model_path.is_file():
        save_mesh(sample.gt_mesh, model_path)
    return prefix

