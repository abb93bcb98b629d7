"""Tests for the NOCS-layout reader and writer, fixture datasets and checkpoints."""

import dataclasses

import numpy as np
import pytest
import torch

from src.app.config import load_config
from src.app.errors import (
    CheckpointMismatch,
    IoFailure,
    MalformedDataset,
    MissingCheckpoint,
)
from src.app.geometry import PointCloud, SimilarityTransform
from src.app.repositories import (
    checkpoint_path,
    ingest_nocs,
    iter_split,
    list_frames,
    load_checkpoint,
    load_template,
    load_training_frames,
    read_manifest,
    save_checkpoint,
    save_coarse,
    save_template,
    write_manifest,
    write_nocs_frame,
)
from src.app.synth import simulate_scene


@pytest.fixture
def sample(sphere, camera):
    t = SimilarityTransform.from_numpy(0.3, np.eye(3), np.array([0.01, 0.0, 0.8]))
    scene = simulate_scene(sphere, t, camera, noise_sigma=0.0)
    return dataclasses.replace(scene, category="mug")


# =====================================================
# NOCS LAYOUT
# =====================================================


def test_written_frame_reads_back(tmp_path, sample):
    write_nocs_frame(tmp_path, "scene_1", 0, sample, model_name="mug_000")
    loaded_frames = []
    (read,) = list(ingest_nocs(tmp_path, on_frame_loaded=loaded_frames.append))

    assert read.category == "mug"
    assert read.instance_id == "scene_1/0000/1"
    assert read.intrinsics == sample.intrinsics
    assert torch.equal(read.mask, sample.mask)
    torch.testing.assert_close(read.depth.values, sample.depth.values, atol=5e-4, rtol=0)
    torch.testing.assert_close(read.gt_transform.rotation, sample.gt_transform.rotation)
    torch.testing.assert_close(read.gt_transform.translation, sample.gt_transform.translation)
    assert read.gt_mesh.num_faces == sample.gt_mesh.num_faces
    assert len(loaded_frames) == 1


def test_ingest_filters_by_category_and_skips_meshes(tmp_path, sample):
    write_nocs_frame(tmp_path, "scene_1", 0, sample, model_name="mug_000")
    assert list(ingest_nocs(tmp_path, category="bowl")) == []
    (read,) = list(ingest_nocs(tmp_path, load_meshes=False))
    assert read.gt_mesh is None


def test_list_frames_sorted(tmp_path, sample):
    for scene, frame in (("b", 1), ("a", 3), ("a", 2)):
        write_nocs_frame(tmp_path, scene, frame, sample, model_name="m")
    assert [f"{p.parent.name}/{p.name}" for p in list_frames(tmp_path)] == [
        "a/0002",
        "a/0003",
        "b/0001",
    ]


def test_ingest_malformed_datasets(tmp_path, sample):
    with pytest.raises(MalformedDataset):
        list(ingest_nocs(tmp_path / "missing"))
    with pytest.raises(MalformedDataset):
        list(ingest_nocs(tmp_path))

    prefix = write_nocs_frame(tmp_path, "scene_1", 0, sample, model_name="m")
    meta = prefix.with_name(prefix.name + "_meta.txt")
    meta.write_text("one mug m\n", encoding="utf-8")
    with pytest.raises(MalformedDataset):
        list(ingest_nocs(tmp_path))

    meta.write_text("1 mug m\n", encoding="utf-8")
    prefix.with_name(prefix.name + "_mask.png").unlink()
    with pytest.raises(MalformedDataset):
        list(ingest_nocs(tmp_path))


def test_ingest_missing_pose_for_instance(tmp_path, sample):
    prefix = write_nocs_frame(tmp_path, "scene_1", 0, sample, model_name="m")
    prefix.with_name(prefix.name + "_meta.txt").write_text("2 mug m\n", encoding="utf-8")
    with pytest.raises(MalformedDataset):
        list(ingest_nocs(tmp_path))


# =====================================================
# FIXTURE DATASETS
# =====================================================


def test_manifest_bytes_are_stable(tmp_path):
    payload = {"seed": 3, "category": "mug", "splits": {"train": ["a"], "test": ["b"]}}
    first = write_manifest(tmp_path / "one", payload).read_bytes()
    reordered = dict(reversed(list(payload.items())))
    assert write_manifest(tmp_path / "two", reordered).read_bytes() == first
    assert read_manifest(tmp_path / "one") == payload


def test_manifest_and_template_missing(tmp_path):
    with pytest.raises(MalformedDataset):
        read_manifest(tmp_path)
    with pytest.raises(MalformedDataset):
        load_template(tmp_path)


def test_template_round_trip(tmp_path, sphere):
    save_template(tmp_path, sphere)
    loaded = load_template(tmp_path)
    assert torch.equal(loaded.faces, sphere.faces)
    torch.testing.assert_close(loaded.vertices, sphere.vertices, atol=1e-6, rtol=0)


def test_training_frames_need_coarse_clouds(tmp_path, sample):
    write_nocs_frame(tmp_path / "train", "mug_000", 0, sample, model_name="mug_000")
    with pytest.raises(MalformedDataset):
        load_training_frames(tmp_path, "train", scene_points=64, seed=0)

    coarse = PointCloud(torch.rand(50, 3, dtype=torch.float64))
    save_coarse(tmp_path, "train", "mug_000", coarse)
    (frame,) = load_training_frames(tmp_path, "train", scene_points=64, seed=0)
    assert frame.name == "mug_000/0000"
    assert len(frame.scene_points) == 64
    assert len(frame.coarse) == 50

    (bare,) = load_training_frames(tmp_path, "train", scene_points=64, seed=0, with_coarse=False)
    assert bare.coarse is None
    assert len(list(iter_split(tmp_path, "train"))) == 1


# =====================================================
# CHECKPOINTS
# =====================================================


def test_checkpoint_round_trip(tmp_path, default_config):
    model = torch.nn.Linear(3, 2)
    path = checkpoint_path(tmp_path, "deform")
    save_checkpoint(path, "deform", default_config, epoch=4, model=model, losses=[{"total": 1.0}])
    payload = load_checkpoint(path, "deform", default_config)
    assert payload["epoch"] == 4
    assert payload["losses"] == [{"total": 1.0}]
    assert payload["config_hash"] == default_config.config_hash()
    assert torch.equal(payload["model"]["weight"], model.weight.detach())
    assert not path.with_suffix(".pt.tmp").exists()


def test_checkpoint_training_schedule_does_not_matter(tmp_path, default_config):
    path = save_checkpoint(
        tmp_path / "reg.pt", "registration", default_config, 1, torch.nn.Linear(2, 2)
    )
    longer = load_config(overrides=["registration.epochs=99"])
    assert load_checkpoint(path, "registration", longer)["epoch"] == 1


def test_checkpoint_mismatches(tmp_path, default_config):
    path = save_checkpoint(tmp_path / "d.pt", "deform", default_config, 1, torch.nn.Linear(2, 2))
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, "registration", default_config)
    wider = load_config(overrides=["registration.feature_dim=64"])
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, "deform", wider)


def test_checkpoint_missing_or_corrupt(tmp_path, default_config):
    with pytest.raises(MissingCheckpoint):
        load_checkpoint(tmp_path / "none.pt", "deform", default_config)
    corrupt = tmp_path / "bad.pt"
    corrupt.write_bytes(b"not a checkpoint")
    with pytest.raises(IoFailure):
        load_checkpoint(corrupt, "deform", default_config)
