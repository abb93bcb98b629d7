"""Shared fixtures: small meshes, clouds, cameras and a fast experiment config."""

import numpy as np
import pytest
import torch
import trimesh

from src.app.config import ExperimentConfig, get_settings, load_config
from src.app.geometry import PointCloud, TriangleMesh
from src.app.rendering import CameraIntrinsics


@pytest.fixture
def tetrahedron() -> TriangleMesh:
    """Closed, outward-wound tetrahedron."""
    vertices = torch.tensor(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        dtype=torch.float64,
    )
    faces = torch.tensor([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriangleMesh(vertices, faces)


@pytest.fixture
def sphere() -> TriangleMesh:
    """Unit-diameter icosphere centered at the origin."""
    tm = trimesh.creation.icosphere(subdivisions=2, radius=0.5)
    return TriangleMesh(
        torch.as_tensor(np.asarray(tm.vertices), dtype=torch.float64),
        torch.as_tensor(np.asarray(tm.faces), dtype=torch.long),
    )


@pytest.fixture
def random_cloud() -> PointCloud:
    generator = torch.Generator().manual_seed(7)
    return PointCloud(torch.rand(200, 3, generator=generator, dtype=torch.float64))


@pytest.fixture
def camera() -> CameraIntrinsics:
    return CameraIntrinsics(fx=160.0, fy=160.0, cx=64.0, cy=64.0, width=128, height=128)


@pytest.fixture
def small_overrides() -> list[str]:
    """Tiny networks and data so end-to-end paths finish in seconds."""
    return [
        "encoder.level_widths=[16, 32]",
        "encoder.downsample_ratios=[1.0, 0.5]",
        "encoder.neighbors_k=8",
        "attention.heads=2",
        "attention.head_dim=8",
        "attention.projection_dim=16",
        "deform.decoder_widths=[32]",
        "deform.epochs=2",
        "deform.batch_size=2",
        "deform.n_samples=256",
        "deform.scene_points=128",
        "registration.epochs=2",
        "registration.batch_size=2",
        "registration.model_points=128",
        "registration.scene_points=128",
        "registration.sa_centers=[64, 32]",
        "registration.sa_widths=[32, 32]",
        "registration.sa_neighbors=8",
        "registration.feature_dim=16",
        "registration.max_lifted_points=256",
        "registration.train_correspondences.top_k=40",
        "registration.train_correspondences.groups=4",
        "registration.train_correspondences.group_size=10",
        "registration.test_correspondences.top_k=40",
        "registration.test_correspondences.groups=10",
        "registration.test_correspondences.group_size=4",
        "renderer.intrinsics.width=64",
        "renderer.intrinsics.height=64",
        "renderer.intrinsics.fx=80",
        "renderer.intrinsics.fy=80",
        "renderer.intrinsics.cx=32",
        "renderer.intrinsics.cy=32",
        "data.train_instances=2",
        "data.test_instances=1",
        "data.views_per_instance=4",
        "data.coarse_views=4",
        "data.object_size_range=[0.25, 0.3]",
        "data.distance_range=[0.6, 0.7]",
        "data.category.sections=12",
        "data.category.max_edge=0.3",
        "eval.add_model_points=100",
    ]


@pytest.fixture
def small_config(small_overrides) -> ExperimentConfig:
    return load_config(overrides=small_overrides)


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    """Point OUTPUT_ROOT at a temporary directory for the duration of a test."""
    monkeypatch.setenv("OUTPUT_ROOT", str(tmp_path))
    get_settings.cache_clear()
    yield tmp_path
    get_settings.cache_clear()


@pytest.fixture
def default_config() -> ExperimentConfig:
    return ExperimentConfig()
