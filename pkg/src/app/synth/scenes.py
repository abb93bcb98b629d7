"""Depth scene simulation with known ground truth."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from ..config.experiment import DataConfig, RendererConfig
from ..errors import NotVisible
from ..geometry.types import PointCloud, SimilarityTransform, TriangleMesh
from ..rendering.camera import CameraIntrinsics, DepthImage
from ..rendering.rasterizer import lift_depth, render_depth

MIN_COVERAGE = 100
MAX_POSE_ATTEMPTS = 20


@dataclass(frozen=True)
class SceneSample:
    """One depth frame of one object instance with its ground truth."""

    depth: DepthImage
    mask: torch.Tensor
    gt_transform: SimilarityTransform
    gt_mesh: Optional[TriangleMesh]
    intrinsics: CameraIntrinsics
    category: str = ""
    instance_id: str = ""

    def object_points(self) -> PointCloud:
        """Lift the masked depth to a camera-frame cloud."""
        masked = DepthImage(self.depth.values * self.mask.to(self.depth.values.dtype))
        return lift_depth(masked, self.intrinsics)


def simulate_scene(
    m: TriangleMesh,
    t: SimilarityTransform,
    cam: CameraIntrinsics,
    noise_sigma: float,
    seed: int = 0,
    renderer: Optional[RendererConfig] = None,
) -> SceneSample:
    """Render ``m`` at ``t`` and add i.i.d. Gaussian noise to the covered pixels.

    Raises:
        NotVisible: If fewer than ``MIN_COVERAGE`` pixels are covered.
    """
    renderer = renderer or RendererConfig(intrinsics=cam)
    with torch.no_grad():
        clean = render_depth(m, t, cam, renderer.near_plane, renderer.face_chunk).values
    mask = clean > 0
    coverage = int(mask.sum())
    if coverage < MIN_COVERAGE:
        raise NotVisible(f"object covers {coverage} pixels, need at least {MIN_COVERAGE}")

    values = clean.clone()
    if noise_sigma > 0:
        generator = torch.Generator().manual_seed(seed)
        noise = torch.randn(values.shape, generator=generator, dtype=values.dtype) * noise_sigma
        # noisy depth stays in front of the camera
        values = torch.where(mask, (values + noise).clamp_min(renderer.near_plane), values)
    return SceneSample(DepthImage(values), mask, t, m, cam)


def random_pose(
    rng: np.random.Generator,
    size_range: tuple[float, float],
    distance_range: tuple[float, float],
) -> SimilarityTransform:
    """Uniform rotation, object size in ``size_range`` meters, placed in front of the camera."""
    rotation = Rotation.random(random_state=rng).as_matrix()
    scale = rng.uniform(*size_range)
    distance = rng.uniform(*distance_range)
    lateral = rng.uniform(-0.05, 0.05, size=2) * distance
    return SimilarityTransform.from_numpy(scale, rotation, np.array([*lateral, distance]))


def sample_views(
    m: TriangleMesh,
    data: DataConfig,
    renderer: RendererConfig,
    count: int,
    seed: int,
    noise_sigma: Optional[float] = None,
) -> list[SceneSample]:
    """``count`` random views of one instance; poses that hide the object are redrawn.

    Raises:
        NotVisible: If a view cannot be placed after ``MAX_POSE_ATTEMPTS`` draws.
    """
    rng = np.random.default_rng(seed)
    sigma = data.noise_sigma if noise_sigma is None else noise_sigma
    views: list[SceneSample] = []
    for i in range(count):
        for attempt in range(MAX_POSE_ATTEMPTS):
            t = random_pose(rng, data.object_size_range, data.distance_range)
            try:
                views.append(
                    simulate_scene(m, t, renderer.intrinsics, sigma, seed + i, renderer)
                )
                break
            except NotVisible:
                if attempt == MAX_POSE_ATTEMPTS - 1:
                    raise
    return views
