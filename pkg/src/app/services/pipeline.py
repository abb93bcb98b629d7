"""Inference: deform the template, register it to the scene, render the prediction."""

import time
from dataclasses import dataclass, field
from typing import Optional

import structlog
import torch

from ..config.experiment import ExperimentConfig
from ..geometry.sampling import sample_surface, subsample_cloud
from ..geometry.types import PointCloud, SimilarityTransform, TriangleMesh
from ..networks.deformnet import DeformNet, deform
from ..networks.regnet import PoseEstimate, RegistrationNet, estimate_pose_scale
from ..rendering.camera import CameraIntrinsics
from .icp import refine_with_history
from .registration_trainer import predicted_view

logger = structlog.get_logger()


@dataclass
class PipelineResult:
    transform: SimilarityTransform
    deformed_mesh: TriangleMesh
    estimate: PoseEstimate
    rendered: PointCloud
    refined: Optional[SimilarityTransform] = None
    timings_ms: dict[str, float] = field(default_factory=dict)
    # trimmed ICP residual history of the refinement step
    icp_residuals: list[float] = field(default_factory=list)

    @property
    def final_transform(self) -> SimilarityTransform:
        return self.refined if self.refined is not None else self.transform


class _Timer:
    def __init__(self, timings: dict[str, float], stage: str):
        self.timings = timings
        self.stage = stage

    def __enter__(self) -> "_Timer":
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.timings[self.stage] = (time.perf_counter() - self.start) * 1000.0


class PosePipeline:
    """Deformation, registration and rendering for one observed object."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        template: TriangleMesh,
        deform_net: Optional[DeformNet],
        registration_net: RegistrationNet,
    ):
        self.cfg = cfg
        self.template = template
        self.deform_net = deform_net
        self.registration_net = registration_net

    def deform(self, scene_pc: PointCloud) -> TriangleMesh:
        if self.deform_net is None or not self.cfg.deform.enabled:
            return self.template
        with torch.no_grad():
            mesh = deform(self.template, scene_pc, self.deform_net).deformed_mesh
        return TriangleMesh(mesh.vertices.double(), mesh.faces)

    def predict(
        self,
        object_points: PointCloud,
        cam: CameraIntrinsics,
        seed: int,
        icp_refine: bool = False,
    ) -> PipelineResult:
        """Estimate pose and size from the observed object points (camera frame).

        Raises:
            TooFewPoints: If the observation is too small to encode.
            AllGroupsDegenerate: If no correspondence group can be fitted.
        """
        cfg = self.cfg
        timings: dict[str, float] = {}
        scene_pc = subsample_cloud(object_points, cfg.registration.scene_points, seed)

        with _Timer(timings, "deformation"):
            mesh = self.deform(scene_pc)

        with _Timer(timings, "registration"), torch.no_grad():
            model_pc = sample_surface(mesh, cfg.registration.model_points, seed)
            estimate = estimate_pose_scale(
                model_pc,
                scene_pc,
                self.registration_net,
                cfg.registration.test_correspondences,
                seed,
                weighted=cfg.registration.weighted_fit,
            )
        transform = estimate.transform.detach()

        with _Timer(timings, "rendering"), torch.no_grad():
            rendered = predicted_view(mesh, transform, cam, cfg, seed)

        result = PipelineResult(transform, mesh, estimate, rendered, timings_ms=timings)
        if icp_refine and not rendered.is_empty:
            with _Timer(timings, "icp"):
                result.refined, result.icp_residuals = refine_with_history(
                    rendered, scene_pc, transform, cfg.icp
                )
        return result
