"""Template mesh deformation network and its training loss."""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from ..config.experiment import AttentionConfig, DeformConfig, DeformLossWeights, EncoderConfig
from ..errors import FrameMismatch, TooFewPoints
from ..geometry.losses import Reduction, chamfer_tensors, squared_distances
from ..geometry.mesh_ops import laplacian_loss, normal_consistency_loss
from ..geometry.sampling import sample_surface
from ..geometry.types import PointCloud, TriangleMesh
from .attention import CrossEnhancement
from .encoder import MIN_POINTS, FeaturePyramid, InvariantEncoder
from .results import LossBreakdown

MAX_DIAMETER_DEVIATION = 0.5


@dataclass
class DeformationResult:
    offsets: torch.Tensor
    deformed_mesh: TriangleMesh
    loss_breakdown: Optional[LossBreakdown] = None


class DeformNet(nn.Module):
    """Per-vertex offset regressor.

    Template vertices and scene points share one invariant encoder. Each template level is
    optionally enhanced with features retrieved from the scene level, upsampled back to
    every vertex by nearest level point, and decoded together with both global features.
    """

    def __init__(
        self,
        encoder_cfg: EncoderConfig,
        attention_cfg: AttentionConfig,
        cfg: DeformConfig,
    ):
        super().__init__()
        self.cfg = cfg
        self.encoder = InvariantEncoder(encoder_cfg)
        widths = list(encoder_cfg.level_widths)
        if cfg.cross_enhance:
            self.enhancement: Optional[CrossEnhancement] = CrossEnhancement(
                widths, attention_cfg, cfg.fusion
            )
            level_widths = self.enhancement.out_widths()
        else:
            self.enhancement = None
            level_widths = widths

        in_dim = sum(level_widths) + 2 * self.encoder.out_width
        layers: list[nn.Module] = []
        for width in cfg.decoder_widths:
            layers += [nn.Linear(in_dim, width), nn.ReLU()]
            in_dim = width
        head = nn.Linear(in_dim, 3)
        # identity deformation at initialization
        nn.init.zeros_(head.weight)
        nn.init.zeros_(head.bias)
        layers.append(head)
        self.decoder = nn.Sequential(*layers)

    def _vertex_features(self, vertices: torch.Tensor, pyramid: FeaturePyramid) -> torch.Tensor:
        columns = []
        for level in pyramid.levels:
            if level.points.shape[0] == vertices.shape[0]:
                columns.append(level.features)
                continue
            nearest = squared_distances(vertices.detach(), level.points.detach()).argmin(dim=1)
            columns.append(level.features[nearest])
        return torch.cat(columns, dim=-1)

    def forward(self, template: TriangleMesh, scene: PointCloud) -> DeformationResult:
        if len(scene) < MIN_POINTS:
            raise TooFewPoints(f"scene needs at least {MIN_POINTS} points, got {len(scene)}")
        weight = self.decoder[-1].weight
        # the network runs where its weights live; results go back to the template's device
        home = template.vertices.device
        vertices = template.vertices.to(weight.device, weight.dtype)

        mesh_pyramid = self.encoder(vertices)
        scene_pyramid = self.encoder(scene.points.to(weight.device, weight.dtype))
        if self.enhancement is not None:
            mesh_pyramid = self.enhancement(mesh_pyramid, scene_pyramid)

        per_vertex = self._vertex_features(vertices, mesh_pyramid)
        n = vertices.shape[0]
        globals_ = torch.cat([mesh_pyramid.global_feature, scene_pyramid.global_feature])
        decoder_in = torch.cat([per_vertex, globals_.unsqueeze(0).expand(n, -1)], dim=-1)

        offsets = self.decoder(decoder_in).to(home)
        deformed = TriangleMesh(vertices.to(home) + offsets, template.faces)
        return DeformationResult(offsets=offsets, deformed_mesh=deformed)


def deform(template: TriangleMesh, scene: PointCloud, model: DeformNet) -> DeformationResult:
    """Deform ``template`` toward the instance observed in ``scene``.

    Raises:
        TooFewPoints: If the scene or template has fewer than 32 points.
    """
    return model(template, scene)


def deformation_loss(
    result: DeformationResult,
    coarse_target: PointCloud,
    template: TriangleMesh,
    weights: DeformLossWeights,
    n_samples: int = 2048,
    seed: int = 0,
    reduction: Reduction = "mean",
) -> LossBreakdown:
    """λ_cd·chamfer + λ_lpc·laplacian + λ_nc·normal consistency.

    Raises:
        FrameMismatch: If the target's diameter deviates from the template's by more than 50%.
    """
    reference = template.diameter()
    target_diameter = coarse_target.diameter()
    if reference > 0 and abs(target_diameter - reference) / reference > MAX_DIAMETER_DEVIATION:
        raise FrameMismatch(
            f"target diameter {target_diameter:.3f} is far from template diameter {reference:.3f}; "
            "supervision is probably not in the normalized frame"
        )

    deformed = result.deformed_mesh
    samples = sample_surface(deformed, n_samples, seed)
    target = coarse_target.points.to(samples.points.dtype)
    l_cd = chamfer_tensors(target, samples.points, reduction)
    l_lpc = laplacian_loss(template.to(deformed.vertices.dtype), deformed)
    l_nc = normal_consistency_loss(deformed)

    total = weights.lambda_cd * l_cd + weights.lambda_lpc * l_lpc + weights.lambda_nc * l_nc
    breakdown = LossBreakdown(total, {"cd": l_cd, "lpc": l_lpc, "nc": l_nc})
    result.loss_breakdown = breakdown
    return breakdown
