"""Differentiable surface sampling and farthest point sampling."""

from dataclasses import dataclass

import torch

from ..errors import InvalidCount, ZeroAreaMesh
from .mesh_ops import face_areas
from .types import PointCloud, TriangleMesh


@dataclass(frozen=True)
class SurfaceSamples:
    """Fixed barycentric draws; ``points_on`` re-evaluates them for new vertex positions."""

    face_index: torch.Tensor
    weights: torch.Tensor

    def points_on(self, m: TriangleMesh) -> torch.Tensor:
        tri = m.vertices[m.faces[self.face_index]]
        w = self.weights.to(tri.dtype)
        return (w.unsqueeze(-1) * tri).sum(dim=1)


def sample_surface_barycentric(m: TriangleMesh, n: int, seed: int) -> SurfaceSamples:
    """Draw faces with probability proportional to area and barycentric weights per face.

    Weights follow (1-√u, √u(1-v), √u·v) for u, v uniform in [0, 1).

    Raises:
        InvalidCount: If n < 1.
        ZeroAreaMesh: If the mesh has no positive area.
    """
    if n < 1:
        raise InvalidCount(f"sample count must be >= 1, got {n}")
    areas = face_areas(m).detach().double().cpu()
    if float(areas.sum()) <= 0.0:
        raise ZeroAreaMesh("mesh has zero total area")

    generator = torch.Generator().manual_seed(seed)
    face_index = torch.multinomial(areas, n, replacement=True, generator=generator)
    uv = torch.rand(n, 2, generator=generator, dtype=torch.float64)
    su = uv[:, 0].sqrt()
    weights = torch.stack([1.0 - su, su * (1.0 - uv[:, 1]), su * uv[:, 1]], dim=1)

    device = m.vertices.device
    return SurfaceSamples(face_index.to(device), weights.to(device))


def sample_surface(m: TriangleMesh, n: int, seed: int) -> PointCloud:
    """Area-weighted surface sample; gradients flow to the mesh vertices."""
    return PointCloud(sample_surface_barycentric(m, n, seed).points_on(m))


def farthest_point_sample(points: torch.Tensor, k: int) -> torch.Tensor:
    """Greedy farthest point subset of size ``k``.

    Starts at the point farthest from the centroid, so the selection is unchanged by
    translation, uniform scaling and reordering of ``points`` (ties aside).

    Returns:
        Long tensor of ``k`` distinct indices into ``points``.
    """
    n = points.shape[0]
    if not 1 <= k <= n:
        raise InvalidCount(f"cannot pick {k} of {n} points")
    p = points.detach()
    selected = torch.empty(k, dtype=torch.long, device=p.device)
    spread = ((p - p.mean(dim=0)) ** 2).sum(dim=1)
    current = int(torch.argmax(spread))
    min_dist = torch.full((n,), float("inf"), dtype=p.dtype, device=p.device)
    for i in range(k):
        selected[i] = current
        d = ((p - p[current]) ** 2).sum(dim=1)
        min_dist = torch.minimum(min_dist, d)
        current = int(torch.argmax(min_dist))
    return selected


def subsample_cloud(pc: PointCloud, n: int, seed: int) -> PointCloud:
    """At most ``n`` points chosen without replacement; deterministic per seed."""
    if len(pc) <= n:
        return pc
    generator = torch.Generator().manual_seed(seed)
    index = torch.randperm(len(pc), generator=generator)[:n]
    return pc.subset(index.to(pc.points.device))
