"""Hard z-buffer depth rasterization with gradients through the winning faces.

Visibility (which face owns a pixel) is resolved without gradients. Depth at covered
pixels is then recomputed differentiably from the owning face's projected vertices with
perspective-correct interpolation, so gradients reach vertex positions. Pixels on the
silhouette boundary carry no gradient with respect to coverage.
"""

from dataclasses import dataclass

import torch

from ..geometry.types import PointCloud, SimilarityTransform, TriangleMesh
from .camera import CameraIntrinsics, DepthImage

NEAR_PLANE = 1e-4
FACE_CHUNK = 64
MIN_SCREEN_AREA = 1e-12
# upper bound on faces x window pixels evaluated per chunk
PIXEL_BUDGET = 2**22


@dataclass
class Rasterization:
    """Depth (H, W) and owning face per pixel (-1 where nothing is visible)."""

    depth: torch.Tensor
    face_index: torch.Tensor

    @property
    def coverage(self) -> int:
        return int((self.face_index >= 0).sum())


def project(points: torch.Tensor, cam: CameraIntrinsics) -> torch.Tensor:
    """Pixel coordinates (N, 2) as (u, v); pixel centers sit on integers."""
    z = points[:, 2]
    u = cam.fx * points[:, 0] / z + cam.cx
    v = cam.fy * points[:, 1] / z + cam.cy
    return torch.stack([u, v], dim=-1)


def visible_faces(vertices: torch.Tensor, faces: torch.Tensor, near: float) -> torch.Tensor:
    """Indices of faces fully in front of the near plane whose normal faces the camera."""
    tri = vertices[faces]
    in_front = (tri[..., 2] > near).all(dim=1)
    normal = torch.linalg.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    # the ray from the camera center to a face point is the point itself
    front_facing = (normal * tri[:, 0]).sum(dim=1) < 0
    return torch.nonzero(in_front & front_facing).squeeze(1)


def _barycentric(
    uv: torch.Tensor, px: torch.Tensor, py: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Screen-space barycentrics of pixels against triangles.

    Args:
        uv: Projected triangles (F, 3, 2).
        px, py: Pixel coordinates broadcastable against (F, ...).

    Returns:
        Weights (3, F, ...) and the doubled signed screen area (F,).
    """
    a, b, c = uv[:, 0], uv[:, 1], uv[:, 2]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    shape = (-1,) + (1,) * (px.dim() - 1)

    def edge(p0, p1):
        return (p1[:, 0].view(shape) - p0[:, 0].view(shape)) * (py - p0[:, 1].view(shape)) - (
            p1[:, 1].view(shape) - p0[:, 1].view(shape)
        ) * (px - p0[:, 0].view(shape))

    safe = torch.where(area.abs() < MIN_SCREEN_AREA, torch.ones_like(area), area).view(shape)
    w0 = edge(b, c) / safe
    w1 = edge(c, a) / safe
    w2 = edge(a, b) / safe
    return torch.stack([w0, w1, w2]), area


def _pixel_window(uv: torch.Tensor, width: int, height: int) -> tuple[int, int, int, int]:
    """Inclusive pixel bounds (u_min, u_max, v_min, v_max) of projected triangles, clipped."""
    u_min = max(int(torch.ceil(uv[..., 0].min())), 0)
    u_max = min(int(torch.floor(uv[..., 0].max())), width - 1)
    v_min = max(int(torch.ceil(uv[..., 1].min())), 0)
    v_max = min(int(torch.floor(uv[..., 1].max())), height - 1)
    return u_min, u_max, v_min, v_max


def _window_area(bounds: tuple[int, int, int, int]) -> int:
    u_min, u_max, v_min, v_max = bounds
    return max(u_max - u_min + 1, 0) * max(v_max - v_min + 1, 0)


def rasterize(
    vertices_cam: torch.Tensor,
    faces: torch.Tensor,
    cam: CameraIntrinsics,
    near: float = NEAR_PLANE,
    face_chunk: int = FACE_CHUNK,
) -> Rasterization:
    """Z-buffer camera-frame triangles onto the image grid.

    Faces crossing the near plane are dropped whole rather than clipped; back faces are
    culled. Ties in depth go to the lower face index. Chunks shrink until faces times
    window pixels fits in ``PIXEL_BUDGET``.
    """
    dtype, device = vertices_cam.dtype, vertices_cam.device
    height, width = cam.height, cam.width
    best_depth = torch.full((height, width), float("inf"), dtype=dtype, device=device)
    best_face = torch.full((height, width), -1, dtype=torch.long, device=device)

    with torch.no_grad():
        verts = vertices_cam.detach()
        candidates = visible_faces(verts, faces, near)
        if candidates.numel():
            uv_all = project(verts, cam)[faces[candidates]]
            start = 0
            while start < candidates.numel():
                count = min(face_chunk, candidates.numel() - start)
                bounds = _pixel_window(uv_all[start : start + count], width, height)
                # a chunk evaluates count x window pixels at once
                while count > 1 and count * _window_area(bounds) > PIXEL_BUDGET:
                    count //= 2
                    bounds = _pixel_window(uv_all[start : start + count], width, height)
                ids = candidates[start : start + count]
                uv = uv_all[start : start + count]
                start += count
                u_min, u_max, v_min, v_max = bounds
                if u_min > u_max or v_min > v_max:
                    continue

                py, px = torch.meshgrid(
                    torch.arange(v_min, v_max + 1, dtype=dtype, device=device),
                    torch.arange(u_min, u_max + 1, dtype=dtype, device=device),
                    indexing="ij",
                )
                bary, area = _barycentric(uv, px.unsqueeze(0), py.unsqueeze(0))
                inside = (bary >= 0).all(dim=0) & (area.abs() >= MIN_SCREEN_AREA).view(-1, 1, 1)

                inv_z = 1.0 / verts[faces[ids]][..., 2]  # (C, 3)
                inv_depth = (bary * inv_z.T.unsqueeze(-1).unsqueeze(-1)).sum(dim=0)
                depth = torch.where(inside, 1.0 / inv_depth.clamp_min(1e-30), torch.inf)

                chunk_depth, chunk_arg = depth.min(dim=0)
                window = best_depth[v_min : v_max + 1, u_min : u_max + 1]
                better = chunk_depth < window
                window[better] = chunk_depth[better]
                best_face[v_min : v_max + 1, u_min : u_max + 1][better] = ids[chunk_arg[better]]

    covered = torch.nonzero(best_face >= 0)
    depth_out = torch.zeros((height, width), dtype=dtype, device=device)
    if covered.numel():
        rows, cols = covered[:, 0], covered[:, 1]
        owner = faces[best_face[rows, cols]]
        tri = vertices_cam[owner]  # (P, 3, 3)
        uv = project(tri.reshape(-1, 3), cam).reshape(-1, 3, 2)
        bary, _ = _barycentric(uv, cols.to(dtype), rows.to(dtype))
        inv_depth = (bary.T / tri[..., 2]).sum(dim=1)
        depth_out = depth_out.index_put((rows, cols), 1.0 / inv_depth)
    return Rasterization(depth_out, best_face)


def render_depth(
    mesh: TriangleMesh,
    t: SimilarityTransform,
    cam: CameraIntrinsics,
    near: float = NEAR_PLANE,
    face_chunk: int = FACE_CHUNK,
) -> DepthImage:
    """Render the depth of ``mesh`` placed in the camera frame by ``t``.

    Uncovered pixels are 0; an empty image is a valid result.
    """
    vertices = t.apply_points(mesh.vertices.to(t.rotation.dtype))
    return DepthImage(rasterize(vertices, mesh.faces, cam, near, face_chunk).depth)


def lift_depth(d: DepthImage, cam: CameraIntrinsics) -> PointCloud:
    """Back-project every valid pixel; points are ordered row-major."""
    index = torch.nonzero(d.valid_mask)
    if index.numel() == 0:
        return PointCloud(torch.zeros((0, 3), dtype=d.values.dtype, device=d.values.device))
    rows, cols = index[:, 0], index[:, 1]
    z = d.values[rows, cols]
    x = (cols.to(z.dtype) - cam.cx) * z / cam.fx
    y = (rows.to(z.dtype) - cam.cy) * z / cam.fy
    return PointCloud(torch.stack([x, y, z], dim=-1))
