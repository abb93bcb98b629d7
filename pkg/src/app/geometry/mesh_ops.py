"""Mesh operators and mesh regularizers."""

from functools import lru_cache
from itertools import combinations

import numpy as np
import torch

from ..errors import ConnectivityMismatch, DegenerateFace, IsolatedVertex
from .types import TriangleMesh

DEGENERATE_AREA = 1e-12


# =====================================================
# CONNECTIVITY
# =====================================================


def unique_edges(faces: torch.Tensor) -> torch.Tensor:
    """Undirected edges (E, 2) with the smaller index first."""
    f = faces.long()
    edges = torch.cat([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], dim=0)
    edges = torch.sort(edges, dim=1).values
    return torch.unique(edges, dim=0)


@lru_cache(maxsize=32)
def _adjacent_pairs_cached(face_bytes: bytes, num_faces: int) -> np.ndarray:
    faces = np.frombuffer(face_bytes, dtype=np.int64).reshape(num_faces, 3)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0)
    edges = np.sort(edges, axis=1)
    owners = np.tile(np.arange(num_faces), 3)
    _, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)

    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pairs: list[tuple[int, int]] = []
    for start, count in zip(starts, counts):
        if count < 2:
            continue
        group = owners[order[start : start + count]]
        pairs.extend(combinations(group.tolist(), 2))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.asarray(pairs, dtype=np.int64)


def adjacent_face_pairs(faces: torch.Tensor) -> torch.Tensor:
    """Unordered pairs of faces sharing an edge, each pair listed once.

    An edge with k incident faces contributes all k·(k-1)/2 pairs; boundary edges contribute none.
    """
    f = faces.detach().cpu().long().contiguous().numpy()
    pairs = _adjacent_pairs_cached(f.tobytes(), f.shape[0])
    return torch.as_tensor(pairs, device=faces.device)


# =====================================================
# LAPLACIAN
# =====================================================


def mesh_laplacian(m: TriangleMesh) -> torch.Tensor:
    """Uniform umbrella operator: v_i minus the mean of its 1-ring.

    Raises:
        IsolatedVertex: If some vertex belongs to no edge.
    """
    v = m.vertices
    edges = unique_edges(m.faces).to(v.device)
    src = torch.cat([edges[:, 0], edges[:, 1]])
    dst = torch.cat([edges[:, 1], edges[:, 0]])

    degree = torch.bincount(src, minlength=m.num_vertices)
    if (degree == 0).any():
        isolated = int(torch.nonzero(degree == 0)[0])
        raise IsolatedVertex(f"vertex {isolated} has no neighbors")

    neighbor_sum = torch.zeros_like(v).index_add(0, src, v[dst])
    return v - neighbor_sum / degree.to(v.dtype).unsqueeze(1)


def laplacian_loss(m: TriangleMesh, m_star: TriangleMesh) -> torch.Tensor:
    """Sum over vertices of ||Lpc(m) - Lpc(m*)||².

    Raises:
        ConnectivityMismatch: If the two meshes do not share triangles.
    """
    if m.faces.shape != m_star.faces.shape or not torch.equal(
        m.faces.to(m_star.faces.device), m_star.faces
    ):
        raise ConnectivityMismatch("laplacian loss needs identical triangles")
    delta = mesh_laplacian(m_star) - mesh_laplacian(m).to(m_star.vertices.dtype)
    return (delta * delta).sum()


# =====================================================
# NORMALS
# =====================================================


def _face_cross(vertices: torch.Tensor, faces: torch.Tensor) -> torch.Tensor:
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    return torch.linalg.cross(v1 - v0, v2 - v0)


def face_areas(m: TriangleMesh) -> torch.Tensor:
    return 0.5 * torch.linalg.norm(_face_cross(m.vertices, m.faces), dim=1)


def face_normals(m: TriangleMesh) -> torch.Tensor:
    """Unit normals following the stored (counterclockwise) winding.

    Raises:
        DegenerateFace: If any face has area below 1e-12 m².
    """
    cross = _face_cross(m.vertices, m.faces)
    norm = torch.linalg.norm(cross, dim=1)
    small = 0.5 * norm.detach() < DEGENERATE_AREA
    if small.any():
        raise DegenerateFace(f"face {int(torch.nonzero(small)[0])} has zero area")
    return cross / norm.unsqueeze(1)


def normal_consistency_loss(m: TriangleMesh, eps: float = 1e-12) -> torch.Tensor:
    """Sum over edge-adjacent face pairs of 1 - cos(n0, n1)."""
    pairs = adjacent_face_pairs(m.faces)
    if pairs.shape[0] == 0:
        return m.vertices.sum() * 0.0
    cross = _face_cross(m.vertices, m.faces)
    normals = cross / torch.linalg.norm(cross, dim=1, keepdim=True).clamp_min(eps)
    cos = (normals[pairs[:, 0]] * normals[pairs[:, 1]]).sum(dim=1)
    return (1.0 - cos).sum()
