"""Oriented 3D boxes and their intersection-over-union."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from ..errors import InvalidGeometry
from ..geometry.types import SimilarityTransform, TriangleMesh

ORTHONORMAL_TOL = 1e-6
PARALLEL_TOL = 1e-9


@dataclass(frozen=True)
class OrientedBox:
    """Box with full side lengths ``extents`` along the columns of ``rotation``."""

    center: np.ndarray
    rotation: np.ndarray
    extents: np.ndarray

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        extents = np.asarray(self.extents, dtype=np.float64).reshape(3)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "extents", extents)
        if not (extents > 0).all():
            raise InvalidGeometry(f"box extents must be positive, got {extents.tolist()}")
        if np.abs(rotation @ rotation.T - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise InvalidGeometry("box rotation is not orthonormal")

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def corners(self) -> np.ndarray:
        """The 8 corners (8, 3)."""
        signs = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)])
        return self.center + (signs * self.extents / 2.0) @ self.rotation.T

    def halfspaces(self) -> np.ndarray:
        """Stacked ``[A; b]`` rows with ``A @ x + b <= 0`` inside the box (6, 4)."""
        rows = []
        for axis in range(3):
            normal = self.rotation[:, axis]
            half = self.extents[axis] / 2.0
            offset = float(normal @ self.center)
            rows.append(np.append(normal, -offset - half))
            rows.append(np.append(-normal, offset - half))
        return np.array(rows)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points (N, 3) inside the box."""
        local = (np.asarray(points) - self.center) @ self.rotation
        return (np.abs(local) <= self.extents / 2.0).all(axis=1)


def box_from_transform(t: SimilarityTransform, mesh: TriangleMesh) -> OrientedBox:
    """Tight box of a normalized mesh placed by ``t``."""
    v = mesh.vertices.detach().cpu().double().numpy()
    low, high = v.min(axis=0), v.max(axis=0)
    scale = float(t.scale.detach())
    rotation = t.rotation.detach().cpu().double().numpy()
    translation = t.translation.detach().cpu().double().numpy()
    center = scale * rotation @ ((low + high) / 2.0) + translation
    return OrientedBox(center, rotation, scale * (high - low))


def _parallel_overlap(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection volume of boxes that share axes (exact)."""
    offset = (b.center - a.center) @ a.rotation
    # b's extents expressed along a's axes
    b_extents = np.abs(a.rotation.T @ b.rotation) @ b.extents
    low = np.maximum(-a.extents / 2.0, offset - b_extents / 2.0)
    high = np.minimum(a.extents / 2.0, offset + b_extents / 2.0)
    return float(np.prod(np.clip(high - low, 0.0, None)))


def _share_axes(a: OrientedBox, b: OrientedBox) -> bool:
    relative = np.abs(a.rotation.T @ b.rotation)
    return bool(np.abs(relative - np.round(relative)).max() < PARALLEL_TOL)


def _interior_point(halfspaces: np.ndarray) -> np.ndarray | None:
    """Chebyshev center of the polytope, or None when it has no interior."""
    a, b = halfspaces[:, :3], halfspaces[:, 3]
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    result = linprog(
        c=np.array([0.0, 0.0, 0.0, -1.0]),
        A_ub=np.hstack([a, norms]),
        b_ub=-b,
        bounds=[(None, None)] * 3 + [(0, None)],
        method="highs",
    )
    if not result.success or result.x[3] <= 1e-9:
        return None
    return result.x[:3]


def _polytope_overlap(a: OrientedBox, b: OrientedBox) -> float:
    halfspaces = np.vstack([a.halfspaces(), b.halfspaces()])
    interior = _interior_point(halfspaces)
    if interior is None:
        return 0.0
    try:
        vertices = HalfspaceIntersection(halfspaces, interior).intersections
        return float(ConvexHull(vertices).volume)
    except QhullError:
        # flat intersection
        return 0.0


def iou3d(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection over union of two oriented boxes, in [0, 1]."""
    if _share_axes(a, b):
        inter = _parallel_overlap(a, b)
    else:
        inter = _polytope_overlap(a, b)
    union = a.volume + b.volume - inter
    return float(np.clip(inter / union, 0.0, 1.0))
