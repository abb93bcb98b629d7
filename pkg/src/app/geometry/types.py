"""Geometric value types.

All types hold torch tensors so gradients can flow through them. Invariants are checked
on detached copies at construction; a violated invariant raises ``InvalidGeometry``.
"""

from dataclasses import dataclass

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from ..errors import InvalidGeometry, NonUnitQuaternion


def _as_tensor(value, dtype: torch.dtype | None = None) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value if dtype is None else value.to(dtype)
    return torch.as_tensor(np.asarray(value), dtype=dtype or torch.float64)


def _tolerance(t: torch.Tensor) -> float:
    return 1e-6 if t.dtype == torch.float64 else 1e-4


# =====================================================
# MESH / CLOUD
# =====================================================


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices (N_V, 3) in meters and triangles (N_E, 3) as vertex indices."""

    vertices: torch.Tensor
    faces: torch.Tensor

    def __post_init__(self) -> None:
        vertices = _as_tensor(self.vertices)
        faces = _as_tensor(self.faces, dtype=torch.long)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

        if vertices.dim() != 2 or vertices.shape[1] != 3:
            raise InvalidGeometry(f"vertices must be (N, 3), got {tuple(vertices.shape)}")
        if faces.dim() != 2 or faces.shape[1] != 3:
            raise InvalidGeometry(f"faces must be (F, 3), got {tuple(faces.shape)}")
        if vertices.shape[0] < 3:
            raise InvalidGeometry("a mesh needs at least 3 vertices")
        if faces.shape[0] < 1:
            raise InvalidGeometry("a mesh needs at least 1 face")
        if not torch.isfinite(vertices.detach()).all():
            raise InvalidGeometry("vertices contain non-finite values")
        if faces.min() < 0 or faces.max() >= vertices.shape[0]:
            raise InvalidGeometry("face index out of range")
        a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
        if ((a == b) | (b == c) | (a == c)).any():
            raise InvalidGeometry("face with repeated vertex index")

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_faces(self) -> int:
        return int(self.faces.shape[0])

    def with_vertices(self, vertices: torch.Tensor) -> "TriangleMesh":
        """Same connectivity, new positions."""
        return TriangleMesh(vertices, self.faces)

    def to(self, dtype: torch.dtype) -> "TriangleMesh":
        return TriangleMesh(self.vertices.to(dtype), self.faces)

    def diameter(self) -> float:
        """Length of the bounding-box diagonal."""
        v = self.vertices.detach()
        return float(torch.linalg.norm(v.max(dim=0).values - v.min(dim=0).values))


@dataclass(frozen=True)
class PointCloud:
    """Unordered points (N_P, 3) in meters. Empty clouds are representable."""

    points: torch.Tensor

    def __post_init__(self) -> None:
        points = _as_tensor(self.points)
        if points.numel() == 0:
            points = points.reshape(0, 3)
        object.__setattr__(self, "points", points)
        if points.dim() != 2 or points.shape[1] != 3:
            raise InvalidGeometry(f"points must be (N, 3), got {tuple(points.shape)}")
        if not torch.isfinite(points.detach()).all():
            raise InvalidGeometry("points contain non-finite values")

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def centroid(self) -> torch.Tensor:
        return self.points.mean(dim=0)

    def diameter(self) -> float:
        """Length of the bounding-box diagonal; 0 for fewer than two points."""
        if len(self) < 2:
            return 0.0
        p = self.points.detach()
        return float(torch.linalg.norm(p.max(dim=0).values - p.min(dim=0).values))

    def subset(self, index: torch.Tensor) -> "PointCloud":
        return PointCloud(self.points[index])

    def numpy(self) -> np.ndarray:
        return self.points.detach().cpu().numpy().astype(np.float64)


# =====================================================
# TRANSFORMS
# =====================================================


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * rotation @ x + translation."""

    scale: torch.Tensor
    rotation: torch.Tensor
    translation: torch.Tensor

    def __post_init__(self) -> None:
        rotation = _as_tensor(self.rotation)
        scale = _as_tensor(self.scale, dtype=rotation.dtype).reshape(())
        translation = _as_tensor(self.translation, dtype=rotation.dtype).reshape(3)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "translation", translation)

        if rotation.shape != (3, 3):
            raise InvalidGeometry(f"rotation must be 3x3, got {tuple(rotation.shape)}")
        r = rotation.detach()
        tol = _tolerance(r)
        if not float(scale.detach()) > 0:
            raise InvalidGeometry(f"scale must be positive, got {float(scale.detach())}")
        eye = torch.eye(3, dtype=r.dtype, device=r.device)
        if (r @ r.T - eye).abs().max() >= tol:
            raise InvalidGeometry("rotation is not orthonormal")
        if abs(float(torch.linalg.det(r)) - 1.0) > tol:
            raise InvalidGeometry("rotation determinant is not +1")
        if not torch.isfinite(translation.detach()).all():
            raise InvalidGeometry("translation contains non-finite values")

    @classmethod
    def identity(cls, dtype: torch.dtype = torch.float64) -> "SimilarityTransform":
        return cls(
            torch.ones((), dtype=dtype),
            torch.eye(3, dtype=dtype),
            torch.zeros(3, dtype=dtype),
        )

    @classmethod
    def from_numpy(cls, scale: float, rotation: np.ndarray, translation: np.ndarray):
        return cls(
            torch.tensor(float(scale), dtype=torch.float64),
            torch.as_tensor(np.asarray(rotation, dtype=np.float64)),
            torch.as_tensor(np.asarray(translation, dtype=np.float64)),
        )

    def apply_points(self, points: torch.Tensor) -> torch.Tensor:
        """Transform an (N, 3) tensor."""
        return self.scale * points @ self.rotation.T + self.translation

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """``self ∘ inner``: apply ``inner`` first."""
        return SimilarityTransform(
            self.scale * inner.scale,
            self.rotation @ inner.rotation,
            self.scale * self.rotation @ inner.translation + self.translation,
        )

    def detach(self) -> "SimilarityTransform":
        return SimilarityTransform(
            self.scale.detach(), self.rotation.detach(), self.translation.detach()
        )

    def to(self, dtype: torch.dtype) -> "SimilarityTransform":
        return SimilarityTransform(
            self.scale.to(dtype), self.rotation.to(dtype), self.translation.to(dtype)
        )

    def as_dict(self) -> dict:
        """JSON-serializable form used by pose files."""
        return {
            "scale": float(self.scale.detach()),
            "rotation": self.rotation.detach().cpu().double().tolist(),
            "translation": self.translation.detach().cpu().double().tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimilarityTransform":
        return cls.from_numpy(
            data["scale"], np.array(data["rotation"]), np.array(data["translation"])
        )


@dataclass(frozen=True)
class UnitQuaternion:
    """Rotation as (w, x, y, z) with unit norm."""

    components: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.components, dtype=np.float64).reshape(4)
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-6:
            raise NonUnitQuaternion(f"quaternion norm {norm:.12f} is not 1")
        # small drift is renormalized so the stored norm is within 1e-9 of 1
        object.__setattr__(self, "components", q / norm)

    @classmethod
    def from_matrix(cls, rotation) -> "UnitQuaternion":
        r = rotation.detach().cpu().numpy() if isinstance(rotation, torch.Tensor) else rotation
        x, y, z, w = Rotation.from_matrix(np.asarray(r, dtype=np.float64)).as_quat()
        q = np.array([w, x, y, z])
        return cls(q / np.linalg.norm(q))

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.components
        return Rotation.from_quat([x, y, z, w]).as_matrix()
