"""Geometric kernels shared by every stage of the pipeline."""

from .io import load_mesh, load_point_cloud, save_mesh, save_point_cloud
from .losses import chamfer_distance, chamfer_tensors, cosine_feature_distance
from .mesh_ops import (
    adjacent_face_pairs,
    face_normals,
    laplacian_loss,
    mesh_laplacian,
    normal_consistency_loss,
)
from .outliers import meanshift_outlier_filter
from .rotations import farthest_rotation_sample, quaternion_distance
from .sampling import (
    farthest_point_sample,
    sample_surface,
    sample_surface_barycentric,
    subsample_cloud,
)
from .transforms import apply_similarity, compose_similarity, invert_similarity
from .types import PointCloud, SimilarityTransform, TriangleMesh, UnitQuaternion

__all__ = [
    "PointCloud",
    "SimilarityTransform",
    "TriangleMesh",
    "UnitQuaternion",
    "adjacent_face_pairs",
    "apply_similarity",
    "chamfer_distance",
    "chamfer_tensors",
    "compose_similarity",
    "cosine_feature_distance",
    "face_normals",
    "farthest_point_sample",
    "farthest_rotation_sample",
    "invert_similarity",
    "laplacian_loss",
    "load_mesh",
    "load_point_cloud",
    "meanshift_outlier_filter",
    "mesh_laplacian",
    "normal_consistency_loss",
    "quaternion_distance",
    "sample_surface",
    "sample_surface_barycentric",
    "subsample_cloud",
    "save_mesh",
    "save_point_cloud",
]
