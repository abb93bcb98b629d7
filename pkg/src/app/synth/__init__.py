"""Synthetic categories, depth scenes and coarse multi-view point clouds."""

from .coarse import build_coarse_pointcloud, select_views
from .scenes import SceneSample, random_pose, sample_views, simulate_scene
from .shapes import cage_perturb, generate_category, normalize_mesh, template_mesh

__all__ = [
    "SceneSample",
    "build_coarse_pointcloud",
    "cage_perturb",
    "generate_category",
    "normalize_mesh",
    "random_pose",
    "sample_views",
    "select_views",
    "simulate_scene",
    "template_mesh",
]
