"""Parametric synthetic categories and cage-based template perturbation.

Every generated mesh is watertight, centered on its bounding box, scaled to unit
bounding-box diagonal, and oriented with its symmetry axis along +y.
"""

import math

import numpy as np
import torch
import trimesh
from scipy.interpolate import RegularGridInterpolator

from ..config.experiment import CategorySpec
from ..errors import InvalidSpec
from ..geometry.io import from_trimesh
from ..geometry.types import TriangleMesh

# trimesh builds solids of revolution about +z; canonical objects stand on +y
Z_TO_Y = trimesh.transformations.rotation_matrix(-math.pi / 2.0, [1.0, 0.0, 0.0])

CAGE_NODES = 3
MAX_WALL_FRACTION = 0.9


def _cup(aspect: float, taper: float, wall: float, sections: int) -> trimesh.Trimesh:
    """Hollow tapered cup with a handle stub on +x."""
    r_top = 0.5
    r_bottom = r_top * taper
    height = 2.0 * r_top * aspect
    thickness = wall * r_bottom
    profile = np.array(
        [
            [0.0, 0.0],
            [r_bottom, 0.0],
            [r_top, height],
            [r_top - thickness, height],
            [r_bottom - thickness, thickness],
            [0.0, thickness],
        ]
    )
    body = trimesh.creation.revolve(profile, sections=sections)
    body.fix_normals()

    r_mid = 0.5 * (r_top + r_bottom)
    handle = trimesh.creation.box(extents=(0.3 * r_top, 0.15 * r_top, 0.35 * height))
    handle.apply_translation((r_mid + 0.1 * r_top, 0.0, 0.5 * height))
    return trimesh.util.concatenate([body, handle])


def _cylinder(aspect: float, sections: int) -> trimesh.Trimesh:
    return trimesh.creation.cylinder(radius=0.5, height=aspect, sections=sections)


def _box(aspect: float, taper: float) -> trimesh.Trimesh:
    return trimesh.creation.box(extents=(aspect, taper, 1.0))


def _composite(aspect: float, taper: float, sections: int) -> trimesh.Trimesh:
    """Box base with a cylindrical lid."""
    base_height = 0.6 * aspect
    lid_height = 0.4 * aspect
    base = trimesh.creation.box(extents=(1.0, taper, base_height))
    lid = trimesh.creation.cylinder(radius=0.35 * taper, height=lid_height, sections=sections)
    lid.apply_translation((0.0, 0.0, 0.5 * (base_height + lid_height)))
    return trimesh.util.concatenate([base, lid])


def normalize_mesh(tm: trimesh.Trimesh) -> trimesh.Trimesh:
    """Center on the bounding box and scale to unit bounding-box diagonal."""
    low, high = tm.bounds
    tm = tm.copy()
    tm.apply_translation(-(low + high) / 2.0)
    tm.apply_scale(1.0 / float(np.linalg.norm(high - low)))
    return tm


def build_shape(
    spec: CategorySpec, aspect: float, taper: float, wall: float
) -> TriangleMesh:
    """One normalized instance of ``spec.family`` with the given parameters."""
    if spec.family == "tapered-cup":
        tm = _cup(aspect, taper, wall, spec.sections)
    elif spec.family == "cylinder":
        tm = _cylinder(aspect, spec.sections)
    elif spec.family == "box":
        tm = _box(aspect, taper)
    else:
        tm = _composite(aspect, taper, spec.sections)

    if spec.family != "box":
        tm.apply_transform(Z_TO_Y)
    tm = normalize_mesh(tm)
    vertices, faces = trimesh.remesh.subdivide_to_size(tm.vertices, tm.faces, spec.max_edge)
    tm = trimesh.Trimesh(vertices, faces, process=True)
    # subdivision keeps the bounds, but rescale so the diagonal is exactly 1
    tm = normalize_mesh(tm)
    return from_trimesh(tm)


def _check_spec(spec: CategorySpec) -> None:
    if spec.family in ("tapered-cup", "composite") and spec.wall_range[1] >= MAX_WALL_FRACTION:
        raise InvalidSpec(
            f"wall_range upper bound {spec.wall_range[1]} leaves no cavity "
            f"(must be < {MAX_WALL_FRACTION})"
        )
    if spec.taper_range[1] > 1.0 and spec.family == "tapered-cup":
        raise InvalidSpec("tapered cups must be wider at the rim (taper <= 1)")


def generate_category(spec: CategorySpec) -> list[TriangleMesh]:
    """``spec.instance_count`` normalized instances; deterministic per ``spec.seed``.

    Raises:
        InvalidSpec: If the parameter ranges cannot produce valid shapes.
    """
    _check_spec(spec)
    rng = np.random.default_rng(spec.seed)
    meshes = []
    for _ in range(spec.instance_count):
        aspect = rng.uniform(*spec.aspect_range)
        taper = rng.uniform(*spec.taper_range)
        wall = rng.uniform(*spec.wall_range)
        meshes.append(build_shape(spec, aspect, taper, wall))
    return meshes


def template_mesh(spec: CategorySpec) -> TriangleMesh:
    """The category template: every parameter at the middle of its range."""
    _check_spec(spec)
    return build_shape(
        spec,
        float(np.mean(spec.aspect_range)),
        float(np.mean(spec.taper_range)),
        float(np.mean(spec.wall_range)),
    )


# =====================================================
# CAGE PERTURBATION
# =====================================================


def cage_perturb(m: TriangleMesh, magnitude: float, seed: int) -> TriangleMesh:
    """Deform ``m`` through a 3x3x3 lattice cage around its bounding box.

    Each cage node moves by independent uniform noise in [-magnitude, magnitude] per axis;
    vertices follow by trilinear interpolation within their cage cell. Connectivity is
    unchanged.

    Raises:
        InvalidSpec: If ``magnitude`` is negative.
    """
    if magnitude < 0:
        raise InvalidSpec(f"cage magnitude must be nonnegative, got {magnitude}")
    if magnitude == 0:
        return m

    vertices = m.vertices.detach().cpu().double().numpy()
    low, high = vertices.min(axis=0), vertices.max(axis=0)
    pad = 1e-6 * max(float(np.linalg.norm(high - low)), 1.0)
    axes = [np.linspace(low[i] - pad, high[i] + pad, CAGE_NODES) for i in range(3)]

    rng = np.random.default_rng(seed)
    displacement = rng.uniform(-magnitude, magnitude, size=(CAGE_NODES,) * 3 + (3,))
    offsets = RegularGridInterpolator(axes, displacement, method="linear")(vertices)
    moved = torch.as_tensor(vertices + offsets, dtype=m.vertices.dtype)
    return m.with_vertices(moved)
