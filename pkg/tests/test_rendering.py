"""Tests for the z-buffer renderer, depth lifting and depth image I/O."""

import numpy as np
import pydantic
import pytest
import torch

from src.app.errors import InvalidGeometry, IoFailure
from src.app.geometry import SimilarityTransform
from src.app.rendering import (
    CameraIntrinsics,
    DepthImage,
    lift_depth,
    load_depth_npz,
    rasterize,
    read_depth_png,
    read_mask_png,
    render_depth,
    save_depth_npz,
    write_depth_png,
    write_mask_png,
)

CAM = CameraIntrinsics(fx=100.0, fy=100.0, cx=32.0, cy=32.0, width=64, height=64)

# wound so the normal points back at the camera (-z)
SQUARE_FACES = torch.tensor([[0, 2, 1], [0, 3, 2]])


def _square(z_of_x=lambda x: 2.0) -> torch.Tensor:
    corners = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
    return torch.tensor([[x, y, z_of_x(x)] for x, y in corners], dtype=torch.float64)


def _placed(scale: float, x: float, depth: float) -> SimilarityTransform:
    return SimilarityTransform.from_numpy(scale, np.eye(3), np.array([x, 0.0, depth]))


# =====================================================
# RASTERIZATION
# =====================================================


def test_fronto_parallel_square_depth():
    """A square at z = 2 renders depth 2 inside its footprint and 0 outside."""
    raster = rasterize(_square(), SQUARE_FACES, CAM)
    # corners project to pixel 7 and 57
    inner = raster.depth[9:56, 9:56]
    torch.testing.assert_close(inner, torch.full_like(inner, 2.0), atol=1e-4, rtol=0)
    assert float(raster.depth[:6].abs().max()) == 0.0
    assert float(raster.depth[:, 59:].abs().max()) == 0.0
    assert 47 * 47 <= raster.coverage <= 51 * 51


def test_tilted_square_depth_is_perspective_correct():
    """Plane z = 2 + x/2 seen along pixel ray a = (u - cx)/f has depth 2 / (1 - a/2)."""
    raster = rasterize(_square(lambda x: 2.0 + 0.5 * x), SQUARE_FACES, CAM)
    for u in (15, 30, 45):
        a = (u - CAM.cx) / CAM.fx
        expected = 2.0 / (1.0 - 0.5 * a)
        assert float(raster.depth[32, u]) == pytest.approx(expected, abs=1e-4)


def test_inverted_winding_is_culled():
    raster = rasterize(_square(), SQUARE_FACES.flip(1), CAM)
    assert raster.coverage == 0
    assert float(raster.depth.abs().max()) == 0.0


def test_faces_behind_near_plane_are_dropped():
    behind = _square(lambda x: -2.0)
    assert rasterize(behind, SQUARE_FACES, CAM).coverage == 0


def test_nearest_face_wins():
    near = _square(lambda x: 1.0)
    far = _square(lambda x: 3.0)
    vertices = torch.cat([far, near])
    faces = torch.cat([SQUARE_FACES, SQUARE_FACES + 4])
    raster = rasterize(vertices, faces, CAM)
    assert float(raster.depth[32, 40]) == pytest.approx(1.0, abs=1e-9)
    assert int(raster.face_index[32, 40]) in (2, 3)


def test_render_depth_empty_image_when_out_of_view(sphere):
    assert render_depth(sphere, _placed(0.2, 50.0, 2.0), CAM).coverage == 0


def test_depth_gradient_matches_finite_differences():
    """Interior pixels away from the shared diagonal are differentiable in the vertices."""
    vertices = _square(lambda x: 2.0 + 0.3 * x).requires_grad_(True)
    rows, cols = torch.tensor([20, 44]), torch.tensor([44, 20])

    def sampled_depth(v):
        return rasterize(v, SQUARE_FACES, CAM).depth[rows, cols]

    assert torch.autograd.gradcheck(sampled_depth, (vertices,), eps=1e-6, atol=1e-6)


def test_moving_a_plane_away_adds_the_offset_to_its_depth():
    """A fronto-parallel square pushed back by dz reads exactly dz deeper and covers less."""
    near = rasterize(_square(), SQUARE_FACES, CAM)
    far = rasterize(_square(lambda x: 2.5), SQUARE_FACES, CAM)
    near_mask = near.face_index >= 0
    far_mask = far.face_index >= 0
    assert 0 < far.coverage < near.coverage
    assert bool((far_mask & ~near_mask).sum() == 0)
    torch.testing.assert_close(
        far.depth[far_mask], near.depth[far_mask] + 0.5, atol=1e-9, rtol=0
    )


def test_chunk_splitting_keeps_the_same_image(sphere, monkeypatch):
    """Shrinking chunks to fit a tiny pixel budget changes nothing in the output."""
    big = CameraIntrinsics(fx=400.0, fy=400.0, cx=128.0, cy=128.0, width=256, height=256)
    placed = _placed(0.5, 0.0, 1.0)
    reference = render_depth(sphere, placed, big)
    monkeypatch.setattr("src.app.rendering.rasterizer.PIXEL_BUDGET", 500)
    split = render_depth(sphere, placed, big)
    assert reference.coverage > 0
    torch.testing.assert_close(split.values, reference.values)


# =====================================================
# LIFTING
# =====================================================


def test_render_then_lift_lands_on_the_surface(sphere):
    scale, depth = 0.3, 1.0
    image = render_depth(sphere, _placed(scale, 0.0, depth), CAM)
    cloud = lift_depth(image, CAM)
    assert len(cloud) == image.coverage > 0
    radius = (cloud.points - torch.tensor([0.0, 0.0, depth]).double()).norm(dim=1)
    assert float(radius.max()) <= 0.5 * scale + 1e-6
    assert float(radius.min()) >= 0.5 * scale * 0.97


def test_lift_empty_image():
    image = DepthImage(torch.zeros(8, 8, dtype=torch.float64))
    assert len(lift_depth(image, CAM)) == 0


def test_lift_is_row_major():
    values = torch.zeros(64, 64, dtype=torch.float64)
    values[10, 20] = 1.0
    values[5, 40] = 2.0
    cloud = lift_depth(DepthImage(values), CAM)
    assert cloud.points[:, 2].tolist() == [2.0, 1.0]
    x = (20 - CAM.cx) * 1.0 / CAM.fx
    assert float(cloud.points[1, 0]) == pytest.approx(x)


# =====================================================
# DEPTH IMAGES / IO
# =====================================================


def test_depth_image_validation():
    with pytest.raises(InvalidGeometry):
        DepthImage(torch.tensor([[-1.0]]))
    with pytest.raises(InvalidGeometry):
        DepthImage(torch.tensor([[float("nan")]]))
    with pytest.raises(InvalidGeometry):
        DepthImage(torch.zeros(3))


def test_camera_principal_point_must_be_inside():
    with pytest.raises(pydantic.ValidationError):
        CameraIntrinsics(fx=1.0, fy=1.0, cx=100.0, cy=0.0, width=64, height=64)


def test_depth_png_millimeter_round_trip(tmp_path):
    values = torch.tensor([[0.0, 0.5], [1.25, 70.0]], dtype=torch.float64)
    path = tmp_path / "depth" / "frame.png"
    write_depth_png(path, DepthImage(values))
    loaded = read_depth_png(path)
    assert loaded.values[0].tolist() == [0.0, 0.5]
    assert float(loaded.values[1, 0]) == 1.25
    # clipped to the uint16 range
    assert float(loaded.values[1, 1]) == pytest.approx(65.535)


def test_depth_npz_is_lossless(tmp_path):
    values = torch.rand(5, 7, dtype=torch.float64)
    save_depth_npz(tmp_path / "d.npz", DepthImage(values))
    assert torch.equal(load_depth_npz(tmp_path / "d.npz").values, values)


def test_mask_png_round_trip(tmp_path):
    mask = torch.zeros(6, 6, dtype=torch.bool)
    mask[1:4, 2:5] = True
    write_mask_png(tmp_path / "mask.png", mask)
    assert torch.equal(read_mask_png(tmp_path / "mask.png"), mask)


def test_missing_depth_files_raise_io_failure(tmp_path):
    with pytest.raises(IoFailure):
        read_depth_png(tmp_path / "missing.png")
    with pytest.raises(IoFailure):
        load_depth_npz(tmp_path / "missing.npz")
