from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import raster_oracle
from stenoforge.editor import EditSpec, apply_stenosis_edit
from stenoforge.qca import Lesion, Severity, diameter_profile, lesion_at_index
from stenoforge.raster import (
    BBox,
    RasterError,
    compose_masked_image,
    lesion_bbox,
    load_gray_png,
    load_mask_png,
    rasterize_mask,
    rasterize_polygon,
    save_gray_png,
    save_mask_png,
)
from stenoforge.synthetic import random_vessel, straight_vessel


def _lesion(k: int) -> Lesion:
    return Lesion(k, 1.0, 2.0, 50.0, (k, k), Severity.MODERATE)


def test_axis_aligned_rectangle():
    poly = np.array([[10.0, 20.0], [20.0, 20.0], [20.0, 24.0], [10.0, 24.0]])
    mask = rasterize_polygon(poly, (64, 64))
    assert mask.sum() == 40
    assert mask[20:24, 10:20].all()
    np.testing.assert_array_equal(mask, raster_oracle(poly, (64, 64)))


def test_zero_width_contour_is_empty():
    c = np.column_stack([np.linspace(10, 50, 9), np.full(9, 30.0)])
    poly = np.concatenate([c, c[::-1]])
    assert rasterize_polygon(poly, (64, 64)).sum() == 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_random_polygons_match_oracle(seed):
    r = np.random.default_rng(seed)
    m = int(r.integers(3, 9))
    poly = r.uniform(0, 32, size=(m, 2))
    np.testing.assert_array_equal(rasterize_polygon(poly, (32, 32)), raster_oracle(poly, (32, 32)))


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_vessel_mask_matches_oracle_and_mirror(seed):
    g = random_vessel(np.random.default_rng(seed), n=40, image_size=(128, 128))
    mask = rasterize_mask(g)
    np.testing.assert_array_equal(mask, raster_oracle(g.polygon(), (128, 128)))
    # reflecting about a pixel-boundary line keeps the pixel count
    assert rasterize_mask(g.mirrored_y(64.0)).sum() == mask.sum()


def test_self_crossing_vessel_rejected():
    g = straight_vessel(n=12, diam_px=10.0)
    left = g.left.copy()
    left[5] = g.right[5] + [0.0, -4.0]
    with pytest.raises(RasterError):
        rasterize_mask(g.replace(left=left))


def test_pixel_slices_half_open():
    box = BBox.from_corners(10.0, 20.0, 18.0, 24.0)
    rows, cols = box.pixel_slices((64, 64))
    assert (rows.start, rows.stop, cols.start, cols.stop) == (20, 24, 10, 18)
    assert box.pixel_mask((64, 64)).sum() == 32
    assert BBox.from_list(box.to_list()) == box


def test_bbox_worked_example():
    # samples at x = 80, 85, ..., 120 around the MLD at (100, 50), lumen 12 px
    g = straight_vessel(n=41, diam_px=12.0, start=(0.0, 50.0), step_px=5.0)
    box = lesion_bbox(g, _lesion(20), W=4, pad_frac=0.2, min_box=16, size=(512, 512))
    assert (box.cx, box.cy, box.w, box.h) == (100.0, 50.0, 48.0, 16.0)


def test_bbox_zero_falloff_gives_min_square():
    g = straight_vessel(n=41, diam_px=6.0, start=(0.0, 50.0), step_px=5.0)
    box = lesion_bbox(g, _lesion(20), W=0, min_box=16)
    assert (box.w, box.h) == (16.0, 16.0)
    assert (box.cx, box.cy) == (100.0, 50.0)


def test_bbox_clamped_inside_image():
    g = straight_vessel(n=41, diam_px=12.0, start=(0.0, 4.0), step_px=5.0)
    box = lesion_bbox(g, _lesion(1), W=4, size=(512, 512))
    assert box.x0 >= 0 and box.y0 >= 0
    assert box.x1 <= 512 and box.y1 <= 512
    rows, cols = box.pixel_slices((512, 512))
    assert rows.stop - rows.start == box.h and cols.stop - cols.start == box.w


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_bbox_always_inside_and_integral(seed):
    r = np.random.default_rng(seed)
    g = random_vessel(r)
    k = int(r.integers(0, g.n))
    W = int(r.integers(0, 10))
    box = lesion_bbox(g, _lesion(k), W)
    assert 0 <= box.x0 and box.x1 <= 512 and 0 <= box.y0 and box.y1 <= 512
    assert box.w >= 16 and box.h >= 16
    assert float(box.w).is_integer() and float(box.h).is_integer()


def test_compose_touches_only_the_box(rng):
    img = rng.integers(1, 256, size=(128, 128), dtype=np.uint8)
    box = BBox(40.0, 70.0, 24.0, 16.0)
    out = compose_masked_image(img, box)
    inside = box.pixel_mask((128, 128))
    assert int((out != img).sum()) == 24 * 16
    assert np.array_equal(out[~inside], img[~inside])
    assert (out[inside] == 0).all()


def test_mask_area_in_box_nonincreasing_with_target(half_notch_vessel):
    g = half_notch_vessel
    lesion = lesion_at_index(diameter_profile(g), 32)
    W = 5
    edits = []
    areas = []
    for t in (10, 30, 50, 70, 90):
        edited = apply_stenosis_edit(g, lesion, EditSpec(t, falloff_halfwidth_samples=W)).geometry
        edits.append(edited)
    box = lesion_bbox(g, lesion, W, also=edits[0])
    inside = box.pixel_mask(g.image_size)
    for edited in edits:
        areas.append(int(rasterize_mask(edited)[inside].sum()))
    assert all(a >= b for a, b in zip(areas, areas[1:]))
    assert areas[0] > areas[-1]


def test_png_round_trips(tmp_path, rng):
    img = rng.integers(0, 256, size=(20, 30), dtype=np.uint8)
    save_gray_png(img, tmp_path / "a.png")
    np.testing.assert_array_equal(load_gray_png(tmp_path / "a.png"), img)
    mask = img > 128
    save_mask_png(mask, tmp_path / "m.png")
    np.testing.assert_array_equal(load_mask_png(tmp_path / "m.png"), mask)
    with pytest.raises(RasterError):
        load_mask_png(tmp_path / "a.png")
