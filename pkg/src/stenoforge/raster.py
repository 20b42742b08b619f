"""Mask rasterization, lesion boxes and masked-image composition.

Masks are ``(height, width)`` boolean arrays and gray images ``(height, width)``
uint8 arrays, both row-major. Pixel ``(col, row)`` has its center at
``(col + 0.5, row + 0.5)``. Membership on shared edges follows the top-left
rule: a center lying exactly on a left or top edge is inside, on a right or
bottom edge outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import VesselGeometry, polygon_self_intersections
from .qca import Lesion

DEFAULT_SIZE = (512, 512)
DEFAULT_MIN_BOX = 16
DEFAULT_PAD_FRAC = 0.2


class RasterError(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel units, center/size form."""

    cx: float
    cy: float
    w: float
    h: float

    @property
    def x0(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def y0(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def x1(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y1(self) -> float:
        return self.cy + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> BBox:
        return cls((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)

    def pixel_slices(self, size: tuple[int, int] | None = None) -> tuple[slice, slice]:
        """Row and column slices of the pixels whose centers lie in ``[x0, x1) x [y0, y1)``."""
        c0 = math.ceil(self.x0 - 0.5)
        c1 = math.ceil(self.x1 - 0.5)
        r0 = math.ceil(self.y0 - 0.5)
        r1 = math.ceil(self.y1 - 0.5)
        if size is not None:
            w, h = size
            c0, c1 = min(max(c0, 0), w), min(max(c1, 0), w)
            r0, r1 = min(max(r0, 0), h), min(max(r1, 0), h)
        return slice(r0, max(r0, r1)), slice(c0, max(c0, c1))

    def pixel_mask(self, size: tuple[int, int]) -> np.ndarray:
        w, h = size
        out = np.zeros((h, w), dtype=bool)
        out[self.pixel_slices(size)] = True
        return out

    def to_list(self) -> list[float]:
        return [self.cx, self.cy, self.w, self.h]

    @classmethod
    def from_list(cls, values: list[float]) -> BBox:
        cx, cy, w, h = (float(v) for v in values)
        return cls(cx, cy, w, h)


def rasterize_polygon(poly: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Even-odd scanline fill of a closed polygon sampled at pixel centers."""
    w, h = size
    mask = np.zeros((h, w), dtype=bool)
    if len(poly) < 3:
        return mask
    p0 = poly
    p1 = np.roll(poly, -1, axis=0)
    y_lo = np.minimum(p0[:, 1], p1[:, 1])
    y_hi = np.maximum(p0[:, 1], p1[:, 1])
    sloped = y_hi > y_lo
    p0, p1, y_lo, y_hi = p0[sloped], p1[sloped], y_lo[sloped], y_hi[sloped]
    if not len(p0):
        return mask
    inv_slope = (p1[:, 0] - p0[:, 0]) / (p1[:, 1] - p0[:, 1])

    row_start = max(0, math.ceil(float(y_lo.min()) - 0.5))
    row_stop = min(h, math.ceil(float(y_hi.max()) - 0.5))
    for row in range(row_start, row_stop):
        y = row + 0.5
        # half-open in y: an edge owns its top endpoint, not its bottom one
        active = (y_lo <= y) & (y < y_hi)
        if not active.any():
            continue
        xs = np.sort(p0[active, 0] + (y - p0[active, 1]) * inv_slope[active])
        for xa, xb in zip(xs[0::2], xs[1::2]):
            c0 = max(0, math.ceil(xa - 0.5))
            c1 = min(w, math.ceil(xb - 0.5))
            if c1 > c0:
                mask[row, c0:c1] = True
    return mask


def rasterize_mask(geom: VesselGeometry, size: tuple[int, int] | None = None) -> np.ndarray:
    size = geom.image_size if size is None else size
    poly = geom.polygon()
    hits = polygon_self_intersections(poly, proper_only=True)
    if hits:
        raise RasterError(f"vessel polygon self-intersects at edges {hits[0]}")
    return rasterize_polygon(poly, size)


def lesion_bbox(
    geom: VesselGeometry,
    lesion: Lesion,
    W: int,
    pad_frac: float = DEFAULT_PAD_FRAC,
    min_box: int = DEFAULT_MIN_BOX,
    size: tuple[int, int] | None = None,
    also: VesselGeometry | None = None,
) -> BBox:
    """Box centered on the MLD point covering the boundary vertices within ``W`` samples.

    ``also`` adds a second geometry's window vertices to the hull (an edited
    copy, so both the old and the new contour are covered).

    The half-extent on each axis is the larger distance from the MLD point to
    the hull edge, grown by ``pad_frac``; sizes are rounded up to whole pixels,
    floored at ``min_box`` and the box is shifted (then shrunk if necessary)
    to stay inside the image.
    """
    size = geom.image_size if size is None else size
    img_w, img_h = size
    k = lesion.mld_index
    center = 0.5 * (geom.left[k] + geom.right[k])
    lo = max(0, k - W)
    hi = min(geom.n, k + W + 1)
    parts = [geom.left[lo:hi], geom.right[lo:hi]]
    if also is not None:
        parts += [also.left[lo:hi], also.right[lo:hi]]
    pts = np.concatenate(parts)
    hull_min = pts.min(axis=0)
    hull_max = pts.max(axis=0)
    half = np.maximum(center - hull_min, hull_max - center) * (1.0 + pad_frac)
    bw = max(float(min_box), float(math.ceil(2.0 * half[0] - 1e-9)))
    bh = max(float(min_box), float(math.ceil(2.0 * half[1] - 1e-9)))
    bw = min(bw, float(img_w))
    bh = min(bh, float(img_h))
    x0 = min(max(center[0] - bw / 2.0, 0.0), img_w - bw)
    y0 = min(max(center[1] - bh / 2.0, 0.0), img_h - bh)
    return BBox(x0 + bw / 2.0, y0 + bh / 2.0, bw, bh)


def compose_masked_image(img: np.ndarray, box: BBox, fill: int = 0) -> np.ndarray:
    out = np.array(img, dtype=np.uint8, copy=True)
    h, w = out.shape
    out[box.pixel_slices((w, h))] = fill
    return out


# -- PNG io ---------------------------------------------------------------


def save_gray_png(img: np.ndarray, path: str | Path) -> None:
    arr = np.ascontiguousarray(img, dtype=np.uint8)
    Image.fromarray(arr).save(Path(path), format="PNG")


def load_gray_png(path: str | Path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        if im.mode != "L":
            raise RasterError(f"{path}: expected 8-bit single-channel PNG, got mode {im.mode}")
        return np.array(im, dtype=np.uint8)


def save_mask_png(mask: np.ndarray, path: str | Path) -> None:
    save_gray_png(np.where(mask, 255, 0).astype(np.uint8), path)


def load_mask_png(path: str | Path) -> np.ndarray:
    arr = load_gray_png(path)
    if not np.isin(arr, (0, 255)).all():
        raise RasterError(f"{path}: mask values must be 0 or 255")
    return arr == 255
