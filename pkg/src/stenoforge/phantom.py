"""Procedural angiogram phantom used as a deterministic stand-in inpainter.

A vessel darkens the background by ``A * sqrt(1 - (2s/D)^2)``, the chord
length of a cylindrical lumen of diameter ``D`` at normal offset ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import VesselGeometry, compute_frames, require_valid
from .raster import BBox, rasterize_mask


@dataclass(frozen=True)
class RenderParams:
    """Rendering settings.

    ``background`` is a constant intensity, a uint8 image, or ``None``; for
    :func:`inpaint_roi`, ``None`` means the original image's own pixels are
    the background plate.
    """

    background: float | np.ndarray | None = 200.0
    attenuation: float = 120.0
    noise_seed: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.attenuation < 0:
            raise ValueError("attenuation must be non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def _background_plate(background: float | np.ndarray, size: tuple[int, int]) -> np.ndarray:
    w, h = size
    if np.isscalar(background):
        return np.full((h, w), float(background))
    plate = np.asarray(background, dtype=np.float64)
    if plate.shape != (h, w):
        raise ValueError(f"background shape {plate.shape} does not match image size {(h, w)}")
    return plate


def _noise(params: RenderParams, shape: tuple[int, int]) -> np.ndarray | None:
    if params.noise_sigma == 0:
        return None
    # whole-frame draw so any sub-region sees the same values for a given seed
    rng = np.random.default_rng(params.noise_seed)
    return rng.standard_normal(shape) * params.noise_sigma


def _render(
    geom: VesselGeometry,
    plate: np.ndarray,
    params: RenderParams,
    region: np.ndarray | None = None,
) -> np.ndarray:
    h, w = plate.shape
    inside = rasterize_mask(geom, (w, h))
    if region is not None:
        inside &= region
    out = plate.copy()
    rows, cols = np.nonzero(inside)
    if rows.size:
        pts = np.column_stack([cols + 0.5, rows + 0.5])
        _, nearest = cKDTree(geom.centerline).query(pts)
        normals = compute_frames(geom).normals
        s = np.einsum("ij,ij->i", pts - geom.centerline[nearest], normals[nearest])
        diam = np.hypot(*(geom.left - geom.right).T)[nearest]
        chord = np.sqrt(np.maximum(0.0, 1.0 - (2.0 * s / diam) ** 2))
        vals = plate[rows, cols] - params.attenuation * chord
        noise = _noise(params, (h, w))
        if noise is not None:
            vals = vals + noise[rows, cols]
        out[rows, cols] = vals
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def render_vessel(geom: VesselGeometry, params: RenderParams) -> np.ndarray:
    require_valid(geom)
    if params.background is None:
        raise ValueError("render_vessel needs an explicit background")
    plate = _background_plate(params.background, geom.image_size)
    return _render(geom, plate, params)


def inpaint_roi(
    original: np.ndarray, edited_geom: VesselGeometry, box: BBox, params: RenderParams
) -> np.ndarray:
    """Re-render the pixels inside ``box`` from ``edited_geom``; everything else is copied."""
    original = np.asarray(original, dtype=np.uint8)
    h, w = original.shape
    region = box.pixel_mask((w, h))
    bg = original if params.background is None else params.background
    plate = _background_plate(bg, (w, h))
    rendered = _render(edited_geom, plate, params, region)
    out = original.copy()
    out[region] = rendered[region]
    return out
