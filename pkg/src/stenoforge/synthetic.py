"""Analytic vessel constructors for fixtures, demos and property tests."""

from __future__ import annotations

import numpy as np

from .geometry import VesselGeometry, compute_frames


def vessel_from_profile(
    centerline: np.ndarray,
    diam_px: np.ndarray,
    spacing_mm_per_px: float = 0.1,
    image_size: tuple[int, int] = (512, 512),
) -> VesselGeometry:
    """Offset boundaries by half the diameter along the +/- normal of each sample."""
    centerline = np.asarray(centerline, dtype=np.float64)
    diam_px = np.broadcast_to(np.asarray(diam_px, dtype=np.float64), (len(centerline),))
    stub = VesselGeometry(centerline, centerline, centerline, spacing_mm_per_px, image_size)
    normals = compute_frames(stub).normals
    half = 0.5 * diam_px[:, None]
    return VesselGeometry(
        centerline, centerline + half * normals, centerline - half * normals, spacing_mm_per_px, image_size
    )


def notch_profile(
    n: int,
    ref_start: float,
    ref_end: float | None = None,
    depth: float = 0.0,
    center: float | None = None,
    width: float = 4.0,
) -> np.ndarray:
    """Linear taper with a Gaussian notch removing ``depth`` of the local reference."""
    ref_end = ref_start if ref_end is None else ref_end
    ref = np.linspace(ref_start, ref_end, n)
    center = (n - 1) / 2.0 if center is None else center
    j = np.arange(n)
    return ref * (1.0 - depth * np.exp(-0.5 * ((j - center) / width) ** 2))


def straight_vessel(
    n: int = 64,
    diam_px: float | np.ndarray = 30.0,
    spacing_mm_per_px: float = 0.1,
    start: tuple[float, float] = (64.0, 256.0),
    step_px: float = 6.0,
    image_size: tuple[int, int] = (512, 512),
) -> VesselGeometry:
    x = start[0] + step_px * np.arange(n)
    c = np.column_stack([x, np.full(n, start[1])])
    return vessel_from_profile(c, diam_px, spacing_mm_per_px, image_size)


def random_vessel(
    rng: np.random.Generator,
    n: int | None = None,
    image_size: tuple[int, int] = (512, 512),
    spacing_range: tuple[float, float] = (0.02, 0.2),
) -> VesselGeometry:
    """Smooth wavy vessel with a tapering lumen and one Gaussian notch.

    Curvature is kept low enough relative to the lumen that the contours stay
    simple for every draw.
    """
    n = int(rng.integers(80, 161)) if n is None else n
    w, h = image_size
    length = rng.uniform(0.55, 0.7) * w
    t = np.linspace(0.0, 1.0, n)
    amp = rng.uniform(0.0, 0.06) * h
    cycles = rng.uniform(0.3, 1.5)
    phase = rng.uniform(0, 2 * np.pi)
    x = (t - 0.5) * length
    y = amp * np.sin(2 * np.pi * cycles * t + phase)
    angle = rng.uniform(0, 2 * np.pi)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    c = np.column_stack([x, y]) @ rot.T + np.array([w / 2.0, h / 2.0])

    d0 = rng.uniform(12.0, 24.0)
    d1 = d0 * rng.uniform(0.7, 1.0)
    depth = rng.uniform(0.0, 0.6)
    center = rng.uniform(0.35, 0.65) * (n - 1)
    width = rng.uniform(2.0, 5.0)
    diam = notch_profile(n, d0, d1, depth, center, width)
    spacing = rng.uniform(*spacing_range)
    return vessel_from_profile(c, diam, spacing, image_size)
