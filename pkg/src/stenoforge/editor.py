"""Contour deformation that sets a lesion to a requested %DS.

The two boundary vertices at the MLD move toward the centerline along the
local normal; neighbours within ``W`` samples follow with a raised-cosine
weight, and everything outside the window is left untouched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    VesselGeometry,
    compute_frames,
    polygon_self_intersections,
    side_signs,
)
from .qca import (
    DiameterProfile,
    Lesion,
    ReferenceFit,
    default_exclusion,
    diameter_profile,
    percent_ds,
    reference_diameter,
)

logger = logging.getLogger(__name__)


class EditError(ValueError):
    pass


class InfeasibleTarget(EditError):
    pass


class EditRejected(EditError):
    """The deformed contour would self-intersect or cross the centerline."""


class NonConvergence(EditError):
    pass


@dataclass(frozen=True)
class EditSpec:
    target_ds: float
    falloff_halfwidth_samples: int | None = None
    min_lumen_mm: float = 0.05
    max_iterations: int = 5
    tolerance_ds: float = 0.25

    def __post_init__(self) -> None:
        if not 0.0 <= self.target_ds <= 99.0:
            raise EditError(f"target_ds must be in [0, 99], got {self.target_ds}")
        if self.falloff_halfwidth_samples is not None and self.falloff_halfwidth_samples < 0:
            raise EditError("falloff half-width must be non-negative")


@dataclass(frozen=True)
class EditResult:
    geometry: VesselGeometry
    achieved_ds: float
    delta_mm: float
    iterations_used: int
    falloff_halfwidth_samples: int
    reference: ReferenceFit


def target_mld(dref_mm: float, target_ds: float) -> float:
    return dref_mm * (1.0 - target_ds / 100.0)


def falloff_weights(W: int) -> np.ndarray:
    """Raised-cosine weights for offsets ``-W..W``; 1 at the centre, 0 at +/-W."""
    if W == 0:
        return np.ones(1)
    j = np.arange(-W, W + 1)
    return 0.5 * (1.0 + np.cos(np.pi * j / W))


def default_falloff(lesion: Lesion, L: int) -> int:
    return min(max(3, lesion.halfwidth), L)


class _Deformer:
    """Evaluates the deformed boundaries for a trial diameter reduction."""

    def __init__(self, geom: VesselGeometry, center: int, W: int) -> None:
        frames = compute_frames(geom)
        sl, sr = side_signs(geom, frames)
        n = geom.n
        j = np.arange(-W, W + 1)
        inside = (center + j >= 0) & (center + j < n)
        self.idx = center + j[inside]
        self.weights = falloff_weights(W)[inside]
        nrm = frames.normals[self.idx]
        # unit displacement pointing from each boundary toward the centerline
        self.dir_left = -sl[self.idx, None] * nrm
        self.dir_right = -sr[self.idx, None] * nrm
        self.geom = geom
        self.center_pos = int(np.flatnonzero(self.idx == center)[0])
        self.px_per_mm = 1.0 / geom.spacing_mm_per_px

    def boundaries(self, delta_mm: float) -> tuple[np.ndarray, np.ndarray]:
        shift = (0.5 * delta_mm * self.px_per_mm) * self.weights[:, None]
        left = self.geom.left.copy()
        right = self.geom.right.copy()
        left[self.idx] = left[self.idx] + shift * self.dir_left
        right[self.idx] = right[self.idx] + shift * self.dir_right
        return left, right

    def center_diameter_mm(self, delta_mm: float) -> float:
        k = self.center_pos
        shift = 0.5 * delta_mm * self.px_per_mm * self.weights[k]
        i = self.idx[k]
        lp = self.geom.left[i] + shift * self.dir_left[k]
        rp = self.geom.right[i] + shift * self.dir_right[k]
        return float(math.hypot(*(lp - rp))) * self.geom.spacing_mm_per_px


def apply_stenosis_edit(
    geom: VesselGeometry,
    lesion: Lesion,
    spec: EditSpec,
    L: int | None = None,
    profile: DiameterProfile | None = None,
) -> EditResult:
    """Narrow (or widen) the lesion at ``lesion.mld_index`` to ``spec.target_ds``.

    The reference line is fitted around the MLD with exclusion half-width ``L``
    and the falloff window must not exceed it, so the fit is unaffected by the
    edit. Raises :class:`InfeasibleTarget`, :class:`EditRejected` or
    :class:`NonConvergence`; the input geometry is never modified.
    """
    profile = profile if profile is not None else diameter_profile(geom)
    L = default_exclusion(geom.n) if L is None else L
    mld = lesion.mld_index
    W = spec.falloff_halfwidth_samples
    W = default_falloff(lesion, L) if W is None else W
    if W > L:
        raise EditError(f"falloff half-width {W} exceeds reference exclusion half-width {L}")

    fit = reference_diameter(profile, mld, L)
    dref = float(fit.at(profile.arc_mm[mld]))
    goal = target_mld(dref, spec.target_ds)
    if goal < spec.min_lumen_mm:
        raise InfeasibleTarget(
            f"target {spec.target_ds:.2f} %DS needs MLD {goal:.4f} mm, "
            f"below the {spec.min_lumen_mm} mm floor"
        )

    deformer = _Deformer(geom, mld, W)

    def achieved(delta: float) -> float:
        return percent_ds(deformer.center_diameter_mm(delta), dref)

    def residual(delta: float) -> float:
        return deformer.center_diameter_mm(delta) - goal

    d0 = float(profile.diam_mm[mld]) - goal
    r0 = residual(d0)
    iterations = 0
    delta = d0
    if abs(achieved(delta) - spec.target_ds) > spec.tolerance_ds:
        # secant seeded with the unedited state and the one-shot normal step
        prev_d, prev_r = 0.0, residual(0.0)
        delta, r = d0, r0
        converged = False
        while iterations < spec.max_iterations:
            denom = r - prev_r
            if denom == 0.0:
                break
            nxt = delta - r * (delta - prev_d) / denom
            prev_d, prev_r = delta, r
            delta = nxt
            r = residual(delta)
            iterations += 1
            if abs(achieved(delta) - spec.target_ds) <= spec.tolerance_ds:
                converged = True
                break
        if not converged:
            raise NonConvergence(
                f"could not reach {spec.target_ds} %DS within {spec.max_iterations} secant steps"
            )

    left, right = deformer.boundaries(delta)
    edited = geom.replace(left=left, right=right)
    _check_edit(edited, deformer.idx)
    logger.debug("edit mld=%d W=%d delta=%.6f mm iterations=%d", mld, W, delta, iterations)
    return EditResult(
        geometry=edited,
        achieved_ds=achieved(delta),
        delta_mm=delta,
        iterations_used=iterations,
        falloff_halfwidth_samples=W,
        reference=fit,
    )


def _check_edit(edited: VesselGeometry, touched: np.ndarray) -> None:
    """Side and simplicity checks restricted to the edges the edit could have changed."""
    sl, sr = side_signs(edited)
    bad = touched[(sl[touched] == 0) | (sr[touched] == 0) | (sl[touched] != -sr[touched])]
    if bad.size:
        raise EditRejected(f"boundaries collapse through the centerline at index {int(bad[0])}")
    n = edited.n
    # polygon edge k joins vertex k and k+1; vertices 0..n-1 are left, n..2n-1 reversed right
    verts = np.concatenate([touched, 2 * n - 1 - touched])
    edges = np.unique(np.concatenate([verts, verts - 1]) % (2 * n))
    hits = polygon_self_intersections(edited.polygon(), edges=edges)
    if hits:
        raise EditRejected(f"edited contour self-intersects at polygon edges {hits[0]}")
