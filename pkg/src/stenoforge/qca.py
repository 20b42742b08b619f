"""Quantitative coronary analysis on vessel geometry.

Diameter profile, minimum lumen diameter, interpolated reference diameter
and percentage diameter stenosis (%DS), plus lesion detection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .geometry import VesselGeometry

SIGNIFICANT_DS = 50.0
SEVERE_DS = 70.0
DEFAULT_MERGE_GAP = 5
MIN_FIT_SAMPLES = 4


class QCAError(ValueError):
    pass


class Severity(str, enum.Enum):
    NONE = "none"
    MODERATE = "moderate"
    SEVERE = "severe"

    @property
    def class_index(self) -> int:
        """Detection label index (0 = Moderate, 1 = Severe)."""
        if self is Severity.NONE:
            raise ValueError("no detection class for non-significant lesions")
        return 0 if self is Severity.MODERATE else 1


@dataclass(frozen=True)
class DiameterProfile:
    diam_mm: np.ndarray
    arc_mm: np.ndarray

    def __len__(self) -> int:
        return len(self.diam_mm)


@dataclass(frozen=True)
class ReferenceFit:
    slope: float
    intercept: float
    exclusion_halfwidth_samples: int
    center_index: int

    def at(self, arc_mm: np.ndarray | float) -> np.ndarray | float:
        return self.slope * arc_mm + self.intercept

    def evaluate(self, profile: DiameterProfile) -> np.ndarray:
        return self.slope * profile.arc_mm + self.intercept


@dataclass(frozen=True)
class Lesion:
    mld_index: int
    mld_mm: float
    dref_mm: float
    ds_percent: float
    interval: tuple[int, int]
    severity: Severity

    @property
    def halfwidth(self) -> int:
        start, end = self.interval
        return max(self.mld_index - start, end - self.mld_index)


def default_exclusion(n: int) -> int:
    return max(5, n // 10)


def diameter_profile(geom: VesselGeometry) -> DiameterProfile:
    diam_px = np.hypot(*(geom.left - geom.right).T)
    zero = np.flatnonzero(diam_px <= 0.0)
    if zero.size:
        raise QCAError(f"zero lumen diameter at index {int(zero[0])}")
    steps = np.hypot(*np.diff(geom.centerline, axis=0).T)
    arc_px = np.concatenate([[0.0], np.cumsum(steps)])
    s = geom.spacing_mm_per_px
    return DiameterProfile(diam_mm=diam_px * s, arc_mm=arc_px * s)


def find_mld(profile: DiameterProfile) -> int:
    # argmin returns the first occurrence, which is the tie-break we want
    return int(np.argmin(profile.diam_mm))


def reference_diameter(profile: DiameterProfile, mld_index: int, L: int) -> ReferenceFit:
    """Least-squares line of diameter against arc length, excluding ``mld_index +/- L``."""
    if L < 1:
        raise QCAError("exclusion half-width must be >= 1")
    idx = np.arange(len(profile))
    keep = np.abs(idx - mld_index) > L
    if keep.sum() < MIN_FIT_SAMPLES:
        raise QCAError(
            f"only {int(keep.sum())} samples outside exclusion window "
            f"[{mld_index - L}, {mld_index + L}]; need {MIN_FIT_SAMPLES}"
        )
    x = profile.arc_mm[keep]
    y = profile.diam_mm[keep]
    # centered normal equations; exact for data that lie on a line
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    slope = float(dx @ (y - ym)) / sxx if sxx > 0 else 0.0
    intercept = float(ym - slope * xm)
    fit = ReferenceFit(slope, intercept, int(L), int(mld_index))
    if fit.at(profile.arc_mm[mld_index]) <= 0:
        raise QCAError(f"non-positive reference diameter at index {mld_index}")
    return fit


def percent_ds(mld_mm: float, dref_mm: float) -> float:
    if dref_mm <= 0:
        raise QCAError("reference diameter must be positive")
    ds = (1.0 - mld_mm / dref_mm) * 100.0
    return float(min(100.0, max(0.0, ds)))


def classify_severity(ds: float) -> Severity:
    if ds < SIGNIFICANT_DS:
        return Severity.NONE
    if ds < SEVERE_DS:
        return Severity.MODERATE
    return Severity.SEVERE


def pointwise_ds(profile: DiameterProfile, fit: ReferenceFit) -> np.ndarray:
    """%DS at every sample against the reference line; 0 where the line is non-positive."""
    ref = fit.evaluate(profile)
    out = np.zeros(len(profile))
    ok = ref > 0
    out[ok] = np.clip((1.0 - profile.diam_mm[ok] / ref[ok]) * 100.0, 0.0, 100.0)
    return out


def _lesion_at(profile: DiameterProfile, fit: ReferenceFit, start: int, end: int) -> Lesion:
    mld = start + int(np.argmin(profile.diam_mm[start : end + 1]))
    mld_mm = float(profile.diam_mm[mld])
    dref = float(fit.at(profile.arc_mm[mld]))
    ds = percent_ds(mld_mm, dref)
    return Lesion(mld, mld_mm, dref, ds, (start, end), classify_severity(ds))


def detect_lesions(
    profile: DiameterProfile, L: int | None = None, merge_gap: int = DEFAULT_MERGE_GAP
) -> list[Lesion]:
    """Runs of samples with pointwise %DS >= 50 against one reference line.

    The line is fitted around the global MLD. Runs separated by fewer than
    ``merge_gap`` samples are merged.
    """
    L = default_exclusion(len(profile)) if L is None else L
    fit = reference_diameter(profile, find_mld(profile), L)
    flagged = pointwise_ds(profile, fit) >= SIGNIFICANT_DS

    runs: list[list[int]] = []
    i, n = 0, len(profile)
    while i < n:
        if flagged[i]:
            j = i
            while j + 1 < n and flagged[j + 1]:
                j += 1
            if runs and i - runs[-1][1] - 1 < merge_gap:
                runs[-1][1] = j
            else:
                runs.append([i, j])
            i = j + 1
        else:
            i += 1
    return [_lesion_at(profile, fit, s, e) for s, e in runs]


def lesion_at_index(profile: DiameterProfile, mld_index: int, L: int | None = None) -> Lesion:
    """Lesion record for an annotated MLD, with the reference fitted around it.

    The interval is the run around ``mld_index`` where pointwise %DS stays at
    or above half the value at the MLD.
    """
    L = default_exclusion(len(profile)) if L is None else L
    if not 0 <= mld_index < len(profile):
        raise QCAError(f"mld_index {mld_index} outside profile of length {len(profile)}")
    fit = reference_diameter(profile, mld_index, L)
    pds = pointwise_ds(profile, fit)
    level = pds[mld_index] / 2.0
    start = mld_index
    while start > 0 and pds[start - 1] >= level:
        start -= 1
    end = mld_index
    while end < len(profile) - 1 and pds[end + 1] >= level:
        end += 1
    mld_mm = float(profile.diam_mm[mld_index])
    dref = float(fit.at(profile.arc_mm[mld_index]))
    ds = percent_ds(mld_mm, dref)
    return Lesion(mld_index, mld_mm, dref, ds, (start, end), classify_severity(ds))


def primary_lesion(profile: DiameterProfile, L: int | None = None) -> Lesion:
    """The lesion at the global MLD, whether or not it is significant."""
    return lesion_at_index(profile, find_mld(profile), L)


def analyze(geom: VesselGeometry, L: int | None = None, merge_gap: int = DEFAULT_MERGE_GAP) -> list[Lesion]:
    return detect_lesions(diameter_profile(geom), L, merge_gap)
