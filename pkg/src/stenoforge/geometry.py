"""Vessel geometry: centerline samples with paired left/right contour vertices.

Every downstream measurement (diameter profile, edits, rasterization) works on
:class:`VesselGeometry`. Points are stored as ``(n, 2)`` float arrays in pixel
coordinates, ``x`` to the right and ``y`` down.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

MIN_SAMPLES = 8

GEOMETRY_FIELDS = ("spacing_mm_per_px", "image_size", "centerline", "left", "right")


class GeometryError(ValueError):
    """Raised for malformed or degenerate vessel geometry."""


@dataclass(frozen=True)
class VesselGeometry:
    centerline: np.ndarray
    left: np.ndarray
    right: np.ndarray
    spacing_mm_per_px: float
    image_size: tuple[int, int] = (512, 512)

    def __post_init__(self) -> None:
        for name in ("centerline", "left", "right"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise GeometryError(f"{name}: expected a sequence of [x, y] pairs")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "spacing_mm_per_px", float(self.spacing_mm_per_px))
        w, h = self.image_size
        object.__setattr__(self, "image_size", (int(w), int(h)))

    @property
    def n(self) -> int:
        return len(self.centerline)

    def polygon(self) -> np.ndarray:
        """Closed vessel outline: left boundary followed by the reversed right boundary."""
        return np.concatenate([self.left, self.right[::-1]], axis=0)

    def replace(self, **changes: Any) -> VesselGeometry:
        kwargs = {
            "centerline": self.centerline,
            "left": self.left,
            "right": self.right,
            "spacing_mm_per_px": self.spacing_mm_per_px,
            "image_size": self.image_size,
        }
        kwargs.update(changes)
        return VesselGeometry(**kwargs)

    def mirrored_y(self, axis_y: float = 0.0) -> VesselGeometry:
        """Reflection about the horizontal line ``y = axis_y``."""
        flip = np.array([1.0, -1.0])
        shift = np.array([0.0, 2.0 * axis_y])
        return self.replace(
            centerline=self.centerline * flip + shift,
            left=self.left * flip + shift,
            right=self.right * flip + shift,
        )

    def reversed(self) -> VesselGeometry:
        return self.replace(
            centerline=self.centerline[::-1], left=self.left[::-1], right=self.right[::-1]
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "spacing_mm_per_px": self.spacing_mm_per_px,
            "image_size": list(self.image_size),
            "centerline": self.centerline.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> VesselGeometry:
        if not isinstance(data, dict):
            raise GeometryError("geometry document must be a JSON object")
        unknown = sorted(set(data) - set(GEOMETRY_FIELDS))
        if unknown:
            raise GeometryError(f"unknown field(s): {', '.join(unknown)}")
        missing = [k for k in GEOMETRY_FIELDS if k not in data]
        if missing:
            raise GeometryError(f"missing field(s): {', '.join(missing)}")

        spacing = data["spacing_mm_per_px"]
        if isinstance(spacing, bool) or not isinstance(spacing, (int, float)):
            raise GeometryError("spacing_mm_per_px: must be a number")
        size = data["image_size"]
        if (
            not isinstance(size, list)
            or len(size) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in size)
        ):
            raise GeometryError("image_size: must be [width, height] positive integers")
        arrays = {k: _parse_points(k, data[k]) for k in ("centerline", "left", "right")}
        return cls(spacing_mm_per_px=spacing, image_size=(size[0], size[1]), **arrays)


def _parse_points(name: str, value: Any) -> np.ndarray:
    if not isinstance(value, list):
        raise GeometryError(f"{name}: must be an array of [x, y] pairs")
    for i, p in enumerate(value):
        if (
            not isinstance(p, list)
            or len(p) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in p)
        ):
            raise GeometryError(f"{name}[{i}]: must be an [x, y] number pair")
    arr = np.array(value, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name}: non-finite coordinate")
    return arr


def load_geometry(path: str | Path) -> VesselGeometry:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GeometryError(f"{path}: invalid JSON ({exc})") from exc
    return VesselGeometry.from_dict(data)


def save_geometry(geom: VesselGeometry, path: str | Path) -> None:
    Path(path).write_text(json.dumps(geom.to_dict(), indent=1) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class FrameField:
    tangents: np.ndarray
    normals: np.ndarray


def _rot90(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def compute_frames(geom: VesselGeometry) -> FrameField:
    """Unit tangents by central differences (one-sided at the ends) and normals rotated +90 degrees."""
    c = geom.centerline
    if len(c) < 2:
        raise GeometryError("centerline needs at least two samples")
    diff = np.empty_like(c)
    diff[1:-1] = c[2:] - c[:-2]
    diff[0] = c[1] - c[0]
    diff[-1] = c[-1] - c[-2]
    norms = np.hypot(diff[:, 0], diff[:, 1])
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise GeometryError(f"degenerate centerline difference at index {int(bad[0])}")
    tangents = diff / norms[:, None]
    return FrameField(tangents=tangents, normals=_rot90(tangents))


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def side_signs(geom: VesselGeometry, frames: FrameField | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sign of each boundary vertex relative to the centerline tangent (+1 on the normal side)."""
    frames = frames or compute_frames(geom)
    sl = np.sign(_cross(frames.tangents, geom.left - geom.centerline))
    sr = np.sign(_cross(frames.tangents, geom.right - geom.centerline))
    return sl, sr


# -- segment intersection -------------------------------------------------


def _orient(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
    return np.sign(_cross(q - p, r - p))


def _on_segment(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """r lies within the bounding box of segment pq (used only when collinear)."""
    return (
        (np.minimum(p[..., 0], q[..., 0]) <= r[..., 0])
        & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
        & (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1])
        & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1]))
    )


def segments_intersect(
    a0: np.ndarray, a1: np.ndarray, b0: np.ndarray, b1: np.ndarray, proper_only: bool = False
) -> np.ndarray:
    """Vectorized test of whether segments a0a1 and b0b1 share a point.

    With ``proper_only`` only transversal crossings count; touching and
    collinear overlap are ignored.
    """
    o1 = _orient(a0, a1, b0)
    o2 = _orient(a0, a1, b1)
    o3 = _orient(b0, b1, a0)
    o4 = _orient(b0, b1, a1)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)
    if proper_only:
        return proper
    touch = (
        ((o1 == 0) & _on_segment(a0, a1, b0))
        | ((o2 == 0) & _on_segment(a0, a1, b1))
        | ((o3 == 0) & _on_segment(b0, b1, a0))
        | ((o4 == 0) & _on_segment(b0, b1, a1))
    )
    return proper | touch


def polygon_self_intersections(
    poly: np.ndarray, edges: np.ndarray | None = None, proper_only: bool = False
) -> list[tuple[int, int]]:
    """Pairs of non-adjacent edges of a closed polygon that intersect.

    Edge ``k`` joins ``poly[k]`` and ``poly[(k + 1) % m]``. ``edges`` restricts
    the first member of each pair to the given edge indices.
    """
    m = len(poly)
    start = poly
    end = np.roll(poly, -1, axis=0)
    first = np.arange(m) if edges is None else np.unique(np.asarray(edges, dtype=int) % m)
    others = np.arange(m)
    a0 = start[first][:, None, :]
    a1 = end[first][:, None, :]
    hit = segments_intersect(a0, a1, start[None, :, :], end[None, :, :], proper_only)
    gap = np.abs(first[:, None] - others[None, :])
    adjacent = (gap <= 1) | (gap == m - 1)
    hit &= ~adjacent
    hits: set[tuple[int, int]] = set()
    for r, j in zip(*np.nonzero(hit)):
        k = int(first[r])
        hits.add((min(k, int(j)), max(k, int(j))))
    # Adjacent edges folding back onto each other also break simplicity.
    if not proper_only:
        for k in first:
            nxt = (k + 1) % m
            d0 = end[k] - start[k]
            d1 = end[nxt] - start[nxt]
            if _cross(d0, d1) == 0.0 and float(np.dot(d0, d1)) < 0.0:
                hits.add((min(int(k), int(nxt)), max(int(k), int(nxt))))
    return sorted(hits)


# -- validation ------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    invariant: str
    index: int | None
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return bool(self.violations)

    def indices(self, invariant: str) -> list[int]:
        return [v.index for v in self.violations if v.invariant == invariant and v.index is not None]

    def summary(self) -> str:
        return "; ".join(v.message for v in self.violations)


def validate_geometry(geom: VesselGeometry, check_simple: bool = True) -> ValidationReport:
    """Collect every violated invariant; an empty report means the geometry is usable."""
    out: list[Violation] = []
    n_c, n_l, n_r = len(geom.centerline), len(geom.left), len(geom.right)
    if not (n_c == n_l == n_r):
        out.append(
            Violation("length", None, f"length mismatch: centerline {n_c}, left {n_l}, right {n_r}")
        )
        return ValidationReport(out)
    if n_c < MIN_SAMPLES:
        out.append(Violation("length", None, f"need at least {MIN_SAMPLES} samples, got {n_c}"))
    if not (math.isfinite(geom.spacing_mm_per_px) and geom.spacing_mm_per_px > 0):
        out.append(Violation("spacing", None, "spacing_mm_per_px must be positive"))
    for name in ("centerline", "left", "right"):
        bad = np.flatnonzero(~np.all(np.isfinite(getattr(geom, name)), axis=1))
        for i in bad:
            out.append(Violation("finite", int(i), f"{name}[{int(i)}] is not finite"))
    if out:
        return ValidationReport(out)

    steps = np.diff(geom.centerline, axis=0)
    for i in np.flatnonzero(np.all(steps == 0.0, axis=1)):
        out.append(
            Violation("distinct", int(i) + 1, f"centerline[{int(i) + 1}] repeats the previous point")
        )
    if out:
        return ValidationReport(out)

    sl, sr = side_signs(geom)
    for i in np.flatnonzero((sl == 0) | (sr == 0) | (sl != -sr)):
        out.append(
            Violation(
                "sides",
                int(i),
                f"left[{int(i)}] and right[{int(i)}] are not on opposite sides of the centerline",
            )
        )

    if check_simple:
        n = n_c
        for a, b in polygon_self_intersections(geom.polygon()):
            out.append(
                Violation(
                    "simple",
                    _edge_sample(a, n),
                    f"contour polygon edges {a} and {b} intersect (near sample {_edge_sample(a, n)})",
                )
            )
    return ValidationReport(out)


def _edge_sample(edge: int, n: int) -> int:
    """Map a polygon edge index back to the nearest centerline sample."""
    if edge < n:
        return edge
    return max(0, 2 * n - 1 - edge)


def require_valid(geom: VesselGeometry) -> None:
    report = validate_geometry(geom)
    if report.violations:
        raise GeometryError(report.summary())
