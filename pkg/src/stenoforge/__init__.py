"""Geometry-level tooling for user-guided coronary stenosis synthesis.

Measure %DS on vessel contours, deform them to a requested %DS, rasterize
masks and lesion boxes, plan class-balanced synthetic datasets, render
phantom angiograms, export conditioning bundles and score detections.
"""

from .geometry import VesselGeometry, compute_frames, load_geometry, save_geometry, validate_geometry
from .qca import (
    Lesion,
    Severity,
    classify_severity,
    detect_lesions,
    diameter_profile,
    find_mld,
    percent_ds,
    reference_diameter,
)
from .editor import EditSpec, EditResult, apply_stenosis_edit, target_mld

__version__ = "0.1.0"

__all__ = [
    "EditResult",
    "EditSpec",
    "Lesion",
    "Severity",
    "VesselGeometry",
    "apply_stenosis_edit",
    "classify_severity",
    "compute_frames",
    "detect_lesions",
    "diameter_profile",
    "find_mld",
    "load_geometry",
    "percent_ds",
    "reference_diameter",
    "save_geometry",
    "target_mld",
    "validate_geometry",
]
