"""Dataset manifest and detection-label sidecar formats.

A dataset manifest is a JSON document::

    {
      "images": [
        {
          "id": "case001",
          "geometry": "geoms/case001.json",
          "image": "images/case001.png",
          "lesions": [{"id": "case001-0", "mld_index": 40, "severity": "moderate"}]
        }
      ]
    }

Paths are relative to the manifest. ``image`` is optional (the phantom renders
one when absent). ``lesions`` is optional; when absent the lesions are
detected by QCA. A lesion's ``severity`` and ``ds_percent`` are optional and
measured at ``mld_index`` when missing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .geometry import VesselGeometry, load_geometry
from .qca import Severity, classify_severity, default_exclusion, diameter_profile, detect_lesions, percent_ds, reference_diameter
from .raster import BBox


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class LesionRecord:
    id: str
    mld_index: int
    severity: Severity
    ds_percent: float


@dataclass
class ImageRecord:
    id: str
    geometry_path: Path
    image_path: Path | None
    lesions: list[LesionRecord] = field(default_factory=list)
    _geometry: VesselGeometry | None = field(default=None, repr=False, compare=False)

    @property
    def geometry(self) -> VesselGeometry:
        if self._geometry is None:
            self._geometry = load_geometry(self.geometry_path)
        return self._geometry


@dataclass
class DatasetManifest:
    images: list[ImageRecord]
    root: Path

    def lesions(self) -> list[tuple[ImageRecord, LesionRecord]]:
        pairs = [(img, les) for img in self.images for les in img.lesions]
        return sorted(pairs, key=lambda p: (p[0].id, p[1].id))

    def image(self, image_id: str) -> ImageRecord:
        for img in self.images:
            if img.id == image_id:
                return img
        raise KeyError(image_id)


def _measure(geom: VesselGeometry, mld_index: int) -> tuple[float, Severity]:
    profile = diameter_profile(geom)
    fit = reference_diameter(profile, mld_index, default_exclusion(geom.n))
    ds = percent_ds(float(profile.diam_mm[mld_index]), float(fit.at(profile.arc_mm[mld_index])))
    return ds, classify_severity(ds)


def _parse_lesion(raw: Any, where: str, img: ImageRecord) -> LesionRecord:
    if not isinstance(raw, dict) or "id" not in raw or "mld_index" not in raw:
        raise ManifestError(f"{where}: lesion needs 'id' and 'mld_index'")
    unknown = set(raw) - {"id", "mld_index", "severity", "ds_percent"}
    if unknown:
        raise ManifestError(f"{where}: unknown field(s) {sorted(unknown)}")
    idx = raw["mld_index"]
    if not isinstance(idx, int) or isinstance(idx, bool):
        raise ManifestError(f"{where}.mld_index: must be an integer")
    if "severity" in raw and "ds_percent" in raw:
        try:
            sev = Severity(raw["severity"])
        except ValueError as exc:
            raise ManifestError(f"{where}.severity: {exc}") from exc
        ds = float(raw["ds_percent"])
    else:
        ds, sev = _measure(img.geometry, idx)
        if "severity" in raw:
            sev = Severity(raw["severity"])
        if "ds_percent" in raw:
            ds = float(raw["ds_percent"])
    return LesionRecord(str(raw["id"]), idx, sev, ds)


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise ManifestError(f"{path}: expected an object with an 'images' array")
    root = path.parent
    images: list[ImageRecord] = []
    seen: set[str] = set()
    for i, raw in enumerate(doc["images"]):
        where = f"images[{i}]"
        if not isinstance(raw, dict) or "id" not in raw or "geometry" not in raw:
            raise ManifestError(f"{where}: needs 'id' and 'geometry'")
        unknown = set(raw) - {"id", "geometry", "image", "lesions"}
        if unknown:
            raise ManifestError(f"{where}: unknown field(s) {sorted(unknown)}")
        img_id = str(raw["id"])
        if img_id in seen:
            raise ManifestError(f"{where}: duplicate image id {img_id!r}")
        seen.add(img_id)
        rec = ImageRecord(
            id=img_id,
            geometry_path=root / raw["geometry"],
            image_path=root / raw["image"] if raw.get("image") else None,
        )
        if "lesions" in raw:
            rec.lesions = [
                _parse_lesion(les, f"{where}.lesions[{j}]", rec) for j, les in enumerate(raw["lesions"])
            ]
        else:
            found = detect_lesions(diameter_profile(rec.geometry))
            rec.lesions = [
                LesionRecord(f"{img_id}-{j}", les.mld_index, les.severity, les.ds_percent)
                for j, les in enumerate(found)
            ]
        images.append(rec)
    return DatasetManifest(images, root)


def manifest_to_dict(manifest: DatasetManifest) -> dict[str, Any]:
    def rel(p: Path) -> str:
        return p.relative_to(manifest.root).as_posix()

    out = []
    for img in manifest.images:
        entry: dict[str, Any] = {"id": img.id, "geometry": rel(img.geometry_path)}
        if img.image_path is not None:
            entry["image"] = rel(img.image_path)
        entry["lesions"] = [
            {"id": l.id, "mld_index": l.mld_index, "severity": l.severity.value, "ds_percent": l.ds_percent}
            for l in img.lesions
        ]
        out.append(entry)
    return {"images": out}


# -- detection labels -----------------------------------------------------


def format_label_line(severity: Severity, box: BBox, size: tuple[int, int]) -> str:
    """``class cx cy w h`` with coordinates normalized to [0, 1]."""
    w, h = size
    vals = (box.cx / w, box.cy / h, box.w / w, box.h / h)
    return f"{severity.class_index} " + " ".join(f"{min(1.0, max(0.0, v)):.6f}" for v in vals)


def parse_label_line(line: str, size: tuple[int, int]) -> tuple[Severity, BBox]:
    parts = line.split()
    if len(parts) != 5:
        raise ManifestError(f"label line needs 5 fields: {line!r}")
    cls = int(parts[0])
    if cls not in (0, 1):
        raise ManifestError(f"label class must be 0 or 1: {line!r}")
    w, h = size
    cx, cy, bw, bh = (float(v) for v in parts[1:])
    sev = Severity.MODERATE if cls == 0 else Severity.SEVERE
    return sev, BBox(cx * w, cy * h, bw * w, bh * h)


def write_labels(path: str | Path, rows: list[tuple[Severity, BBox]], size: tuple[int, int]) -> None:
    text = "".join(format_label_line(sev, box, size) + "\n" for sev, box in rows)
    Path(path).write_text(text, encoding="utf-8")
