"""Conditioning bundles for an external mask- and inpainting-conditioned generator.

A bundle directory holds ``image.png`` (original), ``seg_mask.png`` (vessel
mask, 0/255), ``masked_image.png`` (original with the lesion box filled),
``prompt.txt`` and ``meta.json``. ``meta.json`` fields:

``ds_percent`` (number), ``severity`` ("moderate" | "severe"),
``mld_px`` ([x, y]), ``box`` ([cx, cy, w, h] pixels), ``image_size`` ([w, h]).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .qca import Severity
from .raster import BBox, load_gray_png, load_mask_png, save_gray_png, save_mask_png

BUNDLE_FILES = ("image.png", "seg_mask.png", "masked_image.png", "prompt.txt", "meta.json")


class BundleError(ValueError):
    pass


@dataclass(frozen=True)
class BundleMetadata:
    ds_percent: float
    severity: Severity
    mld_px: tuple[float, float]
    box: BBox

    def to_dict(self, size: tuple[int, int]) -> dict[str, Any]:
        return {
            "ds_percent": self.ds_percent,
            "severity": self.severity.value,
            "mld_px": [float(self.mld_px[0]), float(self.mld_px[1])],
            "box": self.box.to_list(),
            "image_size": list(size),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> BundleMetadata:
        x, y = d["mld_px"]
        return cls(float(d["ds_percent"]), Severity(d["severity"]), (float(x), float(y)), BBox.from_list(d["box"]))


@dataclass(frozen=True)
class ConditioningBundle:
    image: np.ndarray
    seg_mask: np.ndarray
    masked_image: np.ndarray
    prompt: str
    metadata: BundleMetadata

    @property
    def size(self) -> tuple[int, int]:
        h, w = self.image.shape
        return (w, h)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConditioningBundle):
            return NotImplemented
        return (
            np.array_equal(self.image, other.image)
            and np.array_equal(self.seg_mask, other.seg_mask)
            and np.array_equal(self.masked_image, other.masked_image)
            and self.prompt == other.prompt
            and self.metadata == other.metadata
        )


def make_prompt(metadata: BundleMetadata) -> str:
    if metadata.severity is Severity.NONE:
        raise BundleError("prompt needs a moderate or severe lesion")
    return (
        f"coronary angiogram, {metadata.severity.value} stenosis, "
        f"{metadata.ds_percent:.1f} percent diameter stenosis"
    )


def check_bundle(bundle: ConditioningBundle) -> None:
    shapes = {bundle.image.shape, bundle.seg_mask.shape, bundle.masked_image.shape}
    if len(shapes) != 1:
        raise BundleError(f"raster shapes differ: {sorted(shapes)}")
    outside = ~bundle.metadata.box.pixel_mask(bundle.size)
    diff = outside & (bundle.image != bundle.masked_image)
    if diff.any():
        r, c = np.argwhere(diff)[0]
        raise BundleError(f"masked_image differs from image outside the box at pixel ({c}, {r})")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def export_bundle(bundle: ConditioningBundle, dest: str | Path, root: str | Path | None = None) -> dict[str, Any]:
    """Write the five bundle files into ``dest`` and return a manifest entry.

    Paths in the entry are relative to ``root`` (default: ``dest`` itself).
    """
    check_bundle(bundle)
    dest = Path(dest)
    try:
        dest.mkdir(parents=True, exist_ok=True)
        save_gray_png(bundle.image, dest / "image.png")
        save_mask_png(bundle.seg_mask, dest / "seg_mask.png")
        save_gray_png(bundle.masked_image, dest / "masked_image.png")
        (dest / "prompt.txt").write_text(bundle.prompt + "\n", encoding="utf-8")
        meta = bundle.metadata.to_dict(bundle.size)
        (dest / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise BundleError(f"cannot write bundle to {dest}: {exc}") from exc
    base = Path(root) if root is not None else dest
    return {
        "files": {name: (dest / name).relative_to(base).as_posix() for name in BUNDLE_FILES},
        "sha256": {name: _sha256(dest / name) for name in BUNDLE_FILES},
    }


def load_bundle(src: str | Path) -> ConditioningBundle:
    src = Path(src)
    meta = json.loads((src / "meta.json").read_text(encoding="utf-8"))
    prompt = (src / "prompt.txt").read_text(encoding="utf-8")
    return ConditioningBundle(
        image=load_gray_png(src / "image.png"),
        seg_mask=load_mask_png(src / "seg_mask.png"),
        masked_image=load_gray_png(src / "masked_image.png"),
        prompt=prompt[:-1] if prompt.endswith("\n") else prompt,
        metadata=BundleMetadata.from_dict(meta),
    )
