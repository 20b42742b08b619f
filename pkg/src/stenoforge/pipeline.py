"""End-to-end synthetic dataset generation: plan, edit, rasterize, inpaint, export."""

from __future__ import annotations

import json
import logging
import os
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .augmentor import SynthJob, build_manifest, dump_jobs, make_plan, real_counts
from .conditioning import BundleError, BundleMetadata, ConditioningBundle, export_bundle, make_prompt
from .dataset import DatasetManifest, ImageRecord, ManifestError, load_manifest, write_labels
from .editor import EditError, EditSpec, apply_stenosis_edit, default_falloff
from .geometry import GeometryError, VesselGeometry
from .phantom import RenderParams, inpaint_roi, render_vessel
from .qca import QCAError, Severity, default_exclusion, diameter_profile, lesion_at_index
from .raster import (
    DEFAULT_MIN_BOX,
    DEFAULT_PAD_FRAC,
    RasterError,
    compose_masked_image,
    lesion_bbox,
    load_gray_png,
    rasterize_mask,
    save_gray_png,
    save_mask_png,
)

logger = logging.getLogger(__name__)

THREADS_ENV = "STENOFORGE_THREADS"
JOB_ERRORS = (EditError, QCAError, GeometryError, RasterError, BundleError, ManifestError, OSError)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    """Pipeline settings; every field has a documented default and maps 1:1 to the JSON config file."""

    image_size: tuple[int, int] = (512, 512)
    exclusion_halfwidth: int | None = None  # default max(5, n // 10)
    falloff_halfwidth: int | None = None  # default max(3, lesion half-width), capped at L
    pad_frac: float = DEFAULT_PAD_FRAC
    min_box: int = DEFAULT_MIN_BOX
    mode: str = "balanced"
    n_factor: int = 1
    seed: int = 0
    background: float = 200.0
    attenuation: float = 120.0
    noise_sigma: float = 2.0
    edit_tolerance_ds: float = 1e-6
    edit_max_iterations: int = 20
    out: str = "out"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        kw = dict(d)
        if "image_size" in kw:
            size = kw["image_size"]
            if not isinstance(size, (list, tuple)) or len(size) != 2:
                raise ConfigError("image_size: expected [width, height]")
            kw["image_size"] = (int(size[0]), int(size[1]))
        cfg = cls(**kw)
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.mode not in ("balanced", "imbalanced"):
            raise ConfigError(f"mode: expected balanced or imbalanced, got {self.mode!r}")
        if self.n_factor < 0:
            raise ConfigError("n_factor: must be non-negative")
        if min(self.image_size) <= 0:
            raise ConfigError("image_size: must be positive")

    @classmethod
    def load(cls, path: str | Path) -> PipelineConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    def render_params(self, seed: int) -> RenderParams:
        return RenderParams(self.background, self.attenuation, seed, self.noise_sigma)


def worker_count() -> int:
    """Default pool size: one worker per CPU (at most 8), capped by ``$STENOFORGE_THREADS``."""
    n = min(8, os.cpu_count() or 1)
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = min(n, max(1, int(raw)))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return n


@dataclass
class JobOutcome:
    job: SynthJob
    ok: bool
    achieved_ds: float | None = None
    error: str | None = None
    files: dict[str, Any] = field(default_factory=dict)


class _Sources:
    """Per-image cached geometry, lesions and original image."""

    def __init__(self, manifest: DatasetManifest, cfg: PipelineConfig) -> None:
        self.manifest = manifest
        self.cfg = cfg
        self._originals: dict[str, tuple[np.ndarray, bool]] = {}
        self._lock = threading.Lock()

    def geometry(self, img: ImageRecord) -> VesselGeometry:
        return img.geometry.replace(image_size=self.cfg.image_size)

    def original(self, img: ImageRecord, geom: VesselGeometry) -> tuple[np.ndarray, bool]:
        """Original angiogram and whether it came from the phantom."""
        with self._lock:
            if img.id not in self._originals:
                self._originals[img.id] = self._load_original(img, geom)
            return self._originals[img.id]

    def _load_original(self, img: ImageRecord, geom: VesselGeometry) -> tuple[np.ndarray, bool]:
        if img.image_path is not None:
            arr = load_gray_png(img.image_path)
            w, h = self.cfg.image_size
            if arr.shape != (h, w):
                raise ManifestError(f"{img.image_path}: size {arr.shape[::-1]} != configured {(w, h)}")
            return arr, False
        seed = zlib.crc32(f"{self.cfg.seed}:{img.id}".encode())
        return render_vessel(geom, self.cfg.render_params(seed)), True


def _run_job(job: SynthJob, src: _Sources, out: Path) -> JobOutcome:
    cfg = src.cfg
    img = src.manifest.image(job.source_image)
    geom = src.geometry(img)
    profile = diameter_profile(geom)
    L = cfg.exclusion_halfwidth if cfg.exclusion_halfwidth is not None else default_exclusion(geom.n)
    record = next(l for l in img.lesions if l.id == job.source_lesion)
    lesion = lesion_at_index(profile, record.mld_index, L)
    W = cfg.falloff_halfwidth if cfg.falloff_halfwidth is not None else default_falloff(lesion, L)

    spec = EditSpec(
        target_ds=job.target_ds,
        falloff_halfwidth_samples=W,
        tolerance_ds=cfg.edit_tolerance_ds,
        max_iterations=cfg.edit_max_iterations,
    )
    result = apply_stenosis_edit(geom, lesion, spec, L, profile)
    edited = result.geometry
    box = lesion_bbox(geom, lesion, W, cfg.pad_frac, cfg.min_box, cfg.image_size, also=edited)

    original, from_phantom = src.original(img, geom)
    # phantom originals share a known vessel-free plate; real images composite over themselves
    plate = cfg.background if from_phantom else None
    params = RenderParams(plate, cfg.attenuation, job.seed, cfg.noise_sigma)
    synth = inpaint_roi(original, edited, box, params)
    mask = rasterize_mask(edited, cfg.image_size)

    labels: list[tuple[Severity, Any]] = []
    for other in img.lesions:
        if other.id == job.source_lesion:
            labels.append((job.target_class, box))
        elif other.severity is not Severity.NONE:
            o = lesion_at_index(profile, other.mld_index, L)
            obox = lesion_bbox(geom, o, default_falloff(o, L), cfg.pad_frac, cfg.min_box, cfg.image_size)
            labels.append((other.severity, obox))

    mld_pt = 0.5 * (edited.left[lesion.mld_index] + edited.right[lesion.mld_index])
    meta = BundleMetadata(result.achieved_ds, job.target_class, (float(mld_pt[0]), float(mld_pt[1])), box)
    bundle = ConditioningBundle(
        image=original,
        seg_mask=mask,
        masked_image=compose_masked_image(original, box),
        prompt=make_prompt(meta),
        metadata=meta,
    )

    save_gray_png(synth, out / job.image_path)
    save_mask_png(mask, out / job.mask_path)
    write_labels(out / job.label_path, labels, cfg.image_size)
    entry = export_bundle(bundle, out / job.bundle_dir, root=out)
    return JobOutcome(job, True, result.achieved_ds, files=entry)


def _run_job_safe(job: SynthJob, src: _Sources, out: Path) -> JobOutcome:
    try:
        return _run_job(job, src, out)
    except JOB_ERRORS as exc:
        logger.error("job %s failed: %s", job.job_id, exc)
        return JobOutcome(job, False, error=f"{type(exc).__name__}: {exc}")


def run_pipeline(manifest_path: str | Path, cfg: PipelineConfig, threads: int | None = None) -> dict[str, Any]:
    """Execute the whole pipeline and return the summary written to ``summary.json``.

    Output is identical for any worker count: jobs carry their own seeds and
    results are gathered in job order.
    """
    cfg.check()
    manifest = load_manifest(manifest_path)
    real = real_counts(manifest)
    plan = make_plan(real, cfg.n_factor, cfg.mode)
    jobs = build_manifest(manifest, plan, cfg.seed) if plan.synthetic.total else []
    summary: dict[str, Any] = {
        "real": {"moderate": real.moderate, "severe": real.severe},
        "plan": {
            "mode": plan.mode,
            "n_factor": plan.n_factor,
            "synthetic": {"moderate": plan.synthetic.moderate, "severe": plan.synthetic.severe},
            "residual_imbalance": plan.residual_imbalance,
        },
        "produced": {"moderate": 0, "severe": 0},
        "failed": [],
    }
    if not jobs:
        logger.info("plan is empty; nothing to generate")
        return summary

    out = Path(cfg.out)
    for sub in ("images", "masks", "labels", "bundles"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "jobs.json").write_text(dump_jobs(jobs, plan, cfg.seed), encoding="utf-8")
    # the output location is left out so trees written to different places compare equal
    run_cfg = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    (out / "config.json").write_text(json.dumps(run_cfg, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    src = _Sources(manifest, cfg)
    threads = threads or worker_count()
    if threads == 1:
        outcomes = [_run_job_safe(j, src, out) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda j: _run_job_safe(j, src, out), jobs))

    results = []
    for o in outcomes:
        if o.ok:
            summary["produced"][o.job.target_class.value] += 1
            results.append({"job_id": o.job.job_id, "achieved_ds": o.achieved_ds, "bundle": o.files})
        else:
            summary["failed"].append({"job_id": o.job.job_id, "error": o.error})
    summary["results"] = results
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return summary
