"""Planning of xN synthetic dataset expansion and the resulting job manifest."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .dataset import DatasetManifest
from .qca import Severity

MODERATE_RANGE = (50.0, 70.0)
SEVERE_RANGE = (70.0, 95.0)


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ClassCounts:
    moderate: int
    severe: int

    @property
    def total(self) -> int:
        return self.moderate + self.severe

    def __add__(self, other: ClassCounts) -> ClassCounts:
        return ClassCounts(self.moderate + other.moderate, self.severe + other.severe)


@dataclass(frozen=True)
class AugmentationPlan:
    n_factor: int
    synthetic: ClassCounts
    residual_imbalance: int
    mode: str = "balanced"


def _check(real: ClassCounts, N: int) -> None:
    if N < 0:
        raise PlanError("N must be non-negative")
    if real.moderate < 0 or real.severe < 0:
        raise PlanError("class counts must be non-negative")
    if real.total <= 0:
        raise PlanError("need at least one real lesion to plan")


def plan_balanced(real: ClassCounts, N: int) -> AugmentationPlan:
    """Synthetic counts that bring both classes to ``(N + 1) * total / 2``.

    The odd remainder goes to moderate. Real samples are never removed: if one
    class already exceeds its share, the whole ``N * total`` budget goes to
    the other class and the leftover gap is reported as residual imbalance.
    """
    _check(real, N)
    budget = N * real.total
    final = (N + 1) * real.total
    tgt_mod = (final + 1) // 2
    tgt_sev = final // 2
    syn_mod = tgt_mod - real.moderate
    syn_sev = tgt_sev - real.severe
    if syn_mod < 0:
        syn_mod, syn_sev = 0, budget
    elif syn_sev < 0:
        syn_mod, syn_sev = budget, 0
    out_mod = real.moderate + syn_mod
    out_sev = real.severe + syn_sev
    residual = abs(out_mod - out_sev) - (final % 2)
    return AugmentationPlan(N, ClassCounts(syn_mod, syn_sev), max(0, residual), "balanced")


def plan_imbalanced(real: ClassCounts, N: int) -> AugmentationPlan:
    _check(real, N)
    syn = ClassCounts(N * real.moderate, N * real.severe)
    return AugmentationPlan(N, syn, 0, "imbalanced")


def make_plan(real: ClassCounts, N: int, mode: str) -> AugmentationPlan:
    if mode == "balanced":
        return plan_balanced(real, N)
    if mode == "imbalanced":
        return plan_imbalanced(real, N)
    raise PlanError(f"unknown planner mode {mode!r}")


def real_counts(dataset: DatasetManifest) -> ClassCounts:
    sev = [les.severity for _, les in dataset.lesions()]
    return ClassCounts(sev.count(Severity.MODERATE), sev.count(Severity.SEVERE))


@dataclass(frozen=True)
class SynthJob:
    job_id: str
    index: int
    source_image: str
    source_lesion: str
    target_ds: float
    target_class: Severity
    seed: int

    @property
    def image_path(self) -> str:
        return f"images/{self.job_id}.png"

    @property
    def mask_path(self) -> str:
        return f"masks/{self.job_id}.png"

    @property
    def label_path(self) -> str:
        return f"labels/{self.job_id}.txt"

    @property
    def bundle_dir(self) -> str:
        return f"bundles/{self.job_id}"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["target_class"] = self.target_class.value
        d.update(
            image=self.image_path,
            mask=self.mask_path,
            label=self.label_path,
            bundle=self.bundle_dir,
        )
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SynthJob:
        return cls(
            job_id=d["job_id"],
            index=int(d["index"]),
            source_image=d["source_image"],
            source_lesion=d["source_lesion"],
            target_ds=float(d["target_ds"]),
            target_class=Severity(d["target_class"]),
            seed=int(d["seed"]),
        )


def job_for_index(
    sources: list[tuple[str, str]], order: np.ndarray, index: int, target_class: Severity, seed: int
) -> SynthJob:
    """Job ``index`` depends only on ``(seed, index)`` and the sorted source list."""
    image_id, lesion_id = sources[int(order[index % len(sources)])]
    lo, hi = MODERATE_RANGE if target_class is Severity.MODERATE else SEVERE_RANGE
    rng = np.random.default_rng([seed, index])
    target = float(rng.uniform(lo, hi))
    job_seed = int(np.random.SeedSequence([seed, index]).generate_state(1)[0])
    return SynthJob(f"job{index:06d}", index, image_id, lesion_id, target, target_class, job_seed)


def build_manifest(dataset: DatasetManifest, plan: AugmentationPlan, seed: int) -> list[SynthJob]:
    """Moderate jobs first, then severe; source lesions assigned round-robin over a seeded shuffle."""
    pairs = dataset.lesions()
    if not pairs:
        raise PlanError("dataset contains no lesions to edit")
    sources = [(img.id, les.id) for img, les in pairs]
    order = np.random.default_rng(seed).permutation(len(sources))
    classes = [Severity.MODERATE] * plan.synthetic.moderate + [Severity.SEVERE] * plan.synthetic.severe
    return [job_for_index(sources, order, k, cls, seed) for k, cls in enumerate(classes)]


def dump_jobs(jobs: list[SynthJob], plan: AugmentationPlan, seed: int) -> str:
    doc = {
        "seed": seed,
        "plan": {
            "mode": plan.mode,
            "n_factor": plan.n_factor,
            "synthetic": {"moderate": plan.synthetic.moderate, "severe": plan.synthetic.severe},
            "residual_imbalance": plan.residual_imbalance,
        },
        "jobs": [j.to_dict() for j in jobs],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def load_jobs(path: str | Path) -> list[SynthJob]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [SynthJob.from_dict(d) for d in doc["jobs"]]
