"""Detection and severity scoring: IoU matching, per-class AP, mAP50 and F1."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .qca import Severity
from .raster import BBox

CLASSES = (Severity.MODERATE, Severity.SEVERE)
DEFAULT_IOU = 0.5
DEFAULT_TAU = 0.25


class EvalError(ValueError):
    pass


class UndefinedAP(EvalError):
    """AP requested for a class with no ground truth."""


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    box: BBox
    cls: Severity
    confidence: float = 1.0


@dataclass
class ClassMatches:
    """Predictions of one class in ranked order with their TP flags."""

    confidences: list[float] = field(default_factory=list)
    tp: list[bool] = field(default_factory=list)
    n_gt: int = 0


@dataclass
class MatchResult:
    per_class: dict[Severity, ClassMatches]
    iou_thr: float = DEFAULT_IOU

    def __getitem__(self, cls: Severity) -> ClassMatches:
        return self.per_class[cls]


def _corners(b: BBox) -> tuple[float, float, float, float, float]:
    hw, hh = b.w / 2.0, b.h / 2.0
    return (b.cx - hw, b.cy - hh, b.cx + hw, b.cy + hh, b.w * b.h)


def _iou_corners(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a[4] + b[4] - inter
    return inter / union if union > 0 else 0.0


def iou(a: BBox, b: BBox) -> float:
    return float(_iou_corners(_corners(a), _corners(b)))


def match_detections(
    preds: Iterable[DetectionRecord],
    gts: Iterable[DetectionRecord],
    iou_thr: float = DEFAULT_IOU,
) -> MatchResult:
    """Greedy class-aware matching, highest confidence first.

    Each prediction takes the unmatched same-class ground truth in its image
    with the highest IoU, provided it reaches ``iou_thr``.
    """
    preds = list(preds)
    gts = list(gts)
    out: dict[Severity, ClassMatches] = {}
    for cls in CLASSES:
        cls_gts = [g for g in gts if g.cls is cls]
        gt_corners = [_corners(g.box) for g in cls_gts]
        by_image: dict[str, list[int]] = {}
        for k, g in enumerate(cls_gts):
            by_image.setdefault(g.image_id, []).append(k)
        taken = [False] * len(cls_gts)
        # sorted() is stable, so equal confidences keep input order
        ranked = sorted((p for p in preds if p.cls is cls), key=lambda p: -p.confidence)
        cm = ClassMatches(n_gt=len(cls_gts))
        for p in ranked:
            best, best_iou = -1, iou_thr
            pc = _corners(p.box)
            for k in by_image.get(p.image_id, ()):
                if taken[k]:
                    continue
                v = _iou_corners(pc, gt_corners[k])
                if v >= best_iou and (best < 0 or v > best_iou):
                    best, best_iou = k, v
            if best >= 0:
                taken[best] = True
            cm.confidences.append(p.confidence)
            cm.tp.append(best >= 0)
        out[cls] = cm
    return MatchResult(out, iou_thr)


def average_precision(matches: MatchResult, cls: Severity) -> float:
    """All-point interpolated AP: area under the right-to-left precision envelope."""
    cm = matches[cls]
    if cm.n_gt == 0:
        raise UndefinedAP(f"no ground truth for class {cls.value}; AP is undefined")
    if not cm.tp:
        return 0.0
    # (recall, precision) after each ranked prediction
    points = []
    tp = 0
    for k, hit in enumerate(cm.tp, start=1):
        tp += hit
        points.append((tp / cm.n_gt, tp / k))
    # right-to-left envelope, then sum precision over each recall step
    ap = 0.0
    best = 0.0
    prev_r = None
    for r, p in reversed(points):
        if prev_r is not None and r != prev_r:
            ap += (prev_r - r) * best
        best = max(best, p)
        prev_r = r
    return float(ap + prev_r * best)


@dataclass(frozen=True)
class ClassCountsAt:
    tp: int
    fp: int
    fn: int


def f1_from_counts(c: ClassCountsAt) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    # equals 2PR/(P+R), and 0 when there are no true positives
    return 2.0 * c.tp / denom if denom and c.tp else 0.0


def counts_at(matches: MatchResult, cls: Severity, tau: float) -> ClassCountsAt:
    cm = matches[cls]
    kept = [t for c, t in zip(cm.confidences, cm.tp) if c >= tau]
    tp = sum(kept)
    return ClassCountsAt(tp, len(kept) - tp, cm.n_gt - tp)


def f1_scores(
    preds: Iterable[DetectionRecord],
    gts: Iterable[DetectionRecord],
    tau: float = DEFAULT_TAU,
    iou_thr: float = DEFAULT_IOU,
) -> dict[str, float]:
    """Per-class and macro F1 over predictions with confidence >= ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise EvalError("tau must lie in [0, 1]")
    kept = [p for p in preds if p.confidence >= tau]
    matches = match_detections(kept, gts, iou_thr)
    scores = {cls.value: f1_from_counts(counts_at(matches, cls, tau)) for cls in CLASSES}
    scores["macro"] = sum(scores[c.value] for c in CLASSES) / len(CLASSES)
    return scores


@dataclass(frozen=True)
class EvalReport:
    ap_moderate: float
    ap_severe: float
    map50: float
    f1_moderate: float
    f1_severe: float
    f1_macro: float
    counts: dict[str, dict[str, int]]
    tau: float = DEFAULT_TAU

    def to_dict(self) -> dict[str, Any]:
        return {
            "ap_moderate": self.ap_moderate,
            "ap_severe": self.ap_severe,
            "map50": self.map50,
            "f1_moderate": self.f1_moderate,
            "f1_severe": self.f1_severe,
            "f1_macro": self.f1_macro,
            "counts": self.counts,
            "tau": self.tau,
        }

    def table(self) -> str:
        head = f"{'F1':>7} {'mAP50':>7} {'(M':>7} {'S)':>7}"
        row = f"{self.f1_macro:7.3f} {self.map50:7.3f} {self.ap_moderate:7.3f} {self.ap_severe:7.3f}"
        return head + "\n" + row


def evaluate(
    preds: list[DetectionRecord],
    gts: list[DetectionRecord],
    tau: float = DEFAULT_TAU,
    iou_thr: float = DEFAULT_IOU,
) -> EvalReport:
    matches = match_detections(preds, gts, iou_thr)
    ap = {cls: average_precision(matches, cls) for cls in CLASSES}
    f1 = f1_scores(preds, gts, tau, iou_thr)
    thr_matches = match_detections([p for p in preds if p.confidence >= tau], gts, iou_thr)
    counts = {}
    for cls in CLASSES:
        c = counts_at(thr_matches, cls, tau)
        counts[cls.value] = {"tp": c.tp, "fp": c.fp, "fn": c.fn}
    return EvalReport(
        ap_moderate=ap[Severity.MODERATE],
        ap_severe=ap[Severity.SEVERE],
        map50=(ap[Severity.MODERATE] + ap[Severity.SEVERE]) / 2.0,
        f1_moderate=f1[Severity.MODERATE.value],
        f1_severe=f1[Severity.SEVERE.value],
        f1_macro=f1["macro"],
        counts=counts,
        tau=tau,
    )


# -- files ----------------------------------------------------------------


def _parse_class(value: Any, where: str) -> Severity:
    if value in (0, "0", "moderate", "Moderate", "M"):
        return Severity.MODERATE
    if value in (1, "1", "severe", "Severe", "S"):
        return Severity.SEVERE
    raise EvalError(f"{where}: unknown class {value!r}")


def load_records(path: str | Path, with_confidence: bool) -> list[DetectionRecord]:
    """Read ``{"image_id": [{"box": [cx, cy, w, h], "class": "moderate", "confidence": 0.9}, ...]}``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise EvalError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise EvalError(f"{path}: expected an object keyed by image id")
    out = []
    for image_id in sorted(doc):
        recs = doc[image_id]
        if not isinstance(recs, list):
            raise EvalError(f"{path}: {image_id}: expected an array of records")
        for k, r in enumerate(recs):
            where = f"{path}: {image_id}[{k}]"
            if not isinstance(r, dict) or "box" not in r or "class" not in r:
                raise EvalError(f"{where}: record needs 'box' and 'class'")
            box = r["box"]
            if not isinstance(box, list) or len(box) != 4:
                raise EvalError(f"{where}.box: expected [cx, cy, w, h]")
            conf = 1.0
            if with_confidence:
                if "confidence" not in r:
                    raise EvalError(f"{where}: prediction needs 'confidence'")
                conf = float(r["confidence"])
                if not np.isfinite(conf):
                    raise EvalError(f"{where}.confidence: must be finite")
            out.append(DetectionRecord(str(image_id), BBox.from_list(box), _parse_class(r["class"], where), conf))
    return out
