"""Acceptance suite: one test per criterion, each recording a single PASS/FAIL line.

The lines are printed in an "acceptance criteria" section at the end of the
pytest run (and inline with ``-s``).
"""

from __future__ import annotations

import itertools
import time

import numpy as np
import pytest

from oracles import ap_oracle, f1_oracle
from stenoforge.augmentor import ClassCounts, plan_balanced
from stenoforge.cli import main
from stenoforge.editor import EditSpec, InfeasibleTarget, apply_stenosis_edit, default_falloff, target_mld
from stenoforge.evalkit import DetectionRecord, UndefinedAP, average_precision, evaluate, f1_scores, match_detections
from stenoforge.phantom import RenderParams, inpaint_roi, render_vessel
from stenoforge.qca import Severity, default_exclusion, diameter_profile, percent_ds, primary_lesion, reference_diameter
from stenoforge.raster import BBox, compose_masked_image, lesion_bbox, rasterize_mask
from stenoforge.synthetic import random_vessel

from conftest import write_dataset
from test_cli import tree_digest

TARGETS = (55, 60, 65, 70, 75, 80, 85, 90)


def _remeasure(geom, mld: int, L: int) -> tuple[float, float]:
    p = diameter_profile(geom)
    fit = reference_diameter(p, mld, L)
    dref = float(fit.at(p.arc_mm[mld]))
    return percent_ds(float(p.diam_mm[mld]), dref), dref


@pytest.fixture(scope="module")
def round_trip_cases():
    """Criterion 1 workload, shared with criterion 2."""
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    cases = []
    for _ in range(200):
        g = random_vessel(rng)
        profile = diameter_profile(g)
        L = default_exclusion(g.n)
        lesion = primary_lesion(profile, L)
        for target in TARGETS:
            spec = EditSpec(target)
            try:
                res = apply_stenosis_edit(g, lesion, spec, L, profile)
            except InfeasibleTarget:
                cases.append((lesion, target, L, None))
                continue
            cases.append((lesion, target, L, res))
    return cases, time.perf_counter() - t0


def test_criterion_1_ds_round_trip(round_trip_cases, verdict):
    cases, elapsed = round_trip_cases
    worst = 0.0
    bad = 0
    infeasible = 0
    for lesion, target, L, res in cases:
        if res is None:
            infeasible += 1
            # the documented error must only fire when the target lumen is below the floor
            if target_mld(lesion.dref_mm, target) >= EditSpec(target).min_lumen_mm:
                bad += 1
            continue
        ds, _ = _remeasure(res.geometry, lesion.mld_index, L)
        err = abs(ds - target)
        worst = max(worst, err)
        bad += err > 0.25
    ok = bad == 0 and elapsed < 10.0 and len(cases) == 1600
    verdict(
        1,
        "%DS round-trip",
        ok,
        f"{len(cases) - infeasible} feasible, {infeasible} infeasible, max |error| {worst:.2e}, "
        f"{bad} violations, {elapsed:.2f} s",
    )


def test_criterion_2_reference_invariance(round_trip_cases, verdict):
    cases, _ = round_trip_cases
    worst = 0.0
    n = 0
    for lesion, _, L, res in cases:
        if res is None:
            continue
        assert res.falloff_halfwidth_samples <= L
        _, dref = _remeasure(res.geometry, lesion.mld_index, L)
        worst = max(worst, abs(dref - lesion.dref_mm))
        n += 1
    verdict(2, "reference invariance", worst < 1e-9, f"{n} edits, max |dD_ref| {worst:.2e} mm")


def test_criterion_3_roi_locality(verdict):
    rng = np.random.default_rng(7)
    failures = 0
    for k in range(100):
        g = random_vessel(rng)
        original = render_vessel(g, RenderParams(200.0, 120.0, k, 2.0))
        profile = diameter_profile(g)
        L = default_exclusion(g.n)
        lesion = primary_lesion(profile, L)
        try:
            edited = apply_stenosis_edit(g, lesion, EditSpec(float(rng.uniform(50, 90))), L, profile).geometry
        except InfeasibleTarget:
            edited = g
        # random box, not necessarily around the lesion
        w, h = (int(v) for v in rng.integers(16, 160, size=2))
        cx = float(rng.uniform(w / 2, 512 - w / 2))
        cy = float(rng.uniform(h / 2, 512 - h / 2))
        box = BBox(cx, cy, float(w), float(h))
        outside = ~box.pixel_mask((512, 512))
        plate = None if k % 2 else 200.0
        out = inpaint_roi(original, edited, box, RenderParams(plate, 120.0, 1000 + k, 2.0))
        masked = compose_masked_image(original, box)
        failures += not np.array_equal(out[outside], original[outside])
        failures += not np.array_equal(masked[outside], original[outside])
    verdict(3, "ROI locality", failures == 0, f"100 triples, {failures} out-of-box differences")


def test_criterion_4_planner(verdict):
    real = ClassCounts(5350, 680)
    one = plan_balanced(real, 1).synthetic
    totals = {N: plan_balanced(real, N).synthetic.total for N in (1, 2, 4)}
    ok = (one.moderate, one.severe) == (680, 5350) and all(totals[N] == N * 6030 for N in totals)
    verdict(4, "planner", ok, f"N=1 -> ({one.moderate}, {one.severe}); totals {totals}")


GT_BOXES = [(40.0, 40.0, 20.0, 20.0), (120.0, 40.0, 20.0, 20.0), (40.0, 160.0, 20.0, 20.0)]
FAR = (400.0, 400.0, 20.0, 20.0)
DESCENDING = (0.9, 0.7, 0.5, 0.3, 0.1)  # last entry falls under tau = 0.25
TIED = (0.5, 0.5, 0.5, 0.5, 0.5)


def _options(n_gt: int) -> list[tuple[float, float, float, float]]:
    cx, cy, w, h = GT_BOXES[0]
    return [GT_BOXES[j] for j in range(n_gt)] + [(cx + 4.0, cy, w, h), (cx + 12.0, cy, w, h), FAR]


def _instances():
    """Every ordered prediction list of length <= 5 over the option set, for 0..3 ground truths.

    Distinct descending confidences cover every ranking; the all-tied pattern
    (input-order tie-break) is enumerated up to length 4.
    """
    for n_gt in range(4):
        opts = _options(n_gt)
        for k in range(6):
            patterns = (DESCENDING, TIED) if k <= 4 else (DESCENDING,)
            for combo in itertools.product(range(len(opts)), repeat=k):
                for confs in patterns:
                    yield n_gt, [(opts[i], confs[j]) for j, i in enumerate(combo)]


def test_criterion_5_metric_oracle_equivalence(verdict):
    t_start = time.perf_counter()
    impl_time = 0.0
    n = 0
    worst = 0.0
    mismatches = 0
    per_class = []
    for n_gt, preds in _instances():
        gts = [DetectionRecord("a", BBox(*GT_BOXES[j]), Severity.MODERATE) for j in range(n_gt)]
        recs = [DetectionRecord("a", BBox(*b), Severity.MODERATE, c) for b, c in preds]
        t0 = time.perf_counter()
        matches = match_detections(recs, gts)
        try:
            ap = average_precision(matches, Severity.MODERATE)
        except UndefinedAP:
            ap = None
        f1 = f1_scores(recs, gts)["moderate"]
        impl_time += time.perf_counter() - t0

        o_preds = [("a", b, c) for b, c in preds]
        o_gts = [("a", GT_BOXES[j]) for j in range(n_gt)]
        if n_gt:
            err = abs(ap - ap_oracle(o_preds, o_gts)) if ap is not None else 1.0
            worst = max(worst, err)
            mismatches += err > 1e-9
            if len(per_class) < 400:
                per_class.append((recs, gts, ap))
        else:
            mismatches += ap is not None
        err = abs(f1 - f1_oracle(o_preds, o_gts, 0.25))
        worst = max(worst, err)
        mismatches += err > 1e-9
        n += 1

    # mAP50: pair moderate instances with relabelled severe ones on another image
    for (rm, gm, apm), (rs, gs, aps) in zip(per_class, reversed(per_class)):
        sev = [DetectionRecord("b", r.box, Severity.SEVERE, r.confidence) for r in rs]
        sev_gt = [DetectionRecord("b", g.box, Severity.SEVERE) for g in gs]
        t0 = time.perf_counter()
        rep = evaluate(rm + sev, gm + sev_gt)
        impl_time += time.perf_counter() - t0
        err = abs(rep.map50 - (apm + aps) / 2)
        worst = max(worst, err)
        mismatches += err > 1e-9

    g1, g2 = GT_BOXES[0], GT_BOXES[1]
    hand = average_precision(
        match_detections(
            [
                DetectionRecord("a", BBox(*g1), Severity.MODERATE, 0.9),
                DetectionRecord("a", BBox(*FAR), Severity.MODERATE, 0.8),
                DetectionRecord("a", BBox(*g2), Severity.MODERATE, 0.7),
            ],
            [DetectionRecord("a", BBox(*g1), Severity.MODERATE), DetectionRecord("a", BBox(*g2), Severity.MODERATE)],
        ),
        Severity.MODERATE,
    )
    total = time.perf_counter() - t_start
    ok = mismatches == 0 and abs(hand - 5 / 6) <= 1e-12 and impl_time < 5.0
    verdict(
        5,
        "metric oracle equivalence",
        ok,
        f"{n} instances + {len(per_class)} mAP pairs, max |diff| {worst:.1e}, hand AP {hand:.6f}, "
        f"metrics {impl_time:.2f} s (with oracle {total:.2f} s)",
    )


def test_criterion_6_monotonicity(verdict):
    rng = np.random.default_rng(99)
    violations = 0
    checked = 0
    for k in range(50):
        g = random_vessel(rng, spacing_range=(0.1, 0.2))
        profile = diameter_profile(g)
        L = default_exclusion(g.n)
        lesion = primary_lesion(profile, L)
        W = default_falloff(lesion, L)
        box = lesion_bbox(g, lesion, W)
        inside = box.pixel_mask((512, 512))
        original = render_vessel(g, RenderParams(200.0, 120.0))
        areas, means = [], []
        for t in (55, 65, 75, 85):
            edited = apply_stenosis_edit(g, lesion, EditSpec(t, falloff_halfwidth_samples=W), L, profile).geometry
            areas.append(int(rasterize_mask(edited)[inside].sum()))
            means.append(float(inpaint_roi(original, edited, box, RenderParams(200.0, 120.0))[inside].mean()))
        violations += any(a < b for a, b in zip(areas, areas[1:]))
        violations += any(a > b for a, b in zip(means, means[1:]))
        checked += 1
    verdict(6, "monotonicity", violations == 0, f"{checked} vessels, {violations} violations")


def test_criterion_7_pipeline_determinism(tmp_path, verdict):
    manifest = write_dataset(tmp_path / "data")
    digests = []
    for run in ("a", "b"):
        code = main(["pipeline", str(manifest), "--size", "256", "--n-factor", "3", "--seed", "11", "--out", str(tmp_path / run)])
        assert code == 0
        digests.append(tree_digest(tmp_path / run))
    ok = digests[0] == digests[1] and len(digests[0]) > 0
    verdict(7, "pipeline determinism", ok, f"{len(digests[0])} files, identical={digests[0] == digests[1]}")


def test_criterion_8_not_reproducible_here(verdict):
    verdict(8, "detector scores", None, "needs real angiograms, generator and detector training; criteria 1-7 stand in")
    pytest.skip("detector F1/mAP50 figures need real angiograms and trained models")
