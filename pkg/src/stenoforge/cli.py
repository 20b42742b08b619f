"""Command-line entry point.

Exit codes: 0 ok, 1 pipeline job failure(s), 2 input error, 3 infeasible
edit, 4 evaluation undefined (class without ground truth).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .augmentor import ClassCounts, PlanError, make_plan
from .editor import EditError, EditSpec, apply_stenosis_edit
from .evalkit import EvalError, UndefinedAP, evaluate, load_records
from .geometry import GeometryError, VesselGeometry, load_geometry, save_geometry, validate_geometry
from .dataset import ManifestError
from .pipeline import ConfigError, PipelineConfig, run_pipeline
from .qca import (
    QCAError,
    default_exclusion,
    detect_lesions,
    diameter_profile,
    lesion_at_index,
    primary_lesion,
)

EXIT_OK = 0
EXIT_JOBS_FAILED = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_EVAL_UNDEFINED = 4

logger = logging.getLogger("stenoforge")


def _load_valid(path: str) -> VesselGeometry:
    geom = load_geometry(path)
    report = validate_geometry(geom)
    if report.violations:
        raise GeometryError(report.summary())
    return geom


def cmd_analyze(args: argparse.Namespace) -> int:
    status = EXIT_OK
    records = []
    for path in args.geometry:
        try:
            geom = _load_valid(path)
            lesions = detect_lesions(diameter_profile(geom), args.exclusion, args.merge_gap)
        except (GeometryError, QCAError, OSError) as exc:
            print(f"{path}: error: {exc}", file=sys.stderr)
            status = EXIT_INPUT
            continue
        if not lesions:
            print(f"{path}: no lesions")
        for les in lesions:
            print(
                f"{path}: lesion mld_index={les.mld_index} MLD={les.mld_mm:.3f} mm "
                f"Dref={les.dref_mm:.3f} mm DS={les.ds_percent:.1f}% "
                f"class={les.severity.value} interval=[{les.interval[0]}, {les.interval[1]}]"
            )
        records.append(
            {
                "file": path,
                "lesions": [
                    {
                        "mld_index": l.mld_index,
                        "mld_mm": l.mld_mm,
                        "dref_mm": l.dref_mm,
                        "ds_percent": l.ds_percent,
                        "severity": l.severity.value,
                        "interval": list(l.interval),
                    }
                    for l in lesions
                ],
            }
        )
    if args.json:
        Path(args.json).write_text(json.dumps(records, indent=1) + "\n", encoding="utf-8")
    return status


def cmd_edit(args: argparse.Namespace) -> int:
    try:
        geom = _load_valid(args.geometry)
        profile = diameter_profile(geom)
        L = args.exclusion if args.exclusion is not None else default_exclusion(geom.n)
        if args.mld_index is None:
            lesion = primary_lesion(profile, L)
        else:
            lesion = lesion_at_index(profile, args.mld_index, L)
    except (GeometryError, QCAError, OSError) as exc:
        print(f"{args.geometry}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        spec = EditSpec(target_ds=args.target_ds, falloff_halfwidth_samples=args.falloff)
        result = apply_stenosis_edit(geom, lesion, spec, L, profile)
    except EditError as exc:
        print(f"{args.geometry}: infeasible edit: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    out = Path(args.out) if args.out else Path(args.geometry).with_suffix(".edited.json")
    save_geometry(result.geometry, out)
    report = {
        "input": args.geometry,
        "output": str(out),
        "mld_index": lesion.mld_index,
        "before_ds": lesion.ds_percent,
        "target_ds": args.target_ds,
        "achieved_ds": result.achieved_ds,
        "delta_mm": result.delta_mm,
        "falloff": result.falloff_halfwidth_samples,
        "iterations": result.iterations_used,
    }
    print(
        f"{out}: mld_index={lesion.mld_index} DS {lesion.ds_percent:.2f}% -> "
        f"{result.achieved_ds:.2f}% (target {args.target_ds:.2f}%)"
    )
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    try:
        plan = make_plan(ClassCounts(args.moderate, args.severe), args.n_factor, args.mode)
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(
        json.dumps(
            {
                "mode": plan.mode,
                "n_factor": plan.n_factor,
                "synthetic": {"moderate": plan.synthetic.moderate, "severe": plan.synthetic.severe},
                "residual_imbalance": plan.residual_imbalance,
            },
            indent=1,
        )
    )
    return EXIT_OK


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {
        "seed": args.seed,
        "n_factor": args.n_factor,
        "mode": args.mode,
        "falloff_halfwidth": args.falloff,
        "out": args.out,
    }
    if args.size is not None:
        overrides["image_size"] = (args.size, args.size)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.check()
    return cfg


def cmd_pipeline(args: argparse.Namespace) -> int:
    try:
        cfg = _pipeline_config(args)
        summary = run_pipeline(args.manifest, cfg, args.threads)
    except (ConfigError, ManifestError, GeometryError, QCAError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    prod = summary["produced"]
    plan = summary["plan"]["synthetic"]
    print(
        f"planned moderate={plan['moderate']} severe={plan['severe']}; "
        f"produced moderate={prod['moderate']} severe={prod['severe']}; "
        f"failed={len(summary['failed'])}"
    )
    return EXIT_JOBS_FAILED if summary["failed"] else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        preds = load_records(args.predictions, with_confidence=True)
        gts = load_records(args.ground_truth, with_confidence=False)
        report = evaluate(preds, gts, tau=args.tau, iou_thr=args.iou)
    except UndefinedAP as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL_UNDEFINED
    except (EvalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(report.table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_config(args: argparse.Namespace) -> int:
    text = json.dumps(PipelineConfig().to_dict(), indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stenoforge", description="Stenosis measurement, editing, synthesis and scoring.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="QCA lesion report for geometry files")
    p.add_argument("geometry", nargs="+")
    p.add_argument("--exclusion", type=int, default=None, help="reference exclusion half-width L")
    p.add_argument("--merge-gap", type=int, default=5)
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("edit", help="set a lesion to a target %%DS")
    p.add_argument("geometry")
    p.add_argument("--target-ds", type=float, required=True)
    p.add_argument("--falloff", type=int, default=None, help="falloff half-width W (samples)")
    p.add_argument("--exclusion", type=int, default=None, help="reference exclusion half-width L")
    p.add_argument("--mld-index", type=int, default=None, help="lesion MLD sample (default: global MLD)")
    p.add_argument("--out", help="edited geometry path (default: <input>.edited.json)")
    p.add_argument("--report", help="write the edit report as JSON")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("plan", help="synthetic counts for real class counts")
    p.add_argument("--moderate", type=int, required=True)
    p.add_argument("--severe", type=int, required=True)
    p.add_argument("--n-factor", type=int, default=1)
    p.add_argument("--mode", choices=("balanced", "imbalanced"), default="balanced")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("pipeline", help="generate a synthetic dataset from a dataset manifest")
    p.add_argument("manifest")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--size", type=int, default=None, help="square image size in pixels")
    p.add_argument("--n-factor", type=int, default=None)
    p.add_argument("--mode", choices=("balanced", "imbalanced"), default=None)
    p.add_argument("--falloff", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None, help="worker count (default: CPUs, capped by $STENOFORGE_THREADS)")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="F1 / mAP50 for predictions against ground truth")
    p.add_argument("predictions")
    p.add_argument("ground_truth")
    p.add_argument("--tau", type=float, default=0.25, help="F1 confidence threshold")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("config", help="print the default pipeline config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
