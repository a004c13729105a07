"""Command-line entry point: ``moundcount <command> ...``.

Exit codes: 0 success, 1 validation error (bad arguments or values),
2 data error (missing or malformed files).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .augmentation import augment_directory
from .config import PipelineConfig
from .detection import FileBackend, OracleBackend, OracleBackendConfig
from .errors import DataError, ValidationError
from .estimator import RidgeModel, fit_ridge_vectors, read_features_csv, write_features_csv
from .pipeline import (
    block_result,
    count_block,
    evaluate_runs,
    export_synthetic_fleet,
    read_manifest,
    run_block,
    run_manifest_entry,
    write_folds_csv,
)
from .simulator import FleetDistribution, generate_fleet
from .tables import check_all, check_significance, format_checks
from .tiling import OrthomosaicMeta, build_grid, read_sidecar
from .annotations import read_annotation_set

logger = logging.getLogger("moundcount")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON file with pipeline settings")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")


def _grid_args(p):
    p.add_argument("--patch-size", type=int, dest="patch_size_px", help="patch size in px (default 416)")
    p.add_argument("--edge-policy", choices=["partial", "pad", "drop"], help="border handling (default partial)")


def _model_args(p):
    p.add_argument("--lambda", type=float, dest="lam", help="ridge shrinkage (default 10)")
    p.add_argument("--intercept", action="store_true", default=None, help="fit an unpenalized intercept")
    p.add_argument("--standardize", action="store_true", default=None, help="z-score features before fitting")


def _oracle_args(p):
    p.add_argument("--miss-rate", type=float, default=0.1)
    p.add_argument("--fp-rate", type=float, default=0.0, help="false positives per patch (Poisson mean)")
    p.add_argument("--jitter", type=float, default=2.0, help="center jitter std in px")
    p.add_argument("--confidence-model", choices=["constant", "noisy"], default="constant")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="moundcount", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tile", help="list the patch grid of an orthomosaic")
    _common(p)
    _grid_args(p)
    p.add_argument("--sidecar", type=Path, help="orthomosaic metadata JSON")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)

    p = sub.add_parser("augment", help="write augmented copies of label files")
    _common(p, out_required=False)
    _grid_args(p)
    p.add_argument("--labels", type=Path, required=True, help="directory of ground-truth label files")
    p.add_argument("--sidecar", type=Path, action="append", required=True,
                   help="metadata of each block present in --labels (repeatable)")
    p.add_argument("--z-min", type=float)
    p.add_argument("--z-max", type=float)
    p.add_argument("--l-min", type=float)
    p.add_argument("--l-max", type=float)
    p.add_argument("--boxes-per-source", type=int, dest="boxes_per_source")

    p = sub.add_parser("simulate", help="generate a synthetic fleet of blocks")
    _common(p)
    _grid_args(p)
    p.add_argument("--n", type=int, default=18, help="number of blocks")
    p.add_argument("--conf-threshold", type=float, dest="confidence_threshold")
    _oracle_args(p)

    p = sub.add_parser("train-global", help="fit the count corrector on a features CSV")
    _common(p)
    _model_args(p)
    p.add_argument("--features", type=Path, required=True, help="CSV with a gt_count column")

    p = sub.add_parser("count", help="count one block: detect, aggregate, correct")
    _common(p)
    _grid_args(p)
    p.add_argument("--sidecar", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--detections", type=Path, help="directory of detection label files")
    src.add_argument("--oracle-labels", type=Path, help="ground-truth labels to degrade with the oracle backend")
    _oracle_args(p)
    p.add_argument("--ft", type=Path, help="fine-tuning annotation label files")
    p.add_argument("--ft-density", type=float, help="precomputed fine-tuning density (overrides --ft)")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--conf-threshold", type=float, dest="confidence_threshold")
    p.add_argument("--strict", action="store_true", help="fail on missing detection files")
    p.add_argument("--gt", type=float, help="known ground-truth count, for the report")

    p = sub.add_parser("evaluate", help="cross-validate over a manifest or check the result tables")
    _common(p)
    _grid_args(p)
    _model_args(p)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--protocol", choices=["kfold", "loocv", "table-check"], required=True)
    p.add_argument("--k", type=int, help="number of folds (kfold; default: one per block)")
    p.add_argument("--iou", type=float, dest="iou_threshold", help="IoU threshold for matching (default 0.5)")
    p.add_argument("--conf-threshold", type=float, dest="confidence_threshold")
    p.add_argument("--strict", action="store_true",
                   help="table-check: exit 2 when any cell differs from the printed value")
    return parser


def _config(args) -> PipelineConfig:
    over = {k: getattr(args, k, None) for k in (
        "patch_size_px", "edge_policy", "confidence_threshold", "lam", "intercept",
        "standardize", "iou_threshold", "seed", "boxes_per_source")}
    base = PipelineConfig.from_sources(args.config, **over)
    if getattr(args, "z_min", None) is not None or getattr(args, "z_max", None) is not None:
        z = (args.z_min if args.z_min is not None else base.z_range[0],
             args.z_max if args.z_max is not None else base.z_range[1])
        base = PipelineConfig(**{**base.to_dict(), "z_range": z})
    if getattr(args, "l_min", None) is not None or getattr(args, "l_max", None) is not None:
        l = (args.l_min if args.l_min is not None else base.l_range[0],
             args.l_max if args.l_max is not None else base.l_range[1])
        base = PipelineConfig(**{**base.to_dict(), "l_range": l})
    return base


def _prepare_out(out: Path, cfg: PipelineConfig, verbose: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.json")
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.addHandler(handler)


def _oracle_config(args) -> OracleBackendConfig:
    return OracleBackendConfig(
        miss_rate=args.miss_rate, false_positive_rate_per_patch=args.fp_rate,
        center_jitter_px=args.jitter, confidence_model=args.confidence_model, seed=args.seed or 0,
    )


def cmd_tile(args, cfg) -> int:
    if args.sidecar is not None:
        meta = read_sidecar(args.sidecar)
    elif args.width and args.height:
        meta = OrthomosaicMeta("mosaic", args.width, args.height, 1.0)
    else:
        raise ValidationError("give --sidecar or both --width and --height")
    grid = build_grid(meta, cfg.patch_size_px, cfg.edge_policy)
    with open(args.out / "patches.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block_id", "row", "col", "origin_x", "origin_y", "w", "h"])
        for p in grid:
            w.writerow([meta.id, p.row, p.col, p.origin_x, p.origin_y, p.w, p.h])
    print(f"{meta.id}: {grid.rows} rows x {grid.cols} cols = {grid.n_patches} patches of {cfg.patch_size_px} px")
    return EXIT_OK


def cmd_augment(args, cfg) -> int:
    grids = {}
    for sc in args.sidecar:
        meta = read_sidecar(sc)
        grids[meta.id] = build_grid(meta, cfg.patch_size_px, cfg.edge_policy)

    def grid_for(block_id):
        try:
            return grids[block_id]
        except KeyError:
            raise DataError(f"no --sidecar given for block {block_id!r}") from None

    written = augment_directory(args.labels, grid_for, cfg.augmentation(), args.out)
    print(f"wrote {len(written)} augmented label files to {args.out}")
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    if args.n < 2:
        raise ValidationError("--n must be >= 2")
    fleet = generate_fleet(args.n, FleetDistribution(patch_size_px=cfg.patch_size_px), seed=cfg.seed)
    manifest = export_synthetic_fleet(fleet, args.out, _oracle_config(args), cfg)
    total = sum(b.gt_count for b in fleet)
    print(f"simulated {len(fleet)} blocks ({total} planted mounds); manifest at {manifest}")
    return EXIT_OK


def cmd_train_global(args, cfg) -> int:
    vectors, targets = read_features_csv(args.features)
    missing = [v.block_id for v in vectors if v.block_id not in targets]
    if missing:
        raise DataError(f"{args.features}: no gt_count for {missing}")
    model = fit_ridge_vectors(vectors, [targets[v.block_id] for v in vectors],
                              lam=cfg.lam, intercept=cfg.intercept, standardize=cfg.standardize)
    model.save(args.out / "model.json")
    weights = ", ".join(f"{n}={w:.6g}" for n, w in zip(model.feature_names, model.weights))
    print(f"trained on {model.n_train} blocks: {weights}")
    return EXIT_OK


def cmd_count(args, cfg) -> int:
    model = RidgeModel.load(args.model)
    meta = read_sidecar(args.sidecar)
    grid = build_grid(meta, cfg.patch_size_px, cfg.edge_policy)
    if args.detections is not None:
        backend = FileBackend(args.detections, cfg.confidence_threshold, strict=args.strict)
    else:
        truth = read_annotation_set(args.oracle_labels, meta.id, grid)
        backend = OracleBackend(truth, _oracle_config(args), cfg.confidence_threshold)
    ft = read_annotation_set(args.ft, meta.id, grid) if args.ft is not None else None
    run = run_block(meta, backend, cfg, ft, args.ft_density)
    if not run.features.complete:
        raise DataError(f"{meta.id}: no fine-tuning annotations; pass --ft or --ft-density")
    pred = count_block(run, model)
    write_features_csv(args.out / "features.csv", [run.features])
    report = {
        "block_id": meta.id,
        "n_patches": grid.n_patches,
        "detection_count": run.summary.total,
        "features": dict(zip(model.feature_names, run.features.as_array().tolist())),
        "raw_prediction": pred.raw,
        "final_count": pred.final_count,
    }
    if args.gt is not None:
        res = block_result(run, cfg, pred.final_count)
        res.gt_count = args.gt
        report["gt_count"] = args.gt
        report["rp_detection"] = res.rp_detection
        report["rp_corrected"] = res.rp_corrected
    (args.out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    line = f"{meta.id}: {run.summary.total} detections -> final count {pred.final_count}"
    if args.gt is not None:
        line += f" (GT {args.gt:g}, RP {100 * report['rp_corrected']:.1f}%)"
    print(line)
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    if args.protocol == "table-check":
        checks = check_all()
        with open(args.out / "table_check.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["table", "row", "column", "printed", "computed", "tolerance", "ok", "note"])
            for c in checks:
                w.writerow([c.table, c.row, c.column, c.printed, format(c.computed, ".10g"),
                            c.tolerance, int(c.ok), c.note])
        two_sided = check_significance(alternative="two-sided")
        text = format_checks(checks) + "reference, two-sided alternative:\n" + format_checks(two_sided)
        (args.out / "table_check.txt").write_text(text)
        print(text, end="")
        n_bad = sum(not c.ok for c in checks)
        return EXIT_DATA if (args.strict and n_bad) else EXIT_OK

    if args.manifest is None:
        raise ValidationError(f"--manifest is required for protocol {args.protocol}")
    entries = read_manifest(args.manifest)
    runs = [run_manifest_entry(e, cfg) for e in entries]
    k = None if args.protocol == "loocv" else args.k
    cv, report = evaluate_runs(runs, cfg, k)
    if args.protocol == "loocv" and len(report.blocks) >= 2:
        try:
            report.with_significance("less")
        except ValidationError as exc:
            logger.warning("significance test skipped: %s", exc)
    report.write_csv(args.out / "report.csv")
    write_folds_csv(args.out / "folds.csv", cv, runs)
    (args.out / "summary.json").write_text(json.dumps(report.summary(), indent=2) + "\n")
    text = report.format_text() + f"{len(cv.folds)} folds, mean held-out RP {100 * cv.mean_score:.1f}%\n"
    (args.out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "tile": cmd_tile,
    "augment": cmd_augment,
    "simulate": cmd_simulate,
    "train-global": cmd_train_global,
    "count": cmd_count,
    "evaluate": cmd_evaluate,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s: %(message)s")
    for h in logging.getLogger().handlers:
        h.setLevel(logging.DEBUG if args.verbose else logging.WARNING)
    logger.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    handlers_before = list(logger.handlers)
    if args.command == "augment" and args.out is None:
        args.out = args.labels.with_name(args.labels.name + "_aug")
    try:
        cfg = _config(args)
        if args.out is not None:
            _prepare_out(args.out, cfg, args.verbose)
        logger.info("command %s", args.command)
        return COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        for h in logger.handlers[:]:
            if h not in handlers_before:
                logger.removeHandler(h)
                h.close()


if __name__ == "__main__":
    sys.exit(main())
