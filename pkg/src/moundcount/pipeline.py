"""Staged workflow: detect, aggregate, extract features, correct the count.

Stages talk through files so real detector output can be dropped in at the
detection boundary.  A dataset manifest is a CSV with one row per block::

    block_id,sidecar,labels_dir,detections_dir,ft_dir,gt_count

Paths are relative to the manifest; every column except ``block_id`` and
``sidecar`` may be empty.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .annotations import AnnotationSet, read_annotation_set, to_mosaic_frame, write_annotation_set, write_detections
from .config import PipelineConfig
from .detection import (
    CountSummary,
    DetectorBackend,
    FileBackend,
    OracleBackend,
    OracleBackendConfig,
    count_by_detection,
    detect_block,
)
from .errors import DataError, ValidationError
from .estimator import (
    BlockFeatureVector,
    CountPrediction,
    RidgeModel,
    extract_features,
    feature_matrix,
    fit_ridge,
    predict_count,
    write_features_csv,
)
from .evaluation import BlockResult, CrossValidationResult, EvaluationReport, kfold_cross_validate, natural_key
from .metrics import evaluate_detections, relative_precision
from .simulator import SyntheticBlock
from .tiling import OrthomosaicMeta, PatchGrid, build_grid, read_sidecar, write_sidecar

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("block_id", "sidecar", "labels_dir", "detections_dir", "ft_dir", "gt_count")


@dataclass(frozen=True)
class ManifestEntry:
    block_id: str
    sidecar: Path
    labels_dir: Optional[Path] = None
    detections_dir: Optional[Path] = None
    ft_dir: Optional[Path] = None
    gt_count: Optional[float] = None


def read_manifest(path: Union[str, Path]) -> List[ManifestEntry]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest {path} does not exist")
    base = path.parent
    entries, problems = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"block_id", "sidecar"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            bid = (row.get("block_id") or "").strip()

            def opt(col):
                v = (row.get(col) or "").strip()
                return base / v if v else None

            gt = (row.get("gt_count") or "").strip()
            entry = ManifestEntry(
                bid, base / row["sidecar"].strip(), opt("labels_dir"), opt("detections_dir"),
                opt("ft_dir"), float(gt) if gt else None,
            )
            if not bid:
                problems.append("row without block_id")
            elif not entry.sidecar.exists():
                problems.append(f"{bid}: sidecar {entry.sidecar} not found")
            for col in ("labels_dir", "detections_dir", "ft_dir"):
                d = getattr(entry, col)
                if d is not None and not d.is_dir():
                    problems.append(f"{bid}: {col} {d} not found")
            entries.append(entry)
    ids = [e.block_id for e in entries]
    dupes = sorted({b for b in ids if ids.count(b) > 1})
    if dupes:
        problems.append(f"duplicate block ids: {dupes}")
    if problems:
        raise DataError(f"{path}: manifest inconsistencies:\n  " + "\n  ".join(problems))
    return entries


def write_manifest(path: Union[str, Path], entries: Sequence[ManifestEntry]) -> None:
    path = Path(path)
    base = path.parent

    def rel(p):
        return "" if p is None else str(Path(p).relative_to(base))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in entries:
            gt = "" if e.gt_count is None else format(e.gt_count, "g")
            w.writerow([e.block_id, rel(e.sidecar), rel(e.labels_dir), rel(e.detections_dir), rel(e.ft_dir), gt])


@dataclass
class BlockRun:
    """Everything computed for one block on the way to its feature vector."""

    meta: OrthomosaicMeta
    grid: PatchGrid
    detections: Dict
    summary: CountSummary
    features: BlockFeatureVector
    labels: Optional[AnnotationSet] = None
    gt_count: Optional[float] = None


def run_block(
    meta: OrthomosaicMeta,
    backend: DetectorBackend,
    cfg: PipelineConfig,
    ft_annotations: Optional[AnnotationSet] = None,
    ft_density: Optional[float] = None,
) -> BlockRun:
    """Detect on every patch, aggregate, and build the feature vector."""
    grid = build_grid(meta, cfg.patch_size_px, cfg.edge_policy)
    dets = detect_block(backend, grid, meta.id, cfg.confidence_threshold)
    summary = count_by_detection(dets)
    feats = extract_features(meta, grid, summary, ft_annotations)
    if ft_density is not None:
        feats = BlockFeatureVector(feats.block_id, feats.det_count, feats.det_density, float(ft_density), feats.area_ha)
    return BlockRun(meta, grid, dets, summary, feats)


def run_manifest_entry(entry: ManifestEntry, cfg: PipelineConfig, strict: bool = False) -> BlockRun:
    meta = read_sidecar(entry.sidecar)
    if meta.id != entry.block_id:
        raise DataError(f"manifest block {entry.block_id!r} points at sidecar for {meta.id!r}")
    if entry.detections_dir is None:
        raise DataError(f"{entry.block_id}: manifest row has no detections_dir")
    grid = build_grid(meta, cfg.patch_size_px, cfg.edge_policy)
    ft = read_annotation_set(entry.ft_dir, meta.id, grid) if entry.ft_dir is not None else None
    backend = FileBackend(entry.detections_dir, cfg.confidence_threshold, strict=strict)
    run = run_block(meta, backend, cfg, ft)
    if entry.labels_dir is not None:
        run.labels = read_annotation_set(entry.labels_dir, meta.id, grid)
    run.gt_count = entry.gt_count
    return run


def count_block(run: BlockRun, model: RidgeModel) -> CountPrediction:
    if model.M != len(run.features.as_array()):
        raise ValidationError(f"model has M={model.M} features but the pipeline produces 4")
    return predict_count(model, run.features)


def block_result(run: BlockRun, cfg: PipelineConfig, corrected: Optional[int] = None) -> BlockResult:
    res = BlockResult(run.meta.id, run.gt_count, float(run.summary.total), corrected)
    if run.labels is not None and run.labels.total_count > 0:
        scores = evaluate_detections(to_mosaic_frame(run.detections), to_mosaic_frame(run.labels), cfg.iou_threshold)
        res.precision, res.recall, res.ap, res.f1 = scores.precision, scores.recall, scores.ap, scores.f1
    return res


def evaluate_runs(runs: Sequence[BlockRun], cfg: PipelineConfig, k: Optional[int] = None):
    """Cross-validate the count corrector over blocks.

    Returns the fold summary and a report with one held-out corrected count
    per block.  ``k=None`` holds out one block at a time.
    """
    runs = sorted(runs, key=lambda r: natural_key(r.meta.id))
    if any(r.gt_count is None for r in runs):
        raise DataError("every block needs a gt_count for cross-validation: "
                        + ", ".join(r.meta.id for r in runs if r.gt_count is None))
    corrected: Dict[str, int] = {}

    def train(train_runs):
        X = feature_matrix([r.features for r in train_runs])
        y = [r.gt_count for r in train_runs]
        return fit_ridge(X, y, lam=cfg.lam, intercept=cfg.intercept, standardize=cfg.standardize)

    def score(model, test_runs):
        rps = []
        for r in test_runs:
            pred = predict_count(model, r.features)
            corrected[r.meta.id] = pred.final_count
            rps.append(relative_precision(pred.final_count, r.gt_count))
        return float(np.mean(rps))

    cv = kfold_cross_validate(runs, k, train, score)
    report = EvaluationReport([block_result(r, cfg, corrected[r.meta.id]) for r in runs])
    return cv, report


def write_folds_csv(path: Union[str, Path], cv: CrossValidationResult, runs: Sequence[BlockRun]) -> None:
    runs = sorted(runs, key=lambda r: natural_key(r.meta.id))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "test_blocks", "n_train", "mean_rp_corrected"])
        for f in cv.folds:
            w.writerow([f.index + 1, " ".join(runs[i].meta.id for i in f.test), len(f.train), format(f.score, ".10g")])
        w.writerow(["average", "", "", format(cv.mean_score, ".10g")])


def export_synthetic_fleet(
    fleet: Sequence[SyntheticBlock],
    out: Union[str, Path],
    oracle: OracleBackendConfig,
    cfg: PipelineConfig,
) -> Path:
    """Write sidecars, labels, fine-tuning labels, oracle detections and a manifest.

    Also writes ``features.csv`` (with ground truth) and ``truth.csv``.
    Returns the manifest path.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    entries, vectors, gts = [], [], {}
    truth_rows = []
    for b in fleet:
        bdir = out / b.block_id
        bdir.mkdir(exist_ok=True)
        sidecar = bdir / "sidecar.json"
        write_sidecar(b.meta, sidecar)
        write_annotation_set(b.annotations, bdir / "labels", skip_empty=True)
        (bdir / "labels").mkdir(exist_ok=True)
        write_annotation_set(b.ft_sample, bdir / "ft")
        backend = OracleBackend(b.annotations, oracle, cfg.confidence_threshold)
        dets = detect_block(backend, b.grid, b.block_id)
        # empty files too, so a strict FileBackend can read the whole grid
        write_detections(dets, b.grid, b.block_id, bdir / "detections", skip_empty=False)
        vectors.append(extract_features(b.meta, b.grid, dets, b.ft_sample))
        gts[b.block_id] = b.gt_count
        truth_rows.append((b.block_id, b.gt_count, b.visible_count, b.spec.invisible_fraction, b.spec.density_per_ha))
        entries.append(ManifestEntry(b.block_id, sidecar, bdir / "labels", bdir / "detections", bdir / "ft", b.gt_count))
    manifest = out / "manifest.csv"
    write_manifest(manifest, entries)
    write_features_csv(out / "features.csv", vectors, gts)
    with open(out / "truth.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block_id", "gt_count", "visible_count", "invisible_fraction", "density_per_ha"])
        for row in truth_rows:
            w.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4])])
    return manifest
