"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 1 to 4 recompute the printed result tables from their own printed
inputs; 5 to 9 are oracle, property and end-to-end checks.  Run with
``pytest -v tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from moundcount.annotations import BoundingBox, DetectionRecord
from moundcount.augmentation import (
    SIZE,
    AugmentationConfig,
    augment_patch,
    iter_augmentations,
    patch_rng,
    resize_box,
    translate_box,
)
from moundcount.detection import OracleBackend, OracleBackendConfig, count_by_detection, detect_block
from moundcount.estimator import extract_features, fit_ridge, ridge_gradient, ridge_loss
from moundcount.evaluation import fold_indices, kfold_cross_validate, loocv_regressor
from moundcount.metrics import average_precision, f1_from_pr, relative_precision
from moundcount.simulator import generate_fleet
from moundcount.stats import paired_t_test
from moundcount.tables import read_golden, table4_rp_columns
from moundcount.tiling import EdgePolicy, PatchGrid

sys.path.insert(0, str(Path(__file__).parent))
from oracles import greedy_flags, interpolated_ap, ridge_cg  # noqa: E402


def report(capsys, number, title, ok, elapsed, limit, details):
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {number}: {title} ({elapsed:.2f} s, limit {limit} s) {details}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)


def pct_rp(pred, gt):
    return 100.0 * relative_precision(float(pred), float(gt))


def describe(misses):
    return "all cells within tolerance" if not misses else "off: " + "; ".join(misses)


# -- 1 ----------------------------------------------------------------------


def test_criterion_1_table4_rp(capsys):
    t0 = time.perf_counter()
    rows = read_golden("table4_test_blocks.csv")
    summary = {s["method"]: s for s in read_golden("table4_summary.csv")}
    misses, n = [], 0
    for m in ("yolo", "ours"):
        for r in rows:
            rp = pct_rp(r[f"{m}_count"], r["gt"])
            n += 1
            if abs(rp - float(r[f"{m}_rp"])) > 0.1 + 1e-9:
                misses.append(f"{r['block']} {m} {rp:.2f} vs {r[f'{m}_rp']}")
    overall = pct_rp(80989, 84550)
    n += 1
    if abs(overall - 95.8) > 0.1:
        misses.append(f"overall {overall:.2f} vs 95.8")
    average = float(np.mean([pct_rp(r["ours_count"], r["gt"]) for r in rows]))
    n += 1
    if abs(average - float(summary["ours"]["average_rp"])) > 0.1:
        misses.append(f"average {average:.2f} vs {summary['ours']['average_rp']}")
    elapsed = time.perf_counter() - t0
    ok = not misses and elapsed < 1.0
    report(capsys, 1, "Table IV RP arithmetic", ok, elapsed, 1,
           f"{n - len(misses)}/{n} values; overall {overall:.2f}, average {average:.2f}; {describe(misses)}")
    assert ok, misses


# -- 2 ----------------------------------------------------------------------


def test_criterion_2_significance(capsys):
    t0 = time.perf_counter()
    cols = table4_rp_columns("printed")
    res = paired_t_test(cols["yolo"], cols["ours"], alternative="less")
    elapsed = time.perf_counter() - t0
    t_ok = abs(res.t_statistic - (-3.299)) <= 0.01
    p_ok = abs(res.p_value - 0.00708) <= 0.0005
    two_sided = paired_t_test(cols["yolo"], cols["ours"], alternative="two-sided").p_value
    ok = t_ok and p_ok and elapsed < 1.0
    report(capsys, 2, "paired one-sided t-test", ok, elapsed, 1,
           f"t = {res.t_statistic:.4f} (target -3.299 +/- 0.01, {'ok' if t_ok else 'off'}); "
           f"one-sided p = {res.p_value:.5f} (target 0.00708 +/- 0.0005, {'ok' if p_ok else 'off'}); "
           f"two-sided p = {two_sided:.5f}")
    assert ok, (res.t_statistic, res.p_value)


# -- 3 ----------------------------------------------------------------------


def test_criterion_3_table1_f1(capsys):
    t0 = time.perf_counter()
    rows = read_golden("table1_detection_folds.csv")
    misses, flagged = [], []
    for r in rows:
        f1 = f1_from_pr(float(r["precision"]), float(r["recall"]))
        if not r["f1_as_printed"].endswith("%"):
            flagged.append(f"fold {r['fold']} model {r['model']} printed {r['f1_as_printed']}")
        if abs(f1 - float(r["f1"])) > 0.2 + 1e-9:
            misses.append(f"fold {r['fold']} model {r['model']} F1 {f1:.2f} vs {r['f1']}")
    for avg in read_golden("table1_averages.csv"):
        sub = [r for r in rows if r["model"] == avg["model"]]
        for col in ("precision", "recall", "ap", "f1"):
            v = float(np.mean([float(r[col]) for r in sub]))
            if abs(v - float(avg[col])) > 0.1 + 1e-9:
                misses.append(f"model {avg['model']} mean {col} {v:.2f} vs {avg[col]}")
    elapsed = time.perf_counter() - t0
    ok = not misses
    report(capsys, 3, "Table I F1 consistency", ok, elapsed, "-",
           f"raw-fraction cells: {', '.join(flagged)}; {describe(misses)}")
    assert len(flagged) == 2
    assert ok, misses


# -- 4 ----------------------------------------------------------------------


def test_criterion_4_table3(capsys):
    t0 = time.perf_counter()
    rows = read_golden("table3_correction_ablation.csv")
    avg = read_golden("table3_averages.csv")[0]
    misses, det, cor = [], [], []
    for r in rows:
        d, c = pct_rp(r["det_count"], r["gt"]), pct_rp(r["corrected_count"], r["gt"])
        det.append(d)
        cor.append(c)
        for name, v in (("det_rp", d), ("corrected_rp", c), ("improvement", c - d)):
            if abs(v - float(r[name])) > 0.1 + 1e-9:
                misses.append(f"{r['block']} {name} {v:.2f} vs {r[name]}")
    # the improvement average is taken over the printed improvement cells
    averages = {
        "det_rp": float(np.mean(det)),
        "corrected_rp": float(np.mean(cor)),
        "improvement": float(np.mean([float(r["improvement"]) for r in rows])),
    }
    for name, v in averages.items():
        if abs(v - float(avg[name])) > 0.1 + 1e-9:
            misses.append(f"average {name} {v:.2f} vs {avg[name]}")
    elapsed = time.perf_counter() - t0
    ok = not misses
    report(capsys, 4, "Table III reproduction", ok, elapsed, "-",
           f"averages {averages['det_rp']:.2f} / {averages['corrected_rp']:.2f} / "
           f"{averages['improvement']:.2f}; {describe(misses)}")
    assert ok, misses


# -- 5 ----------------------------------------------------------------------


def test_criterion_5_ridge_oracle(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_w, worst_g = 0.0, 0.0
    for i in range(200):
        n, m = int(rng.integers(1, 51)), int(rng.integers(1, 9))
        lam = [0.1, 1.0, 10.0, 100.0][i % 4]
        X = rng.normal(size=(n, m)) * rng.uniform(0.2, 3.0, size=m)
        y = X @ rng.normal(size=m) + rng.normal(scale=0.3, size=n)
        w = fit_ridge(X, y, lam=lam).weights
        ref = ridge_cg(X, y, lam)
        worst_w = max(worst_w, np.linalg.norm(w - ref) / max(np.linalg.norm(ref), 1e-300))
        v = rng.normal(size=m)
        h = 1e-5 * max(1.0, np.linalg.norm(v))
        fd = np.array([
            (ridge_loss(v + h * e, X, y, lam) - ridge_loss(v - h * e, X, y, lam)) / (2 * h)
            for e in np.eye(m)
        ])
        g = ridge_gradient(v, X, y, lam)
        worst_g = max(worst_g, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst_w <= 1e-8 and worst_g <= 1e-6 and elapsed < 10.0
    report(capsys, 5, "ridge closed form vs iterative minimizer", ok, elapsed, 10,
           f"200 instances; worst weight rel. error {worst_w:.1e}, worst gradient rel. error {worst_g:.1e}")
    assert ok


# -- 6 ----------------------------------------------------------------------

GT_POOL = [BoundingBox(20, 20, 10, 10), BoundingBox(60, 20, 10, 10),
           BoundingBox(20, 60, 10, 10), BoundingBox(60, 60, 12, 8)]
DET_POOL = [
    (20, 20, 10, 10), (21, 19, 10, 10),   # hit and duplicate on GT 0
    (60, 21, 10, 10),                      # hit on GT 1
    (23, 63, 10, 10),                      # weak hit on GT 2 (IoU ~0.5)
    (26, 60, 10, 10),                      # near miss on GT 2
    (60, 60, 12, 8),                       # hit on GT 3
    (40, 40, 10, 10),                      # background
    (64, 24, 10, 10),                      # partial overlap, below threshold
]


def test_criterion_6_ap_oracle(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    orders = [np.linspace(0.95, 0.3, len(DET_POOL))] + [rng.permutation(np.linspace(0.95, 0.3, len(DET_POOL)))
                                                       for _ in range(2)]
    worst, cases = 0.0, 0
    for confs in orders:
        for n_gt in range(1, 5):
            for gts in itertools.combinations(GT_POOL, n_gt):
                for k in range(0, 7):
                    for idx in itertools.combinations(range(len(DET_POOL)), k):
                        dets = [DetectionRecord(BoundingBox(*DET_POOL[i]), float(confs[i])) for i in idx]
                        ap = average_precision(dets, list(gts))
                        ref = interpolated_ap(greedy_flags(dets, list(gts)), len(gts))
                        worst = max(worst, abs(ap - ref))
                        cases += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5.0
    report(capsys, 6, "AP vs brute-force curve integral", ok, elapsed, 5,
           f"{cases} exhaustive cases; worst abs. difference {worst:.1e}")
    assert ok


# -- 7 ----------------------------------------------------------------------


def test_criterion_7_augmentation(capsys):
    t0 = time.perf_counter()
    grid = PatchGrid(4160, 4160, 416)
    cfg = AugmentationConfig(seed=77)
    rng = np.random.default_rng(7)
    failures = []
    n_boxes = 0
    for p in list(grid)[:100]:
        cx, cy = rng.uniform(0, 416, size=(2, 100))
        w, h = rng.uniform(4, 80, size=(2, 100))
        boxes = [BoundingBox(*v) for v in zip(cx, cy, w, h)]
        n_boxes += len(boxes)
        for s in iter_augmentations(boxes, cfg, patch_rng(cfg.seed, p)):
            b, o = s.source, s.box
            if s.transform == SIZE:
                (Z,) = s.params
                if not (cfg.z_range[0] <= Z <= cfg.z_range[1]
                        and abs(o.w / b.w - Z) <= 1e-9 and abs(o.h / b.h - Z) <= 1e-9
                        and (o.cx, o.cy) == (b.cx, b.cy)):
                    failures.append(("size", s))
            else:
                L, alpha = s.params
                if not (cfg.l_range[0] <= L <= cfg.l_range[1]
                        and abs(math.hypot(o.cx - b.cx, o.cy - b.cy) - L) <= 1e-9
                        and (o.w, o.h) == (b.w, b.h)):
                    failures.append(("translation", s))
            if resize_box(b, 1.0) != b or translate_box(b, 0.0, float(rng.uniform(0, 6.28))) != b:
                failures.append(("identity", s))
        out = augment_patch(boxes, cfg, p)
        if out != augment_patch(boxes, cfg, p):
            failures.append(("determinism", p.key))
        for o in out:
            x0, y0, x1, y1 = o.xyxy
            if not (0 <= x0 and 0 <= y0 and x1 <= p.w and y1 <= p.h):
                failures.append(("bounds", o))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 5.0
    report(capsys, 7, "augmentation invariants", ok, elapsed, 5,
           f"{n_boxes} boxes; {len(failures)} violations")
    assert ok, failures[:5]


# -- 8 ----------------------------------------------------------------------


def test_criterion_8_end_to_end(capsys):
    t0 = time.perf_counter()
    fleet = generate_fleet(18, seed=7)
    oracle_cfg = OracleBackendConfig(miss_rate=0.1, center_jitter_px=2.0, seed=1)
    vectors, det_counts = [], []
    for b in fleet:
        assert 0.1 <= b.spec.invisible_fraction <= 0.3
        dets = detect_block(OracleBackend(b.annotations, oracle_cfg), b.grid, b.block_id)
        vectors.append(extract_features(b.meta, b.grid, dets, b.ft_sample))
        det_counts.append(count_by_detection(dets).total)
    gts = [b.gt_count for b in fleet]
    preds = loocv_regressor(vectors, gts)
    rp_det = float(np.mean([relative_precision(d, g) for d, g in zip(det_counts, gts)]))
    rp_cor = float(np.mean([relative_precision(p.final_count, g) for p, g in zip(preds, gts)]))
    improved = sum(relative_precision(p.final_count, g) > relative_precision(d, g)
                   for p, d, g in zip(preds, det_counts, gts))
    elapsed = time.perf_counter() - t0
    ok = rp_cor > rp_det and rp_cor >= 0.9 and elapsed < 60.0
    report(capsys, 8, "end-to-end simulator run", ok, elapsed, 60,
           f"mean RP detection {rp_det:.4f}, corrected {rp_cor:.4f}; corrected better on {improved}/18 blocks")
    assert ok


# -- 9 ----------------------------------------------------------------------


def test_criterion_9_harness_integrity(capsys):
    t0 = time.perf_counter()
    problems = []
    n_splits = 0
    for n in range(2, 19):
        for k in range(2, n + 1):
            n_splits += 1
            cv = kfold_cross_validate(list(range(n)), k, lambda tr: set(tr), lambda m, te: float(bool(m & set(te))))
            tests = [set(f.test) for f in cv.folds]
            if any(set(f.train) & set(f.test) for f in cv.folds) or cv.mean_score != 0.0:
                problems.append(("leak", n, k))
            if sorted(itertools.chain.from_iterable(tests)) != list(range(n)):
                problems.append(("cover", n, k))
            if any(set(f.train) | set(f.test) != set(range(n)) for f in cv.folds):
                problems.append(("train", n, k))
            if len(fold_indices(n, k)) != k:
                problems.append(("count", n, k))
    # patch widths depend only on the column and heights only on the row, so
    # every axis is swept exhaustively and full 2D coverage on a random subset
    n_axes = 0
    for size in range(1, 17):
        for extent in range(1, 65):
            for policy in (EdgePolicy.PARTIAL, EdgePolicy.DROP):
                if policy is EdgePolicy.DROP and extent < size:
                    continue
                g = PatchGrid(extent, extent, size, policy)
                n_axes += 1
                cover = g.covered_extent()[0]
                cols = [g.patch(0, c) for c in range(g.cols)]
                rows = [g.patch(r, 0) for r in range(g.rows)]
                for spans in ([(p.origin_x, p.w) for p in cols], [(p.origin_y, p.h) for p in rows]):
                    ends = [o + n for o, n in spans]
                    if spans[0][0] != 0 or ends[-1] != cover or [o for o, _ in spans[1:]] != ends[:-1] \
                            or min(n for _, n in spans) < 1:
                        problems.append(("axis", extent, size, policy.value))
    rng = np.random.default_rng(9)
    n_grids = 0
    while n_grids < 300:
        w, h, size = (int(v) for v in rng.integers(1, [65, 65, 17]))
        policy = EdgePolicy.DROP if rng.random() < 0.5 else EdgePolicy.PARTIAL
        if policy is EdgePolicy.DROP and (w < size or h < size):
            continue
        g = PatchGrid(w, h, size, policy)
        n_grids += 1
        ext_w, ext_h = g.covered_extent()
        hits = np.zeros((ext_h, ext_w), dtype=np.int32)
        for p in g:
            hits[p.origin_y:p.origin_y + p.h, p.origin_x:p.origin_x + p.w] += 1
        if not (hits == 1).all() or sum(p.w * p.h for p in g) != ext_w * ext_h:
            problems.append(("tiling", w, h, size, policy.value))
    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 10.0
    report(capsys, 9, "harness integrity", ok, elapsed, 10,
           f"{n_splits} fold splits, {n_axes} axis tilings, {n_grids} random 2D grids; {len(problems)} violations")
    assert ok, problems[:5]


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn(None)
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
