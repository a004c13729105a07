"""Golden copies of the published result tables and their arithmetic checks.

Each table keeps its printed primitives (counts, precision/recall pairs) and
printed derived cells (RP, F1, averages, improvements).  The ``check_*``
functions recompute every derived cell from the primitives and compare it
with the printed value.  Values are in percent throughout.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List

import numpy as np

from .metrics import f1_from_pr, relative_precision
from .stats import paired_t_test

TABLE_FILES = (
    "table1_detection_folds.csv",
    "table1_averages.csv",
    "table3_correction_ablation.csv",
    "table3_averages.csv",
    "table4_test_blocks.csv",
    "table4_summary.csv",
    "significance.csv",
    "g2_block_features.csv",
)


def read_golden(name: str) -> List[Dict[str, str]]:
    """Rows of a bundled golden CSV (``#`` lines are comments)."""
    text = resources.files("moundcount.data").joinpath(name).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


@dataclass(frozen=True)
class CellCheck:
    table: str
    row: str
    column: str
    printed: float
    computed: float
    tolerance: float
    note: str = ""

    @property
    def diff(self) -> float:
        return self.computed - self.printed

    @property
    def ok(self) -> bool:
        return abs(self.diff) <= self.tolerance + 1e-9

    def format(self) -> str:
        status = "ok  " if self.ok else "DIFF"
        note = f"  [{self.note}]" if self.note else ""
        return (
            f"{status} {self.table:<8} {self.row:<10} {self.column:<16} "
            f"printed {self.printed:>9.4f}  computed {self.computed:>9.4f}  "
            f"(tol {self.tolerance}){note}"
        )


def _rp(pred, gt) -> float:
    return 100.0 * relative_precision(float(pred), float(gt))


def check_table1(f1_tol: float = 0.2, avg_tol: float = 0.1) -> List[CellCheck]:
    """Per-fold F1 from (P, R) and the printed column averages."""
    rows = read_golden("table1_detection_folds.csv")
    checks = []
    for r in rows:
        p, rec = float(r["precision"]), float(r["recall"])
        note = "printed as a raw fraction" if not r["f1_as_printed"].endswith("%") else ""
        checks.append(CellCheck(
            "table1", f"fold{r['fold']}/m{r['model']}", "f1", float(r["f1"]),
            f1_from_pr(p, rec), f1_tol, note,
        ))
    for avg in read_golden("table1_averages.csv"):
        model_rows = [r for r in rows if r["model"] == avg["model"]]
        for col in ("precision", "recall", "ap", "f1"):
            checks.append(CellCheck(
                "table1", f"avg/m{avg['model']}", col, float(avg[col]),
                float(np.mean([float(r[col]) for r in model_rows])), avg_tol,
            ))
    return checks


def check_table3(tol: float = 0.1) -> List[CellCheck]:
    """RP and improvement per block and their averages, from printed counts."""
    rows = read_golden("table3_correction_ablation.csv")
    checks = []
    det_rps, cor_rps = [], []
    for r in rows:
        gt = float(r["gt"])
        det = _rp(r["det_count"], gt)
        cor = _rp(r["corrected_count"], gt)
        det_rps.append(det)
        cor_rps.append(cor)
        checks += [
            CellCheck("table3", r["block"], "det_rp", float(r["det_rp"]), det, tol),
            CellCheck("table3", r["block"], "corrected_rp", float(r["corrected_rp"]), cor, tol),
            CellCheck("table3", r["block"], "improvement", float(r["improvement"]), cor - det, tol),
        ]
    avg = read_golden("table3_averages.csv")[0]
    # the improvement average is the mean of the printed improvement cells;
    # from counts it would be mean(cor_rps) - mean(det_rps)
    checks += [
        CellCheck("table3", "average", "det_rp", float(avg["det_rp"]), float(np.mean(det_rps)), tol),
        CellCheck("table3", "average", "corrected_rp", float(avg["corrected_rp"]), float(np.mean(cor_rps)), tol),
        CellCheck("table3", "average", "improvement", float(avg["improvement"]),
                  float(np.mean([float(r["improvement"]) for r in rows])), tol, "mean of printed cells"),
    ]
    return checks


def check_table4(tol: float = 0.1, methods=("yolo", "frcnn", "ours")) -> List[CellCheck]:
    """Per-block RP, totals, overall RP and mean RP for each method."""
    rows = read_golden("table4_test_blocks.csv")
    summary = {s["method"]: s for s in read_golden("table4_summary.csv")}
    checks = []
    for m in methods:
        # whole-percent columns carry half a point of print rounding
        col_tol = 0.5 if all("." not in r[f"{m}_rp"] for r in rows) else tol
        rps = []
        for r in rows:
            rp = _rp(r[f"{m}_count"], r["gt"])
            rps.append(rp)
            checks.append(CellCheck("table4", r["block"], f"{m}_rp", float(r[f"{m}_rp"]), rp, col_tol))
        s = summary[m]
        total_gt = sum(float(r["gt"]) for r in rows)
        total = sum(float(r[f"{m}_count"]) for r in rows)
        checks += [
            CellCheck("table4", "overall", "total_gt", float(s["total_gt"]), total_gt, 0.0),
            CellCheck("table4", "overall", f"{m}_total", float(s["total_count"]), total, 0.0),
            CellCheck("table4", "overall", f"{m}_overall_rp", float(s["overall_rp"]),
                      _rp(s["total_count"], s["total_gt"]), tol, "from the printed total"),
            CellCheck("table4", "average", f"{m}_average_rp", float(s["average_rp"]),
                      float(np.mean(rps)), tol),
        ]
    return checks


def table4_rp_columns(source: str = "printed") -> Dict[str, List[float]]:
    """Detection-only and corrected RP columns (percent) of the test blocks.

    ``source="printed"`` returns the printed cells; ``"counts"`` recomputes
    them from the printed counts.
    """
    rows = read_golden("table4_test_blocks.csv")
    if source == "printed":
        return {
            "yolo": [float(r["yolo_rp"]) for r in rows],
            "ours": [float(r["ours_rp"]) for r in rows],
        }
    if source == "counts":
        return {
            "yolo": [_rp(r["yolo_count"], r["gt"]) for r in rows],
            "ours": [_rp(r["ours_count"], r["gt"]) for r in rows],
        }
    raise ValueError(f"unknown source {source!r}")


def check_significance(t_tol: float = 0.01, p_tol: float = 0.0005, alternative: str = "less") -> List[CellCheck]:
    """Paired t-test on the printed RP columns against the reported t and p."""
    ref = read_golden("significance.csv")[0]
    cols = table4_rp_columns("printed")
    res = paired_t_test(cols["yolo"], cols["ours"], alternative=alternative)
    return [
        CellCheck("ttest", alternative, "t_statistic", float(ref["t_statistic"]), res.t_statistic, t_tol),
        CellCheck("ttest", alternative, "p_value", float(ref["p_value"]), res.p_value, p_tol),
    ]


def check_all() -> List[CellCheck]:
    return check_table1() + check_table3() + check_table4() + check_significance()


def format_checks(checks: List[CellCheck], only_failures: bool = False) -> str:
    lines = [c.format() for c in checks if not (only_failures and c.ok)]
    n_bad = sum(not c.ok for c in checks)
    lines.append(f"{len(checks) - n_bad}/{len(checks)} cells reproduced within tolerance")
    return "\n".join(lines) + "\n"
