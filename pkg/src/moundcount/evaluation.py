"""Cross-validation harnesses and evaluation reports.

``kfold_cross_validate`` is protocol-agnostic: the caller supplies the
training and scoring callables.  ``loocv_regressor`` is the concrete
leave-one-block-out loop for the count corrector.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ValidationError
from .estimator import (
    DEFAULT_LAMBDA,
    BlockFeatureVector,
    CountPrediction,
    feature_matrix,
    fit_ridge,
    predict_count,
)
from .metrics import relative_precision
from .stats import TTestResult, paired_t_test


def natural_key(s: str) -> list:
    """Sort key that orders ``T7`` before ``T10``."""
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s)]


def fold_indices(n: int, k: int) -> List[np.ndarray]:
    """Test indices of each fold: ``k`` contiguous, near-equal, disjoint chunks."""
    if k < 2:
        raise ValidationError(f"k-fold cross-validation needs k >= 2, got {k}")
    if k > n:
        raise ValidationError(f"cannot split {n} items into {k} folds")
    return [np.asarray(ix, dtype=int) for ix in np.array_split(np.arange(n), k)]


@dataclass
class Fold:
    index: int
    train: List[int]
    test: List[int]
    score: Any = None


@dataclass
class CrossValidationResult:
    folds: List[Fold]
    mean_score: float

    @property
    def scores(self) -> List[Any]:
        return [f.score for f in self.folds]


def kfold_cross_validate(
    items: Sequence,
    k: Optional[int],
    train_fn: Callable[[list], Any],
    eval_fn: Callable[[Any, list], float],
) -> CrossValidationResult:
    """Train on all folds but one, score the held-out fold, average the scores.

    With ``k = len(items)`` (the default when ``k`` is None) every item is
    held out once on its own.
    """
    items = list(items)
    k = len(items) if k is None else k
    folds = []
    for i, test_ix in enumerate(fold_indices(len(items), k)):
        test = set(test_ix.tolist())
        train_ix = [j for j in range(len(items)) if j not in test]
        model = train_fn([items[j] for j in train_ix])
        score = eval_fn(model, [items[j] for j in test_ix])
        folds.append(Fold(i, train_ix, test_ix.tolist(), score))
    return CrossValidationResult(folds, float(np.mean([f.score for f in folds])))


def loocv_regressor(
    vectors: Sequence[BlockFeatureVector],
    targets: Union[Sequence[float], Mapping[str, float]],
    lam: float = DEFAULT_LAMBDA,
    intercept: bool = False,
    standardize: bool = False,
) -> List[CountPrediction]:
    """Held-out prediction for every block, each from a model fit on the others."""
    vectors = list(vectors)
    if len(vectors) < 3:
        raise ValidationError("leave-one-out regression needs at least 3 feature vectors")
    if isinstance(targets, Mapping):
        try:
            y = np.array([targets[v.block_id] for v in vectors], dtype=float)
        except KeyError as exc:
            raise ValidationError(f"no target for block {exc.args[0]!r}") from None
    else:
        y = np.asarray(targets, dtype=float)
    if y.size != len(vectors):
        raise ValidationError("one target per feature vector is required")
    X = feature_matrix(vectors)
    out = []
    for i, v in enumerate(vectors):
        keep = np.arange(len(vectors)) != i
        model = fit_ridge(X[keep], y[keep], lam=lam, intercept=intercept, standardize=standardize)
        out.append(predict_count(model, v))
    return out


@dataclass
class BlockResult:
    block_id: str
    gt_count: Optional[float] = None
    det_count: Optional[float] = None
    corrected_count: Optional[int] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    ap: Optional[float] = None
    f1: Optional[float] = None

    @property
    def rp_detection(self) -> Optional[float]:
        if self.gt_count is None or self.det_count is None:
            return None
        return relative_precision(self.det_count, self.gt_count)

    @property
    def rp_corrected(self) -> Optional[float]:
        if self.gt_count is None or self.corrected_count is None:
            return None
        return relative_precision(self.corrected_count, self.gt_count)


@dataclass
class EvaluationReport:
    blocks: List[BlockResult]
    significance: Optional[TTestResult] = None

    def __post_init__(self):
        self.blocks = sorted(self.blocks, key=lambda b: natural_key(b.block_id))

    def _mean(self, attr):
        vals = [getattr(b, attr) for b in self.blocks]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    def _overall(self, attr):
        rows = [b for b in self.blocks if b.gt_count is not None and getattr(b, attr) is not None]
        if not rows:
            return None
        return relative_precision(sum(getattr(b, attr) for b in rows), sum(b.gt_count for b in rows))

    def summary(self) -> Dict[str, Optional[float]]:
        return {
            "n_blocks": len(self.blocks),
            "mean_ap": self._mean("ap"),
            "mean_f1": self._mean("f1"),
            "mean_rp_detection": self._mean("rp_detection"),
            "mean_rp_corrected": self._mean("rp_corrected"),
            "overall_rp_detection": self._overall("det_count"),
            "overall_rp_corrected": self._overall("corrected_count"),
            "t_statistic": None if self.significance is None else self.significance.t_statistic,
            "p_value": None if self.significance is None else self.significance.p_value,
        }

    def with_significance(self, alternative: str = "less") -> "EvaluationReport":
        """Paired t-test of detection-only RP against corrected RP."""
        rows = [b for b in self.blocks if b.rp_detection is not None and b.rp_corrected is not None]
        self.significance = paired_t_test(
            [b.rp_detection for b in rows], [b.rp_corrected for b in rows], alternative
        )
        return self

    def write_csv(self, path: Union[str, Path]) -> None:
        cols = ["block_id", "gt_count", "det_count", "det_rp", "corrected_count", "corrected_rp",
                "precision", "recall", "ap", "f1"]

        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return format(v, ".10g")
            return str(v)

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for b in self.blocks:
                w.writerow([fmt(x) for x in (
                    b.block_id, b.gt_count, b.det_count, b.rp_detection, b.corrected_count,
                    b.rp_corrected, b.precision, b.recall, b.ap, b.f1)])

    def format_text(self) -> str:
        lines = [f"{'block':<12}{'GT':>9}{'det':>9}{'RP':>8}{'corr':>9}{'RP':>8}"]

        def pct(v):
            return "" if v is None else f"{100 * v:.1f}%"

        def num(v):
            return "" if v is None else f"{v:.0f}"

        for b in self.blocks:
            lines.append(
                f"{b.block_id:<12}{num(b.gt_count):>9}{num(b.det_count):>9}{pct(b.rp_detection):>8}"
                f"{num(b.corrected_count):>9}{pct(b.rp_corrected):>8}"
            )
        s = self.summary()
        lines.append(
            f"mean RP: detection {pct(s['mean_rp_detection'])}, corrected {pct(s['mean_rp_corrected'])}"
        )
        lines.append(
            f"overall RP: detection {pct(s['overall_rp_detection'])}, "
            f"corrected {pct(s['overall_rp_corrected'])}"
        )
        if s["mean_ap"] is not None:
            lines.append(f"mean AP {pct(s['mean_ap'])}, mean F1 {pct(s['mean_f1'])}")
        if self.significance is not None:
            sig = self.significance
            lines.append(f"paired t-test ({sig.alternative}): t={sig.t_statistic:.3f}, p={sig.p_value:.5f}")
        return "\n".join(lines) + "\n"
