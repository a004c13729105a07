"""Block-level features and the ridge-regression count corrector.

The corrector maps a block's feature vector ``x`` (detection count, mean
detections per patch, mean boxes per fine-tuning patch, area in hectares) to
the final count ``sum_j w_j * x_j``.  Weights minimize the squared error plus
``lam * ||w||^2`` and are obtained in closed form.

By default there is no intercept and features are used raw.  Both can be
switched on; scaling statistics are stored in the model so prediction always
consumes raw features.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .annotations import AnnotationSet
from .detection import CountSummary, count_by_detection
from .errors import DataError, SingularSystemError, ValidationError
from .tiling import OrthomosaicMeta, PatchGrid

FEATURE_NAMES = ("det_count", "det_density", "ft_density", "area_ha")
DEFAULT_LAMBDA = 10.0


@dataclass(frozen=True)
class BlockFeatureVector:
    block_id: str
    det_count: float
    det_density: float
    ft_density: Optional[float]
    area_ha: float

    def __post_init__(self):
        if not self.area_ha > 0:
            raise ValidationError(f"{self.block_id}: area_ha must be > 0")
        for name in ("det_count", "det_density", "ft_density"):
            v = getattr(self, name)
            if v is None:
                continue
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{self.block_id}: {name} must be finite and >= 0, got {v}")

    @property
    def complete(self) -> bool:
        return self.ft_density is not None

    def as_array(self) -> np.ndarray:
        if not self.complete:
            raise ValidationError(f"{self.block_id}: feature vector lacks ft_density")
        return np.array([self.det_count, self.det_density, self.ft_density, self.area_ha], dtype=float)


def extract_features(
    meta: OrthomosaicMeta,
    grid: PatchGrid,
    detections: Union[CountSummary, Mapping],
    ft_annotations: Optional[AnnotationSet] = None,
) -> BlockFeatureVector:
    """Assemble the feature vector of one block.

    ``det_density`` divides the detection count by every patch of the grid.
    ``ft_density`` is the mean number of boxes over the annotated fine-tuning
    patches; without annotations the feature is left absent.
    """
    summary = detections if isinstance(detections, CountSummary) else count_by_detection(detections)
    if grid.n_patches == 0:
        raise ValidationError(f"{meta.id}: grid has no patches")
    ft_density = None
    if ft_annotations is not None and ft_annotations.n_patches > 0:
        ft_density = ft_annotations.total_count / ft_annotations.n_patches
    return BlockFeatureVector(
        block_id=meta.id,
        det_count=float(summary.total),
        det_density=summary.total / grid.n_patches,
        ft_density=ft_density,
        area_ha=meta.area_ha,
    )


def feature_matrix(vectors: Sequence[BlockFeatureVector]) -> np.ndarray:
    incomplete = [v.block_id for v in vectors if not v.complete]
    if incomplete:
        raise ValidationError(f"incomplete feature vectors (no ft_density): {incomplete}")
    return np.vstack([v.as_array() for v in vectors]) if vectors else np.zeros((0, len(FEATURE_NAMES)))


@dataclass(frozen=True)
class RidgeModel:
    weights: np.ndarray
    lam: float
    intercept: Optional[float] = None
    feature_mean: Optional[np.ndarray] = None
    feature_std: Optional[np.ndarray] = None
    feature_names: Tuple[str, ...] = FEATURE_NAMES
    n_train: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be a finite 1-D vector")
        if self.lam < 0:
            raise ValidationError("lambda must be >= 0")
        if len(self.feature_names) != w.size:
            object.__setattr__(self, "feature_names", tuple(f"x{j}" for j in range(w.size)))

    @property
    def M(self) -> int:
        return self.weights.size

    @property
    def standardized(self) -> bool:
        return self.feature_mean is not None

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.M:
            raise ValidationError(f"model expects {self.M} features, got {X.shape[1]}")
        if self.standardized:
            X = (X - self.feature_mean) / self.feature_std
        return X

    def predict_raw(self, X) -> np.ndarray:
        out = self.transform(X) @ self.weights
        if self.intercept is not None:
            out = out + self.intercept
        return out

    # -- persistence: JSON with repr'd floats round-trips bit-exactly ---------

    def to_dict(self) -> dict:
        def vec(a):
            return None if a is None else [float(v) for v in a]

        return {
            "M": self.M,
            "feature_names": list(self.feature_names),
            "weights": vec(self.weights),
            "lambda": float(self.lam),
            "intercept": None if self.intercept is None else float(self.intercept),
            "scaling": None if not self.standardized
            else {"mean": vec(self.feature_mean), "std": vec(self.feature_std)},
            "n_train": int(self.n_train),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RidgeModel":
        try:
            weights = np.array(d["weights"], dtype=float)
            if int(d["M"]) != weights.size:
                raise DataError(f"model file declares M={d['M']} but has {weights.size} weights")
            scaling = d.get("scaling")
            return cls(
                weights=weights,
                lam=float(d["lambda"]),
                intercept=None if d.get("intercept") is None else float(d["intercept"]),
                feature_mean=None if scaling is None else np.array(scaling["mean"], dtype=float),
                feature_std=None if scaling is None else np.array(scaling["std"], dtype=float),
                feature_names=tuple(d.get("feature_names") or FEATURE_NAMES),
                n_train=int(d.get("n_train", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed model record: {exc}") from exc

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RidgeModel":
        path = Path(path)
        if not path.exists():
            raise DataError(f"model file {path} does not exist")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid model JSON ({exc})") from exc


def ridge_loss(w: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    r = y - X @ w
    return float(r @ r + lam * (w @ w))


def ridge_gradient(w: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    return -2.0 * X.T @ (y - X @ w) + 2.0 * lam * w


def _solve_normal_equations(X, y, penalty):
    A = X.T @ X + np.diag(penalty)
    if penalty.min() <= 0:
        # some directions are unpenalized; make sure the system is not singular
        s = np.linalg.svd(A, compute_uv=False)
        if s.size == 0 or s[-1] <= s[0] * A.shape[0] * np.finfo(float).eps:
            raise SingularSystemError(
                "normal equations are singular; use lambda > 0 or remove collinear features"
            )
    return np.linalg.solve(A, X.T @ y)


def fit_ridge(
    X,
    y,
    lam: float = DEFAULT_LAMBDA,
    intercept: bool = False,
    standardize: bool = False,
    feature_names: Sequence[str] = FEATURE_NAMES,
) -> RidgeModel:
    """Closed-form ridge fit ``w = (X^T X + lam I)^-1 X^T y``.

    The intercept, when enabled, is not penalized.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValidationError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    if X.shape[0] < 1:
        raise ValidationError("at least one training observation is required")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("training data contains non-finite values")
    if lam < 0:
        raise ValidationError("lambda must be >= 0")

    mean = std = None
    Z = X
    if standardize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        Z = (X - mean) / std
    m = Z.shape[1]
    if intercept:
        Z = np.column_stack([Z, np.ones(Z.shape[0])])
        penalty = np.r_[np.full(m, float(lam)), 0.0]
    else:
        penalty = np.full(m, float(lam))
    coef = _solve_normal_equations(Z, y, penalty)
    return RidgeModel(
        weights=coef[:m],
        lam=float(lam),
        intercept=float(coef[m]) if intercept else None,
        feature_mean=mean,
        feature_std=std,
        feature_names=tuple(feature_names) if len(feature_names) == m else (),
        n_train=X.shape[0],
    )


def fit_ridge_vectors(vectors: Sequence[BlockFeatureVector], targets: Sequence[float], **kw) -> RidgeModel:
    return fit_ridge(feature_matrix(vectors), targets, **kw)


@dataclass(frozen=True)
class CountPrediction:
    block_id: str
    raw: float
    final_count: int


def round_count(raw: float) -> int:
    """Clamp at zero, then round half up."""
    return int(math.floor(max(raw, 0.0) + 0.5))


def predict_count(model: RidgeModel, f: Union[BlockFeatureVector, Sequence[float]], block_id: str = "") -> CountPrediction:
    if isinstance(f, BlockFeatureVector):
        block_id, x = f.block_id, f.as_array()
    else:
        x = np.asarray(f, dtype=float)
    if x.size != model.M:
        raise ValidationError(f"model expects {model.M} features, got {x.size}")
    raw = float(model.predict_raw(x)[0])
    return CountPrediction(block_id, raw, round_count(raw))


# -- CSV interface ----------------------------------------------------------

CSV_COLUMNS = ("block_id",) + FEATURE_NAMES


def write_features_csv(
    path: Union[str, Path],
    vectors: Sequence[BlockFeatureVector],
    gt_counts: Optional[Mapping[str, float]] = None,
) -> None:
    cols = list(CSV_COLUMNS) + (["gt_count"] if gt_counts is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for v in vectors:
            row = [v.block_id, repr(v.det_count), repr(v.det_density),
                   "" if v.ft_density is None else repr(float(v.ft_density)), repr(float(v.area_ha))]
            if gt_counts is not None:
                g = gt_counts.get(v.block_id)
                row.append("" if g is None else repr(g) if isinstance(g, float) else str(g))
            w.writerow(row)


def read_features_csv(path: Union[str, Path]) -> Tuple[List[BlockFeatureVector], Dict[str, float]]:
    """Read ``block_id,det_count,det_density,ft_density,area_ha[,gt_count]``."""
    vectors, targets = [], {}
    path = Path(path)
    if not path.exists():
        raise DataError(f"features file {path} does not exist")
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                ft = row["ft_density"].strip()
                vectors.append(BlockFeatureVector(
                    block_id=row["block_id"],
                    det_count=float(row["det_count"]),
                    det_density=float(row["det_density"]),
                    ft_density=float(ft) if ft else None,
                    area_ha=float(row["area_ha"]),
                ))
                g = (row.get("gt_count") or "").strip()
                if g:
                    targets[row["block_id"]] = float(g)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return vectors, targets
