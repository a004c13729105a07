"""Detector boundary and counting-by-detection.

The visual detector itself lives outside this package.  Two backends cover
everything the rest of the pipeline needs:

* :class:`FileBackend` ingests per-patch label files written by any external
  detector (``class cx cy w h conf`` per line);
* :class:`OracleBackend` degrades known ground truth (misses, false positives,
  center jitter) for synthetic experiments.
"""

from __future__ import annotations

import logging
import zlib
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .annotations import (
    AnnotationSet,
    BoundingBox,
    DetectionRecord,
    label_filename,
    parse_detection_file,
)
from .errors import DataError, ValidationError
from .tiling import PatchGrid, PatchRef

logger = logging.getLogger(__name__)

DEFAULT_CONFIDENCE_THRESHOLD = 0.25

PerPatchDetections = Dict[Tuple[int, int], List[DetectionRecord]]


class DetectorBackend(ABC):
    name: str = "backend"
    deterministic: bool = True
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD

    @abstractmethod
    def detect_patch(self, patch: PatchRef, block_id: str) -> List[DetectionRecord]:
        """Raw detections for one patch (threshold not yet applied)."""


@dataclass
class FileBackend(DetectorBackend):
    detections_dir: Union[str, Path]
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    strict: bool = False
    name: str = field(default="file", init=False)

    def __post_init__(self):
        self.detections_dir = Path(self.detections_dir)
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValidationError("confidence_threshold must lie in [0, 1]")

    def detect_patch(self, patch: PatchRef, block_id: str) -> List[DetectionRecord]:
        path = self.detections_dir / label_filename(block_id, patch.row, patch.col)
        if not path.exists():
            if self.strict:
                raise DataError(f"missing detection file {path}")
            logger.debug("no detection file %s; counting zero detections", path.name)
            return []
        return parse_detection_file(path.read_text(), patch, path=path)


@dataclass(frozen=True)
class OracleBackendConfig:
    miss_rate: float = 0.0
    false_positive_rate_per_patch: float = 0.0
    center_jitter_px: float = 0.0
    confidence_model: str = "constant"  # or "noisy"
    constant_confidence: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValidationError("miss_rate must lie in [0, 1]")
        if self.false_positive_rate_per_patch < 0:
            raise ValidationError("false_positive_rate_per_patch must be >= 0")
        if self.center_jitter_px < 0:
            raise ValidationError("center_jitter_px must be >= 0")
        if self.confidence_model not in ("constant", "noisy"):
            raise ValidationError("confidence_model must be 'constant' or 'noisy'")
        if not 0.0 <= self.constant_confidence <= 1.0:
            raise ValidationError("constant_confidence must lie in [0, 1]")


class OracleBackend(DetectorBackend):
    """Synthetic detector driven by ground-truth annotations.

    Each true box is missed with probability ``miss_rate``; survivors get a
    Gaussian center jitter (kept inside the patch).  ``Poisson(fp_rate)``
    false positives are added per patch.  With the ``noisy`` confidence model
    true detections score ``Beta(6, 2)`` and false ones ``Beta(2, 4)``, so the
    confidence threshold has something to filter.

    Randomness comes from a generator keyed on ``(seed, crc32(block_id), row,
    col)``, so serial and parallel runs agree bit for bit.
    """

    name = "oracle"
    deterministic = True

    def __init__(
        self,
        truth: Union[AnnotationSet, Mapping[str, AnnotationSet]],
        config: OracleBackendConfig = OracleBackendConfig(),
        confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    ):
        if isinstance(truth, AnnotationSet):
            truth = {truth.block_id: truth}
        self.truth = dict(truth)
        self.config = config
        self.confidence_threshold = confidence_threshold

    def _rng(self, patch: PatchRef, block_id: str) -> np.random.Generator:
        key = [self.config.seed, zlib.crc32(block_id.encode()), patch.row, patch.col]
        return np.random.default_rng(np.random.SeedSequence(key))

    def detect_patch(self, patch: PatchRef, block_id: str) -> List[DetectionRecord]:
        try:
            ann = self.truth[block_id]
        except KeyError:
            raise DataError(f"oracle backend has no ground truth for block {block_id!r}") from None
        cfg = self.config
        rng = self._rng(patch, block_id)
        gts = ann.boxes.get(patch.key, ())
        out = []
        for b in gts:
            # draw every variate so the stream layout is independent of outcomes
            missed = rng.random() < cfg.miss_rate
            dx, dy = rng.normal(0.0, 1.0, size=2) * cfg.center_jitter_px
            conf = self._confidence(rng, true_positive=True)
            if missed:
                continue
            cx = min(max(b.cx + dx, 0.0), patch.w - 1e-9)
            cy = min(max(b.cy + dy, 0.0), patch.h - 1e-9)
            out.append(DetectionRecord(BoundingBox(cx, cy, b.w, b.h), conf, patch))
        n_fp = rng.poisson(cfg.false_positive_rate_per_patch) if cfg.false_positive_rate_per_patch else 0
        if n_fp:
            size = float(np.median([b.w for b in gts])) if gts else 36.0
            for _ in range(n_fp):
                cx = rng.uniform(0, patch.w)
                cy = rng.uniform(0, patch.h)
                conf = self._confidence(rng, true_positive=False)
                out.append(DetectionRecord(BoundingBox(cx, cy, size, size), conf, patch))
        return out

    def _confidence(self, rng, true_positive: bool) -> float:
        if self.config.confidence_model == "constant":
            return self.config.constant_confidence
        return float(rng.beta(6, 2) if true_positive else rng.beta(2, 4))


def detect_block(
    backend: DetectorBackend,
    grid: PatchGrid,
    block_id: str,
    confidence_threshold: Optional[float] = None,
    max_workers: Optional[int] = None,
) -> PerPatchDetections:
    """Run ``backend`` on every patch and keep detections above threshold.

    Returns a mapping ``(row, col) -> list`` covering every grid patch, in
    row-major order.  ``max_workers > 1`` runs patches on a thread pool.
    """
    threshold = backend.confidence_threshold if confidence_threshold is None else confidence_threshold
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError("confidence threshold must lie in [0, 1]")

    def run(p: PatchRef):
        return [d for d in backend.detect_patch(p, block_id) if d.confidence >= threshold]

    patches = list(grid)
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, patches))
    else:
        results = [run(p) for p in patches]
    if isinstance(backend, FileBackend) and not backend.strict:
        n_missing = sum(
            not (backend.detections_dir / label_filename(block_id, p.row, p.col)).exists()
            for p in patches
        )
        if n_missing:
            logger.warning(
                "block %s: %d of %d patches have no detection file (counted as empty)",
                block_id, n_missing, len(patches),
            )
    return {p.key: r for p, r in zip(patches, results)}


@dataclass(frozen=True)
class CountSummary:
    total: int
    per_patch_counts: Dict[Tuple[int, int], int]

    @property
    def n_patches(self) -> int:
        return len(self.per_patch_counts)


def count_by_detection(per_patch: Mapping[Tuple[int, int], Sequence]) -> CountSummary:
    counts = {k: len(v) for k, v in per_patch.items()}
    return CountSummary(sum(counts.values()), counts)
