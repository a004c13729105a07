"""Detection and counting metrics.

Detections are matched to ground truth greedily in descending confidence:
each detection takes the still-unmatched ground-truth box with the highest
IoU, provided it reaches ``iou_threshold``.  Ties in confidence keep input
order and ties in IoU go to the lower ground-truth index.

Undefined ratios (an empty denominator in precision, recall or F1) are
reported as 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .annotations import BoundingBox, DetectionRecord
from .errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.5


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ax0, ay0, ax1, ay1 = a.xyxy
    bx0, by0, bx1, by1 = b.xyxy
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _as_xyxy(boxes: Sequence[BoundingBox]) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4))
    return np.array([b.xyxy for b in boxes], dtype=float)


def iou_matrix(dets: Sequence[BoundingBox], gts: Sequence[BoundingBox]) -> np.ndarray:
    """Dense ``len(dets) x len(gts)`` IoU matrix."""
    a, b = _as_xyxy(dets), _as_xyxy(gts)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0, inter / np.where(union > 0, union, 1.0), 0.0)


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    # (detection index, gt index, IoU); detection indices refer to the input order
    pairs: Tuple[Tuple[int, int, float], ...] = ()
    # detection indices in the order they were processed (descending confidence)
    order: Tuple[int, ...] = field(default=(), repr=False)
    # per processed detection: matched or not, aligned with ``order``
    is_tp: Tuple[bool, ...] = field(default=(), repr=False)


def _split(dets):
    boxes, confs = [], []
    for d in dets:
        if isinstance(d, DetectionRecord):
            boxes.append(d.box)
            confs.append(d.confidence)
        else:
            boxes.append(d)
            confs.append(1.0)
    return boxes, np.asarray(confs, dtype=float)


def _candidates(det_boxes, gt_boxes):
    """Per detection, the ground-truth indices it could overlap (sorted)."""
    n_det, n_gt = len(det_boxes), len(gt_boxes)
    if n_det * n_gt <= 250_000:
        m = iou_matrix(det_boxes, gt_boxes)
        return [(np.nonzero(row > 0)[0], row[row > 0]) for row in m]
    # large blocks: prune with a KD-tree on centers; two boxes can only overlap
    # when their centers are closer than half the sum of their diagonals
    gt_centers = np.array([(b.cx, b.cy) for b in gt_boxes])
    gt_diag = np.array([np.hypot(b.w, b.h) for b in gt_boxes])
    tree = cKDTree(gt_centers)
    half_max = gt_diag.max() / 2
    out = []
    for d in det_boxes:
        idx = np.array(sorted(tree.query_ball_point((d.cx, d.cy), np.hypot(d.w, d.h) / 2 + half_max)), dtype=int)
        if idx.size == 0:
            out.append((idx, np.zeros(0)))
            continue
        ious = iou_matrix([d], [gt_boxes[i] for i in idx])[0]
        keep = ious > 0
        out.append((idx[keep], ious[keep]))
    return out


def match_detections(dets, gts: Sequence[BoundingBox], iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> MatchResult:
    """Greedy one-to-one matching of detections to ground truth.

    ``dets`` may be ``DetectionRecord`` objects or bare boxes (treated as
    confidence 1).  Both collections must be in the same coordinate frame.
    """
    if not 0 < iou_threshold <= 1:
        raise ValidationError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    det_boxes, confs = _split(dets)
    n_det, n_gt = len(det_boxes), len(gts)
    order = np.argsort(-confs, kind="stable")
    if n_det == 0 or n_gt == 0:
        return MatchResult(0, n_det, n_gt, (), tuple(int(i) for i in order), (False,) * n_det)
    cand = _candidates(det_boxes, list(gts))
    taken = np.zeros(n_gt, dtype=bool)
    pairs, is_tp = [], []
    for i in order:
        idx, ious = cand[i]
        best, best_iou = -1, -1.0
        for g, v in zip(idx, ious):
            if not taken[g] and v >= iou_threshold and v > best_iou:
                best, best_iou = int(g), float(v)
        if best >= 0:
            taken[best] = True
            pairs.append((int(i), best, best_iou))
            is_tp.append(True)
        else:
            is_tp.append(False)
    tp = len(pairs)
    return MatchResult(tp, n_det - tp, n_gt - tp, tuple(pairs), tuple(int(i) for i in order), tuple(is_tp))


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def _ratio(num, den, what):
    if den == 0:
        logger.debug("%s undefined (empty denominator); reporting 0", what)
        return 0.0
    return num / den


def precision_recall_f1(m: MatchResult) -> PRF:
    return PRF(
        _ratio(m.tp, m.tp + m.fp, "precision"),
        _ratio(m.tp, m.tp + m.fn, "recall"),
        _ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn, "F1"),
    )


def f1_from_pr(p: float, r: float) -> float:
    """Harmonic mean of precision and recall (same value as 2TP/(2TP+FP+FN))."""
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall after each detection, in descending confidence."""

    recall: np.ndarray
    precision: np.ndarray
    interpolated: np.ndarray

    @classmethod
    def from_flags(cls, is_tp: Sequence[bool], n_gt: int) -> "PRCurve":
        if n_gt <= 0:
            raise ValidationError("a PR curve needs at least one ground-truth box")
        flags = np.asarray(is_tp, dtype=bool)
        tp = np.cumsum(flags)
        fp = np.cumsum(~flags)
        recall = tp / n_gt
        precision = tp / np.maximum(tp + fp, 1)
        # running max from the right: best precision at any recall >= R_i
        interpolated = np.maximum.accumulate(precision[::-1])[::-1] if flags.size else precision
        return cls(recall, precision, interpolated)

    def average_precision(self) -> float:
        if self.recall.size == 0:
            return 0.0
        r_prev = np.concatenate(([0.0], self.recall[:-1]))
        return float(np.sum((self.recall - r_prev) * self.interpolated))


def pr_curve(dets, gts, iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> PRCurve:
    m = match_detections(dets, gts, iou_threshold)
    return PRCurve.from_flags(m.is_tp, len(gts))


def average_precision(dets, gts, iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> float:
    """All-point interpolated AP: sum of recall steps times envelope precision."""
    if len(gts) == 0:
        raise ValidationError("average precision is undefined without ground-truth boxes")
    return pr_curve(dets, gts, iou_threshold).average_precision()


def relative_precision(predicted: float, gt: float) -> float:
    """``1 - |predicted - gt| / gt``; negative once the error exceeds 100 %."""
    if not gt > 0:
        raise ValidationError(f"ground-truth count must be positive, got {gt}")
    return 1.0 - abs(predicted - gt) / gt


@dataclass(frozen=True)
class DetectionScores:
    precision: float
    recall: float
    ap: float
    f1: float
    match: MatchResult = field(repr=False)


def evaluate_detections(dets, gts, iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> DetectionScores:
    m = match_detections(dets, gts, iou_threshold)
    prf = precision_recall_f1(m)
    ap = PRCurve.from_flags(m.is_tp, len(gts)).average_precision() if len(gts) else 0.0
    return DetectionScores(prf.precision, prf.recall, ap, prf.f1, m)
