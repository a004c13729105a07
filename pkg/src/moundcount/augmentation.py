"""Bounding-box augmentation by random size change and translation.

Each source box receives one transform, drawn uniformly from
``{"size", "translation"}``:

* size: both sides scaled by the same factor ``Z``;
* translation: the center moves by ``L`` pixels in direction ``alpha``.

Only box geometry changes; the patch pixels are reused as-is, so an augmented
label file describes an extra training sample for the same image patch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .annotations import BoundingBox, parse_label_file, parse_label_name, serialize_boxes
from .errors import ValidationError
from .tiling import PatchRef

logger = logging.getLogger(__name__)

SIZE = "size"
TRANSLATION = "translation"


@dataclass(frozen=True)
class AugmentationConfig:
    z_range: Tuple[float, float] = (0.8, 1.2)
    l_range: Tuple[float, float] = (1.0, 10.0)
    alpha_range: Tuple[float, float] = (0.0, 2 * math.pi)
    seed: int = 0
    boxes_per_source: int = 1
    # clipped boxes keeping less than this share of their area are discarded
    min_area_fraction: float = 0.25

    def __post_init__(self):
        z0, z1 = self.z_range
        l0, l1 = self.l_range
        a0, a1 = self.alpha_range
        if not (0 < z0 <= z1 < math.inf):
            raise ValidationError(f"z_range must satisfy 0 < min <= max, got {self.z_range}")
        if not (0 <= l0 <= l1 < math.inf):
            raise ValidationError(f"l_range must satisfy 0 <= min <= max, got {self.l_range}")
        if not (0 <= a0 <= a1 <= 2 * math.pi):
            raise ValidationError(f"alpha_range must lie within [0, 2*pi], got {self.alpha_range}")
        if self.boxes_per_source < 1:
            raise ValidationError("boxes_per_source must be >= 1")
        if not 0 <= self.min_area_fraction <= 1:
            raise ValidationError("min_area_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class AugmentStep:
    """One transform applied to one source box, before clipping."""

    source_index: int
    transform: str
    params: Tuple[float, ...]
    source: BoundingBox
    box: BoundingBox


def resize_box(b: BoundingBox, Z: float) -> BoundingBox:
    if not Z > 0:
        raise ValidationError(f"scale factor must be positive, got {Z}")
    return BoundingBox(b.cx, b.cy, b.w * Z, b.h * Z)


def translate_box(b: BoundingBox, L: float, alpha: float) -> BoundingBox:
    if L < 0:
        raise ValidationError(f"translation amount must be >= 0, got {L}")
    return BoundingBox(b.cx + L * math.cos(alpha), b.cy + L * math.sin(alpha), b.w, b.h)


def patch_rng(seed: int, patch: Optional[PatchRef]) -> np.random.Generator:
    """Generator for one patch, derived from ``(seed, row, col)``.

    Patches never share a stream, so processing order and parallelism do not
    change results.
    """
    key = [int(seed)] if patch is None else [int(seed), patch.row, patch.col]
    return np.random.default_rng(np.random.SeedSequence(key))


def iter_augmentations(
    boxes: Sequence[BoundingBox], cfg: AugmentationConfig, rng: np.random.Generator
) -> Iterator[AugmentStep]:
    for k in range(cfg.boxes_per_source):
        for i, b in enumerate(boxes):
            if rng.random() < 0.5:
                Z = rng.uniform(*cfg.z_range)
                yield AugmentStep(i, SIZE, (Z,), b, resize_box(b, Z))
            else:
                L = rng.uniform(*cfg.l_range)
                alpha = rng.uniform(*cfg.alpha_range)
                yield AugmentStep(i, TRANSLATION, (L, alpha), b, translate_box(b, L, alpha))


def clip_box(b: BoundingBox, width: float, height: float) -> Optional[BoundingBox]:
    x0, y0, x1, y1 = b.xyxy
    x0, y0 = max(x0, 0.0), max(y0, 0.0)
    x1, y1 = min(x1, float(width)), min(y1, float(height))
    if x1 <= x0 or y1 <= y0:
        return None
    return BoundingBox.from_xyxy(x0, y0, x1, y1)


def augment_patch(
    boxes: Sequence[BoundingBox],
    cfg: AugmentationConfig,
    patch: PatchRef,
    rng: Optional[np.random.Generator] = None,
) -> List[BoundingBox]:
    """Augmented copies of ``boxes``, clipped to the patch rectangle.

    Output order is replicate-major: all boxes of replicate 0, then
    replicate 1, and so on.  Boxes whose clipped area falls below
    ``cfg.min_area_fraction`` of the unclipped area are dropped.
    """
    if rng is None:
        rng = patch_rng(cfg.seed, patch)
    out = []
    for step in iter_augmentations(boxes, cfg, rng):
        clipped = clip_box(step.box, patch.w, patch.h)
        if clipped is None or clipped.area < cfg.min_area_fraction * step.box.area:
            logger.debug(
                "patch %s: dropped %s-augmented box %d (clipped away)",
                patch.key, step.transform, step.source_index,
            )
            continue
        out.append(clipped)
    return out


def augment_directory(
    labels_dir: Union[str, Path],
    grid_for_block,
    cfg: AugmentationConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> List[Path]:
    """Augment every label file of a directory.

    ``grid_for_block`` maps a block id to its ``PatchGrid``.  Files are
    written to ``out_dir`` (default: sibling directory with an ``_aug``
    suffix), one file ``{block}_{row}_{col}_aug{k}.txt`` per replicate; the
    source labels stay untouched, so augmentation adds samples.
    """
    labels_dir = Path(labels_dir)
    out_dir = Path(out_dir) if out_dir is not None else labels_dir.with_name(labels_dir.name + "_aug")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in sorted(labels_dir.glob("*.txt")):
        block_id, r, c = parse_label_name(path.name)
        patch = grid_for_block(block_id).patch(r, c)
        boxes = parse_label_file(path.read_text(), patch, path=path)
        rng = patch_rng(cfg.seed, patch)
        single = AugmentationConfig(
            cfg.z_range, cfg.l_range, cfg.alpha_range, cfg.seed, 1, cfg.min_area_fraction
        )
        for k in range(cfg.boxes_per_source):
            aug = augment_patch(boxes, single, patch, rng=rng)
            target = out_dir / f"{path.stem}_aug{k}.txt"
            target.write_text(serialize_boxes(aug, patch))
            written.append(target)
    return written
