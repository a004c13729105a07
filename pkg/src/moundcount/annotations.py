"""Boxes, detections and the per-patch label file format.

Label files
-----------
One text file per patch, named ``{block}_{row}_{col}.txt``.  Each line is one
object::

    class cx cy w h          # ground truth
    class cx cy w h conf     # detector output

All geometry is normalized to the patch rectangle (``cx`` and ``w`` divided
by the patch width, ``cy`` and ``h`` by the patch height).  Centers must lie
in ``[0, 1]``.  Sizes must be positive and may exceed 1: a box is stored
unclipped even when it reaches past its patch, which on a narrow edge patch
can make it wider than the patch itself.  Blank lines and lines starting with ``#``
are ignored.  Values are written with ``repr`` so a write/read cycle loses at
most one rounding step of the normalization.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import DataError, LabelParseError, ValidationError
from .tiling import PatchGrid, PatchRef

logger = logging.getLogger(__name__)

MOUND_CLASS = 0
_NAME_RE = re.compile(r"^(?P<block>.+)_(?P<row>\d+)_(?P<col>\d+)$")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box given by its center and size, in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValidationError(f"box size must be positive, got w={self.w}, h={self.h}")
        if not all(math.isfinite(v) for v in (self.cx, self.cy, self.w, self.h)):
            raise ValidationError("box coordinates must be finite")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def xyxy(self) -> Tuple[float, float, float, float]:
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    @classmethod
    def from_xyxy(cls, x0, y0, x1, y1) -> "BoundingBox":
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.cx + dx, self.cy + dy, self.w, self.h)


@dataclass(frozen=True)
class DetectionRecord:
    box: BoundingBox
    confidence: float
    patch: Optional[PatchRef] = None
    class_id: int = MOUND_CLASS

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class AnnotationSet:
    """Ground-truth boxes of one block, grouped by patch ``(row, col)``.

    Only the listed patches are part of the set; a listed patch may hold an
    empty tuple (annotated, no mounds).
    """

    block_id: str
    grid: PatchGrid = field(repr=False)
    boxes: Mapping[Tuple[int, int], Tuple[BoundingBox, ...]] = field(default_factory=dict)

    def __post_init__(self):
        frozen = {}
        for key, items in self.boxes.items():
            r, c = key
            self.grid.patch(r, c)
            frozen[(int(r), int(c))] = tuple(items)
        object.__setattr__(self, "boxes", dict(sorted(frozen.items())))

    @property
    def total_count(self) -> int:
        return sum(len(v) for v in self.boxes.values())

    @property
    def n_patches(self) -> int:
        return len(self.boxes)

    def patch_refs(self) -> List[PatchRef]:
        return [self.grid.patch(r, c) for r, c in self.boxes]

    def subset(self, keys: Iterable[Tuple[int, int]]) -> "AnnotationSet":
        keys = list(keys)
        return AnnotationSet(self.block_id, self.grid, {k: self.boxes.get(k, ()) for k in keys})


# -- label file format -------------------------------------------------------


def label_filename(block_id: str, row: int, col: int) -> str:
    return f"{block_id}_{row}_{col}.txt"


def parse_label_name(name: str) -> Tuple[str, int, int]:
    """Split ``{block}_{row}_{col}.txt`` into its parts."""
    stem = Path(name).stem
    m = _NAME_RE.match(stem)
    if m is None:
        raise DataError(f"label file name {name!r} does not match '{{block}}_{{row}}_{{col}}.txt'")
    return m["block"], int(m["row"]), int(m["col"])


def _parse_lines(text: str, path=None):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (5, 6):
            raise LabelParseError(
                f"expected 5 or 6 fields, got {len(parts)}: {line!r}", lineno, path
            )
        try:
            cls_id = int(parts[0])
            values = [float(v) for v in parts[1:]]
        except ValueError:
            raise LabelParseError(f"non-numeric field in {line!r}", lineno, path) from None
        yield lineno, cls_id, values


def _check_normalized(lineno, cx, cy, w, h, path):
    for name, v in (("cx", cx), ("cy", cy)):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(
                f"{path or '<label>'}:{lineno}: normalized {name}={v} outside [0, 1]"
            )
    for name, v in (("w", w), ("h", h)):
        if not 0.0 < v:
            raise ValidationError(
                f"{path or '<label>'}:{lineno}: normalized {name}={v} must be positive"
            )


def _to_pixels(values, patch: Optional[PatchRef], normalized: bool, lineno, path):
    cx, cy, w, h = values[:4]
    if normalized:
        _check_normalized(lineno, cx, cy, w, h, path)
        if patch is None:
            raise ValidationError("a PatchRef is required to de-normalize label coordinates")
        cx, cy, w, h = cx * patch.w, cy * patch.h, w * patch.w, h * patch.h
    try:
        return BoundingBox(cx, cy, w, h)
    except ValidationError as exc:
        raise LabelParseError(str(exc), lineno, path) from None


def parse_label_file(
    text: str, patch: Optional[PatchRef] = None, normalized: bool = True, path=None
) -> List[BoundingBox]:
    """Parse ground-truth label text into boxes in patch-pixel units.

    A trailing confidence field, if present, is ignored.
    """
    return [
        _to_pixels(values, patch, normalized, lineno, path)
        for lineno, _, values in _parse_lines(text, path)
    ]


def parse_detection_file(
    text: str, patch: Optional[PatchRef] = None, normalized: bool = True, path=None
) -> List[DetectionRecord]:
    """Parse detector output (``class cx cy w h conf``) into records."""
    out = []
    for lineno, cls_id, values in _parse_lines(text, path):
        if len(values) != 5:
            raise LabelParseError("detection line lacks a confidence field", lineno, path)
        box = _to_pixels(values, patch, normalized, lineno, path)
        conf = values[4]
        if not 0.0 <= conf <= 1.0:
            raise ValidationError(f"{path or '<label>'}:{lineno}: confidence {conf} outside [0, 1]")
        out.append(DetectionRecord(box, conf, patch, cls_id))
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_boxes(boxes: Sequence[BoundingBox], patch: PatchRef, class_id: int = MOUND_CLASS) -> str:
    lines = []
    for b in boxes:
        lines.append(
            f"{class_id} {_fmt(b.cx / patch.w)} {_fmt(b.cy / patch.h)} "
            f"{_fmt(b.w / patch.w)} {_fmt(b.h / patch.h)}"
        )
    return "".join(line + "\n" for line in lines)


def serialize_detections(dets: Sequence[DetectionRecord], patch: PatchRef) -> str:
    lines = []
    for d in dets:
        b = d.box
        lines.append(
            f"{d.class_id} {_fmt(b.cx / patch.w)} {_fmt(b.cy / patch.h)} "
            f"{_fmt(b.w / patch.w)} {_fmt(b.h / patch.h)} {_fmt(d.confidence)}"
        )
    return "".join(line + "\n" for line in lines)


def write_annotation_set(ann: AnnotationSet, directory: Union[str, Path], skip_empty: bool = False) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for (r, c), boxes in ann.boxes.items():
        if skip_empty and not boxes:
            continue
        p = directory / label_filename(ann.block_id, r, c)
        p.write_text(serialize_boxes(boxes, ann.grid.patch(r, c)))
        written.append(p)
    return written


def _block_files(directory: Path, block_id: str):
    for path in sorted(directory.glob(f"{glob_escape(block_id)}_*_*.txt")):
        try:
            name_block, r, c = parse_label_name(path.name)
        except DataError:
            continue
        if name_block == block_id:
            yield path, r, c


def glob_escape(s: str) -> str:
    return re.sub(r"([\[\]*?])", r"[\1]", s)


def read_annotation_set(directory: Union[str, Path], block_id: str, grid: PatchGrid) -> AnnotationSet:
    """Read every ``{block_id}_{row}_{col}.txt`` in ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"label directory {directory} does not exist")
    boxes = {}
    for path, r, c in _block_files(directory, block_id):
        if not (0 <= r < grid.rows and 0 <= c < grid.cols):
            raise DataError(f"{path.name}: patch ({r}, {c}) outside the {grid.rows}x{grid.cols} grid")
        boxes[(r, c)] = parse_label_file(path.read_text(), grid.patch(r, c), path=path)
    return AnnotationSet(block_id, grid, boxes)


def write_detections(
    per_patch: Mapping[Tuple[int, int], Sequence[DetectionRecord]],
    grid: PatchGrid,
    block_id: str,
    directory: Union[str, Path],
    skip_empty: bool = True,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for (r, c), dets in sorted(per_patch.items()):
        if skip_empty and not dets:
            continue
        (directory / label_filename(block_id, r, c)).write_text(
            serialize_detections(dets, grid.patch(r, c))
        )


# -- reframing ---------------------------------------------------------------


def to_mosaic_frame(
    source: Union[AnnotationSet, Mapping[Tuple[int, int], Sequence[DetectionRecord]], Sequence[DetectionRecord]],
) -> list:
    """Shift patch-local geometry by each patch origin.

    An ``AnnotationSet`` yields a flat list of boxes; detections (either a
    per-patch mapping or a flat sequence) yield records whose boxes are in
    mosaic pixels.  Sizes are never changed.
    """
    if isinstance(source, AnnotationSet):
        out = []
        for (r, c), boxes in source.boxes.items():
            p = source.grid.patch(r, c)
            out.extend(b.shifted(p.origin_x, p.origin_y) for b in boxes)
        return out
    records = source.values() if isinstance(source, Mapping) else [source]
    out = []
    for group in records:
        for d in group:
            if d.patch is None:
                raise ValidationError("detection without a PatchRef cannot be reframed")
            out.append(replace(d, box=d.box.shifted(d.patch.origin_x, d.patch.origin_y)))
    return out
