"""Orthomosaic metadata and regular non-overlapping patch grids.

A grid splits the pixel space of one orthomosaic into square cells of
``patch_size_px``.  Borders that are not a multiple of the patch size are
handled according to an edge policy:

``partial``
    keep truncated edge patches (default; no mound is ever dropped).
``pad``
    every patch is full size, the last row/column extends past the image.
``drop``
    discard incomplete border patches.

Only metadata is needed; raster decoding is never required.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Union

from .errors import DataError, ValidationError


class EdgePolicy(str, Enum):
    PAD = "pad"
    PARTIAL = "partial"
    DROP = "drop"


@dataclass(frozen=True)
class OrthomosaicMeta:
    id: str
    width_px: int
    height_px: int
    area_ha: float
    gsd_cm_per_px: Optional[float] = None

    def __post_init__(self):
        if int(self.width_px) < 1 or int(self.height_px) < 1:
            raise ValidationError(
                f"orthomosaic {self.id!r}: width and height must be >= 1 px, "
                f"got {self.width_px}x{self.height_px}"
            )
        if not self.area_ha > 0:
            raise ValidationError(f"orthomosaic {self.id!r}: area_ha must be > 0")
        if self.gsd_cm_per_px is not None and not self.gsd_cm_per_px > 0:
            raise ValidationError(f"orthomosaic {self.id!r}: gsd_cm_per_px must be > 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["gsd_cm_per_px"] is None:
            del d["gsd_cm_per_px"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OrthomosaicMeta":
        missing = {"id", "width_px", "height_px", "area_ha"} - set(d)
        if missing:
            raise DataError(f"sidecar is missing fields: {sorted(missing)}")
        try:
            return cls(
                id=str(d["id"]),
                width_px=int(d["width_px"]),
                height_px=int(d["height_px"]),
                area_ha=float(d["area_ha"]),
                gsd_cm_per_px=(
                    None if d.get("gsd_cm_per_px") is None else float(d["gsd_cm_per_px"])
                ),
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"sidecar has a malformed field: {exc}") from exc


def read_sidecar(path: Union[str, Path]) -> OrthomosaicMeta:
    """Load an orthomosaic metadata sidecar (a single JSON object)."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON sidecar ({exc})") from exc
    except FileNotFoundError:
        raise DataError(f"sidecar {path} does not exist") from None
    if not isinstance(payload, dict):
        raise DataError(f"{path}: sidecar must be a JSON object")
    return OrthomosaicMeta.from_dict(payload)


def write_sidecar(meta: OrthomosaicMeta, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(meta.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class PatchGrid:
    width_px: int
    height_px: int
    patch_size_px: int
    edge_policy: EdgePolicy = EdgePolicy.PARTIAL
    cols: int = field(init=False)
    rows: int = field(init=False)

    def __post_init__(self):
        policy = EdgePolicy(self.edge_policy)
        object.__setattr__(self, "edge_policy", policy)
        size = self.patch_size_px
        if int(size) != size or size < 1:
            raise ValidationError(f"patch_size_px must be a positive integer, got {size!r}")
        if self.width_px < 1 or self.height_px < 1:
            raise ValidationError("image dimensions must be >= 1 px")
        if policy is EdgePolicy.DROP:
            cols, rows = self.width_px // size, self.height_px // size
            if cols == 0 or rows == 0:
                raise ValidationError(
                    f"patch size {size} exceeds {self.width_px}x{self.height_px} "
                    "under edge policy 'drop'; the grid would be empty"
                )
        else:
            cols, rows = math.ceil(self.width_px / size), math.ceil(self.height_px / size)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "rows", rows)

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    def patch(self, row: int, col: int) -> "PatchRef":
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise ValidationError(
                f"patch ({row}, {col}) outside a {self.rows}x{self.cols} grid"
            )
        return PatchRef(self, row, col)

    def __iter__(self) -> Iterator["PatchRef"]:
        for r in range(self.rows):
            for c in range(self.cols):
                yield PatchRef(self, r, c)

    def covered_extent(self) -> tuple:
        """Width and height of the image area covered by patch rectangles."""
        if self.edge_policy is EdgePolicy.DROP:
            return self.cols * self.patch_size_px, self.rows * self.patch_size_px
        return self.width_px, self.height_px

    def mosaic_to_patch(self, x: float, y: float) -> tuple:
        """Locate mosaic pixel ``(x, y)``; returns ``(PatchRef, local_x, local_y)``."""
        ext_w, ext_h = self.covered_extent()
        if not (0 <= x < ext_w and 0 <= y < ext_h):
            raise ValidationError(
                f"mosaic coordinate ({x}, {y}) outside covered area {ext_w}x{ext_h}"
            )
        size = self.patch_size_px
        col, row = int(x // size), int(y // size)
        p = PatchRef(self, row, col)
        return p, x - p.origin_x, y - p.origin_y


@dataclass(frozen=True)
class PatchRef:
    grid: PatchGrid = field(repr=False)
    row: int
    col: int

    def __post_init__(self):
        if not (0 <= self.row < self.grid.rows and 0 <= self.col < self.grid.cols):
            raise ValidationError(
                f"patch ({self.row}, {self.col}) outside a "
                f"{self.grid.rows}x{self.grid.cols} grid"
            )

    @property
    def origin_x(self) -> int:
        return self.col * self.grid.patch_size_px

    @property
    def origin_y(self) -> int:
        return self.row * self.grid.patch_size_px

    @property
    def w(self) -> int:
        size = self.grid.patch_size_px
        if self.grid.edge_policy is EdgePolicy.PARTIAL:
            return min(size, self.grid.width_px - self.origin_x)
        return size

    @property
    def h(self) -> int:
        size = self.grid.patch_size_px
        if self.grid.edge_policy is EdgePolicy.PARTIAL:
            return min(size, self.grid.height_px - self.origin_y)
        return size

    @property
    def index(self) -> int:
        """Row-major linear index within the grid."""
        return self.row * self.grid.cols + self.col

    @property
    def key(self) -> tuple:
        return (self.row, self.col)

    def to_mosaic(self, x: float, y: float) -> tuple:
        if not (0 <= x < self.w and 0 <= y < self.h):
            raise ValidationError(
                f"local coordinate ({x}, {y}) outside patch {self.key} of size {self.w}x{self.h}"
            )
        return self.origin_x + x, self.origin_y + y


def build_grid(
    meta: OrthomosaicMeta,
    patch_size_px: int,
    edge_policy: Union[EdgePolicy, str] = EdgePolicy.PARTIAL,
) -> PatchGrid:
    return PatchGrid(meta.width_px, meta.height_px, patch_size_px, EdgePolicy(edge_policy))


def patch_to_mosaic(p: PatchRef, x: float, y: float) -> tuple:
    return p.to_mosaic(x, y)


def mosaic_to_patch(grid: PatchGrid, x: float, y: float) -> tuple:
    return grid.mosaic_to_patch(x, y)
