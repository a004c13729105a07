"""Run configuration shared by the command-line tools."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from .augmentation import AugmentationConfig
from .detection import DEFAULT_CONFIDENCE_THRESHOLD
from .errors import DataError, ValidationError
from .estimator import DEFAULT_LAMBDA
from .metrics import DEFAULT_IOU_THRESHOLD
from .tiling import EdgePolicy

DEFAULT_PATCH_SIZE = 416


@dataclass(frozen=True)
class PipelineConfig:
    patch_size_px: int = DEFAULT_PATCH_SIZE
    edge_policy: str = EdgePolicy.PARTIAL.value
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    z_range: Tuple[float, float] = (0.8, 1.2)
    l_range: Tuple[float, float] = (1.0, 10.0)
    boxes_per_source: int = 1
    lam: float = DEFAULT_LAMBDA
    intercept: bool = False
    standardize: bool = False
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    seed: int = 0

    def __post_init__(self):
        EdgePolicy(self.edge_policy)
        if self.patch_size_px < 1:
            raise ValidationError("patch size must be >= 1")
        if not 0 <= self.confidence_threshold <= 1:
            raise ValidationError("confidence threshold must lie in [0, 1]")
        if not 0 < self.iou_threshold <= 1:
            raise ValidationError("IoU threshold must lie in (0, 1]")
        if self.lam < 0:
            raise ValidationError("lambda must be >= 0")
        object.__setattr__(self, "z_range", tuple(float(v) for v in self.z_range))
        object.__setattr__(self, "l_range", tuple(float(v) for v in self.l_range))

    def augmentation(self) -> AugmentationConfig:
        return AugmentationConfig(
            z_range=self.z_range, l_range=self.l_range, alpha_range=(0.0, 2 * math.pi),
            seed=self.seed, boxes_per_source=self.boxes_per_source,
        )

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["z_range"] = list(self.z_range)
        d["l_range"] = list(self.l_range)
        return d

    @classmethod
    def from_sources(cls, path: Optional[Union[str, Path]] = None, **overrides) -> "PipelineConfig":
        """Defaults, then a JSON config file, then explicit overrides (``None`` is skipped)."""
        values: Dict[str, Any] = {}
        known = {f.name for f in fields(cls)}
        if path is not None:
            try:
                loaded = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise DataError(f"cannot read config {path}: {exc}") from exc
            unknown = set(loaded) - known
            if unknown:
                raise ValidationError(f"unknown config keys: {sorted(unknown)}")
            values.update(loaded)
        values.update({k: v for k, v in overrides.items() if v is not None and k in known})
        return cls(**values)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
