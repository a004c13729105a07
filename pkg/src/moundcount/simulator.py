"""Synthetic planting blocks with known ground truth.

A block is a rectangle of ``area_ha`` hectares rendered at a fixed ground
sampling distance, optionally surrounded by an unplanted margin.  The number
of planted positions is Poisson with mean ``area_ha * density_per_ha``;
positions follow a (optionally linearly varying) intensity and respect a
minimum pairwise separation, so mounds never overlap.  A Bernoulli share
``invisible_fraction`` of the positions is left out of the visible
annotations: they still count towards the ground truth, like mounds that
are occluded, eroded or destroyed.

No pixels are rendered; the output is geometry and labels only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .annotations import AnnotationSet, BoundingBox
from .errors import ValidationError
from .tiling import EdgePolicy, OrthomosaicMeta, PatchGrid, build_grid

logger = logging.getLogger(__name__)

M2_PER_HA = 10_000.0
FT_PATCHES = 11


@dataclass(frozen=True)
class SyntheticBlockSpec:
    block_id: str = "S0"
    area_ha: float = 10.0
    density_per_ha: float = 1000.0
    # relative intensity change across the block along x and y; 0 is uniform
    density_gradient: Tuple[float, float] = (0.0, 0.0)
    mound_size_px: Tuple[float, float] = (36.0, 4.0)
    invisible_fraction: float = 0.0
    border_margin_px: int = 0
    gsd_cm_per_px: float = 3.0
    aspect_ratio: float = 1.3
    patch_size_px: int = 416
    edge_policy: str = "partial"
    ft_patches: int = FT_PATCHES
    seed: int = 0

    def __post_init__(self):
        if not self.area_ha > 0:
            raise ValidationError(f"{self.block_id}: area_ha must be > 0")
        if not self.density_per_ha > 0:
            raise ValidationError(f"{self.block_id}: density_per_ha must be > 0")
        if not 0.0 <= self.invisible_fraction < 1.0:
            raise ValidationError(f"{self.block_id}: invisible_fraction must lie in [0, 1)")
        gx, gy = self.density_gradient
        if abs(gx) + abs(gy) > 2.0:
            raise ValidationError(f"{self.block_id}: density gradient would make the intensity negative")
        if self.mound_size_px[0] <= 0 or self.mound_size_px[1] < 0:
            raise ValidationError(f"{self.block_id}: mound size mean must be > 0 and std >= 0")
        if self.border_margin_px < 0:
            raise ValidationError(f"{self.block_id}: border_margin_px must be >= 0")
        if not (self.gsd_cm_per_px > 0 and self.aspect_ratio > 0):
            raise ValidationError(f"{self.block_id}: gsd and aspect ratio must be > 0")

    @property
    def expected_count(self) -> float:
        return self.area_ha * self.density_per_ha

    @property
    def planted_size_px(self) -> Tuple[int, int]:
        gsd_m = self.gsd_cm_per_px / 100.0
        area_px = self.area_ha * M2_PER_HA / gsd_m**2
        w = math.sqrt(area_px * self.aspect_ratio)
        return max(1, round(w)), max(1, round(area_px / w))

    @property
    def min_separation_px(self) -> float:
        return self.mound_size_px[0]


@dataclass(frozen=True)
class SyntheticBlock:
    spec: SyntheticBlockSpec
    meta: OrthomosaicMeta
    grid: PatchGrid = field(repr=False)
    annotations: AnnotationSet = field(repr=False)
    gt_count: int
    ft_sample: AnnotationSet = field(repr=False)
    centers: np.ndarray = field(repr=False)
    visible: np.ndarray = field(repr=False)

    @property
    def visible_count(self) -> int:
        return self.annotations.total_count

    @property
    def block_id(self) -> str:
        return self.meta.id


def _sample_positions(n, width, height, margin, gradient, min_sep, rng, max_rounds=200):
    """``n`` points in the planted rectangle, pairwise at least ``min_sep`` apart."""
    gx, gy = gradient

    def draw(k):
        out = np.empty((0, 2))
        peak = 1.0 + 0.5 * (abs(gx) + abs(gy))
        while len(out) < k:
            m = max(16, int(1.3 * (k - len(out)) * peak))
            pts = rng.uniform(0.0, 1.0, size=(m, 2))
            if gx or gy:
                intensity = 1.0 + gx * (pts[:, 0] - 0.5) + gy * (pts[:, 1] - 0.5)
                pts = pts[rng.uniform(0.0, peak, size=m) < intensity]
            out = np.vstack([out, pts])
        pts = out[:k]
        return np.column_stack([margin + pts[:, 0] * width, margin + pts[:, 1] * height])

    pts = draw(n)
    for _ in range(max_rounds):
        if n < 2 or min_sep <= 0:
            return pts
        pairs = cKDTree(pts).query_pairs(min_sep, output_type="ndarray")
        if len(pairs) == 0:
            return pts
        redo = np.unique(pairs.max(axis=1))
        pts[redo] = draw(len(redo))
    raise ValidationError(
        f"could not place {n} mounds {min_sep:.1f} px apart in {width}x{height} px; density too high"
    )


def generate_block(spec: SyntheticBlockSpec) -> SyntheticBlock:
    """Lay out one block and derive its annotations and fine-tuning sample."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    inner_w, inner_h = spec.planted_size_px
    margin = spec.border_margin_px
    meta = OrthomosaicMeta(
        spec.block_id, inner_w + 2 * margin, inner_h + 2 * margin, spec.area_ha, spec.gsd_cm_per_px
    )
    grid = build_grid(meta, spec.patch_size_px, EdgePolicy(spec.edge_policy))

    gt_count = int(rng.poisson(spec.expected_count))
    centers = _sample_positions(
        gt_count, inner_w, inner_h, margin, spec.density_gradient, spec.min_separation_px, rng
    )
    # stay strictly inside the raster so every center maps to a patch
    centers = np.minimum(centers, np.array([meta.width_px, meta.height_px]) - 1e-6)
    mean, std = spec.mound_size_px
    sizes = np.clip(rng.normal(mean, std, size=(gt_count, 2)), max(2.0, 0.25 * mean), None)
    visible = rng.random(gt_count) >= spec.invisible_fraction

    ps = spec.patch_size_px
    boxes = {}
    ext_w, ext_h = grid.covered_extent()
    for (x, y), (w, h) in zip(centers[visible], sizes[visible]):
        if x >= ext_w or y >= ext_h:
            continue  # only reachable under the 'drop' edge policy
        r, c = int(y // ps), int(x // ps)
        boxes.setdefault((r, c), []).append(BoundingBox(x - c * ps, y - r * ps, float(w), float(h)))
    annotations = AnnotationSet(spec.block_id, grid, boxes)

    populated = [k for k, v in annotations.boxes.items() if v]
    n_ft = min(spec.ft_patches, len(populated))
    chosen = rng.choice(len(populated), size=n_ft, replace=False) if n_ft else []
    ft_sample = annotations.subset(sorted(populated[i] for i in chosen))
    return SyntheticBlock(spec, meta, grid, annotations, gt_count, ft_sample, centers, visible)


@dataclass(frozen=True)
class FleetDistribution:
    """Ranges from which block specifications are drawn (uniform unless noted)."""

    area_ha: Tuple[float, float] = (2.0, 20.0)  # log-uniform
    density_per_ha: Tuple[float, float] = (700.0, 1400.0)
    invisible_fraction: Tuple[float, float] = (0.1, 0.3)
    mound_size_px: Tuple[float, float] = (30.0, 42.0)
    gradient: float = 0.4
    border_margin_px: Tuple[int, int] = (0, 300)
    # fixed areas given to the first blocks, to cover the small-block regime
    fixed_areas: Tuple[float, ...] = (2.37, 3.09)
    patch_size_px: int = 416


def sample_fleet_specs(n_blocks: int, dist: FleetDistribution = FleetDistribution(), seed: int = 0,
                       prefix: str = "S") -> List[SyntheticBlockSpec]:
    if n_blocks < 2:
        raise ValidationError("a fleet needs at least two blocks")
    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    block_seeds = ss.spawn(n_blocks)
    lo, hi = np.log(dist.area_ha[0]), np.log(dist.area_ha[1])
    specs = []
    for i in range(n_blocks):
        area = dist.fixed_areas[i] if i < len(dist.fixed_areas) else float(np.exp(rng.uniform(lo, hi)))
        size_mean = rng.uniform(*dist.mound_size_px)
        specs.append(SyntheticBlockSpec(
            block_id=f"{prefix}{i + 1:02d}",
            area_ha=round(area, 2),
            density_per_ha=float(rng.uniform(*dist.density_per_ha)),
            density_gradient=tuple(float(g) for g in rng.uniform(-dist.gradient, dist.gradient, size=2)),
            mound_size_px=(float(size_mean), float(0.1 * size_mean)),
            invisible_fraction=float(rng.uniform(*dist.invisible_fraction)),
            border_margin_px=int(rng.integers(dist.border_margin_px[0], dist.border_margin_px[1] + 1)),
            patch_size_px=dist.patch_size_px,
            seed=int(block_seeds[i].generate_state(1)[0]),
        ))
    return specs


def generate_fleet(n_blocks: int, dist: FleetDistribution = FleetDistribution(), seed: int = 0,
                   prefix: str = "S") -> List[SyntheticBlock]:
    return [generate_block(s) for s in sample_fleet_specs(n_blocks, dist, seed, prefix)]
