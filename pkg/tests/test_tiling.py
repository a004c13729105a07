import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from moundcount.errors import DataError, ValidationError
from moundcount.tiling import (
    EdgePolicy,
    OrthomosaicMeta,
    PatchGrid,
    build_grid,
    mosaic_to_patch,
    patch_to_mosaic,
    read_sidecar,
    write_sidecar,
)


def coverage(grid):
    """Count how often each pixel of the image is covered by a patch rectangle."""
    hits = np.zeros((grid.height_px, grid.width_px), dtype=int)
    for p in grid:
        hits[p.origin_y:p.origin_y + p.h, p.origin_x:p.origin_x + p.w] += 1
    return hits


class TestGridShape:
    def test_exact_multiple(self):
        g = PatchGrid(832, 832, 416)
        assert (g.rows, g.cols, g.n_patches) == (2, 2, 4)
        assert [p.key for p in g] == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_partial_edges(self):
        g = PatchGrid(1000, 1000, 416, EdgePolicy.PARTIAL)
        assert (g.rows, g.cols) == (3, 3)
        assert g.patch(0, 2).w == 168
        assert g.patch(2, 0).h == 168
        assert g.patch(1, 1).w == 416

    def test_pad_keeps_full_size(self):
        g = PatchGrid(1000, 1000, 416, EdgePolicy.PAD)
        assert (g.rows, g.cols) == (3, 3)
        assert g.patch(2, 2).w == 416 and g.patch(2, 2).h == 416

    def test_drop_discards_remainder(self):
        g = PatchGrid(1000, 1000, 416, EdgePolicy.DROP)
        assert (g.rows, g.cols) == (2, 2)
        assert g.covered_extent() == (832, 832)

    def test_large_orthomosaic(self):
        g = PatchGrid(23610, 18151, 416)
        assert (g.cols, g.rows) == (57, 44)
        assert g.n_patches == 57 * 44

    def test_drop_larger_than_image_rejected(self):
        with pytest.raises(ValidationError):
            PatchGrid(100, 100, 416, EdgePolicy.DROP)

    @pytest.mark.parametrize("size", [0, -3, 2.5])
    def test_bad_patch_size(self, size):
        with pytest.raises(ValidationError):
            PatchGrid(100, 100, size)

    def test_edge_policy_from_string(self):
        g = build_grid(OrthomosaicMeta("B", 500, 300, 1.0), 128, "drop")
        assert g.edge_policy is EdgePolicy.DROP

    def test_row_major_index(self):
        g = PatchGrid(1000, 700, 200)
        np.testing.assert_array_equal([p.index for p in g], np.arange(g.n_patches))


class TestPartition:
    def test_partial_partition_exhaustive(self):
        for size in range(1, 17):
            for w in range(1, 65, 7):
                for h in range(1, 65, 5):
                    g = PatchGrid(w, h, size, EdgePolicy.PARTIAL)
                    assert np.all(coverage(g) == 1), (w, h, size)

    def test_drop_disjoint_and_inside(self):
        for size in range(1, 17):
            for w in range(size, 65, 9):
                g = PatchGrid(w, w, size, EdgePolicy.DROP)
                hits = coverage(g)
                assert hits.max() == 1
                assert hits.sum() == g.n_patches * size * size

    @given(st.integers(1, 400), st.integers(1, 400), st.integers(1, 64))
    def test_partial_areas_sum_to_image(self, w, h, size):
        g = PatchGrid(w, h, size)
        assert sum(p.w * p.h for p in g) == w * h


class TestCoordinates:
    def test_patch_to_mosaic_example(self):
        g = PatchGrid(832, 832, 416)
        assert patch_to_mosaic(g.patch(0, 1), 10, 10) == (426, 10)

    def test_mosaic_to_patch_example(self):
        g = PatchGrid(832, 832, 416)
        p, lx, ly = mosaic_to_patch(g, 500.5, 20.0)
        assert p.key == (0, 1)
        assert (lx, ly) == pytest.approx((84.5, 20.0))

    @given(st.integers(1, 2000), st.integers(1, 2000), st.integers(1, 500), st.data())
    def test_round_trip(self, w, h, size, data):
        g = PatchGrid(w, h, size)
        x = data.draw(st.floats(0, w, exclude_max=True))
        y = data.draw(st.floats(0, h, exclude_max=True))
        p, lx, ly = g.mosaic_to_patch(x, y)
        mx, my = p.to_mosaic(lx, ly)
        assert mx == pytest.approx(x, abs=1e-9)
        assert my == pytest.approx(y, abs=1e-9)

    def test_outside_rejected(self):
        g = PatchGrid(1000, 1000, 416, EdgePolicy.DROP)
        with pytest.raises(ValidationError):
            g.mosaic_to_patch(900, 10)
        with pytest.raises(ValidationError):
            g.patch(0, 1).to_mosaic(-1, 0)
        with pytest.raises(ValidationError):
            g.patch(2, 0)


class TestSidecar:
    def test_round_trip(self, tmp_path):
        meta = OrthomosaicMeta("T16", 23610, 18151, 7.72, 3.0)
        write_sidecar(meta, tmp_path / "s.json")
        assert read_sidecar(tmp_path / "s.json") == meta

    def test_missing_field(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"id": "B", "width_px": 10}))
        with pytest.raises(DataError):
            read_sidecar(tmp_path / "s.json")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_sidecar(tmp_path / "nope.json")

    def test_invalid_values(self):
        with pytest.raises(ValidationError):
            OrthomosaicMeta("B", 0, 10, 1.0)
        with pytest.raises(ValidationError):
            OrthomosaicMeta("B", 10, 10, 0.0)
