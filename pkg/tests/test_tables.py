import pytest

from moundcount.tables import (
    check_all,
    check_significance,
    check_table1,
    check_table3,
    check_table4,
    format_checks,
    read_golden,
    table4_rp_columns,
)


def failing(checks):
    return {(c.table, c.row, c.column) for c in checks if not c.ok}


class TestGoldenFiles:
    def test_shapes(self):
        assert len(read_golden("table1_detection_folds.csv")) == 18
        assert len(read_golden("table3_correction_ablation.csv")) == 6
        assert len(read_golden("table4_test_blocks.csv")) == 12
        assert len(read_golden("g2_block_features.csv")) == 12

    def test_raw_fraction_cells_flagged(self):
        flagged = [c for c in check_table1() if c.note]
        assert {c.row for c in flagged} == {"fold3/m3", "fold5/m3"}


class TestKnownDiscrepancies:
    """Cells whose printed value disagrees with its own printed inputs."""

    def test_table1(self):
        assert failing(check_table1()) == {("table1", "fold5/m2", "f1")}

    def test_table3(self):
        assert failing(check_table3()) == {("table3", "T1", "improvement")}

    def test_table4(self):
        assert failing(check_table4()) == {
            ("table4", "T16", "yolo_rp"),
            ("table4", "overall", "frcnn_total"),
            ("table4", "overall", "frcnn_overall_rp"),
            ("table4", "average", "frcnn_average_rp"),
            ("table4", "overall", "ours_total"),
        }

    def test_reported_p_is_two_sided(self):
        one = {c.column: c for c in check_significance(alternative="less")}
        two = {c.column: c for c in check_significance(alternative="two-sided")}
        assert one["t_statistic"].ok and two["t_statistic"].ok
        assert one["p_value"].computed == pytest.approx(two["p_value"].computed / 2)
        assert two["p_value"].ok and not one["p_value"].ok


class TestRpColumns:
    def test_counts_close_to_printed(self):
        printed, counts = table4_rp_columns("printed"), table4_rp_columns("counts")
        for m in ("yolo", "ours"):
            assert max(abs(a - b) for a, b in zip(printed[m], counts[m])) < 0.8

    def test_unknown_source(self):
        with pytest.raises(ValueError):
            table4_rp_columns("other")


def test_format():
    text = format_checks(check_all())
    assert text.strip().endswith(f"{sum(c.ok for c in check_all())}/{len(check_all())} cells reproduced within tolerance")
