"""Recompute the derived cells of the published result tables.

Every RP, F1, average and improvement is recomputed from the printed counts
and precision/recall pairs.  A handful of cells disagree with their own
inputs; they are listed at the end.
"""

from moundcount.tables import check_all, format_checks, table4_rp_columns
from moundcount.stats import paired_t_test

checks = check_all()
print(format_checks(checks, only_failures=True))

# The reported p-value of the detector comparison matches the two-sided test.
cols = table4_rp_columns("printed")
for alt in ("less", "two-sided"):
    res = paired_t_test(cols["yolo"], cols["ours"], alternative=alt)
    print(f"{alt:>9}: t = {res.t_statistic:.3f}, p = {res.p_value:.5f}")
