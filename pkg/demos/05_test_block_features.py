"""Leave-one-out correction on the twelve published test-block feature vectors.

With only twelve blocks this is a small sanity check rather than a
reproduction: each held-out count comes from a model fit on eleven blocks.
"""

from importlib import resources

import numpy as np

from moundcount.estimator import read_features_csv
from moundcount.evaluation import loocv_regressor
from moundcount.metrics import relative_precision

with resources.as_file(resources.files("moundcount") / "data" / "g2_block_features.csv") as path:
    vectors, targets = read_features_csv(path)

preds = loocv_regressor(vectors, targets, lam=10.0)
rps = []
for v, p in zip(vectors, preds):
    rp = relative_precision(p.final_count, targets[v.block_id])
    rps.append(rp)
    print(f"{v.block_id:>4} det {v.det_count:6.0f} -> {p.final_count:6d} (GT {targets[v.block_id]:6.0f}) RP {rp:.3f}")

total_pred = sum(p.final_count for p in preds)
total_gt = sum(targets.values())
print(f"mean RP {np.mean(rps):.3f}, overall RP {relative_precision(total_pred, total_gt):.3f}")
