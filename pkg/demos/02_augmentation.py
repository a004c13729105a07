"""Resize and translation augmentation of fine-tuning boxes."""

import numpy as np

from moundcount.annotations import BoundingBox
from moundcount.augmentation import AugmentationConfig, augment_patch, resize_box, translate_box
from moundcount.tiling import PatchGrid

box = BoundingBox(100, 100, 20, 10)

# Resizing scales both sides by Z about the center.
print(resize_box(box, 1.2))

# Translation moves the center by L pixels in direction alpha.
print(translate_box(box, 5.0, np.pi / 2))

# Each patch gets its own generator, so results do not depend on patch order.
patch = PatchGrid(832, 832, 416).patch(0, 1)
cfg = AugmentationConfig(seed=3, boxes_per_source=2)
boxes = [BoundingBox(10, 10, 30, 30), BoundingBox(200, 200, 16, 16)]
out = augment_patch(boxes, cfg, patch)
print(len(out), "augmented boxes")
for b in out:
    print("  ", b)

# Boxes pushed off the patch are clipped, or dropped when too little remains.
assert out == augment_patch(boxes, cfg, patch)
