"""Cut an orthomosaic into patches and move boxes between frames."""

from moundcount.annotations import BoundingBox, label_filename, serialize_boxes
from moundcount.tiling import EdgePolicy, OrthomosaicMeta, build_grid

# A 1000 x 1000 px block cut into 416 px patches.  The default edge policy
# keeps partial patches at the right and bottom edges.
meta = OrthomosaicMeta("demo", 1000, 1000, 0.09)
grid = build_grid(meta, 416)
print(grid.rows, "rows x", grid.cols, "cols")
print([(p.key, p.w, p.h) for p in grid][-3:])  # 168 px wide edge patches

# Dropping edges leaves a 832 x 832 covered area instead.
print(build_grid(meta, 416, EdgePolicy.DROP).covered_extent())

# A mosaic point maps to exactly one patch and back.
patch, lx, ly = grid.mosaic_to_patch(426.0, 10.0)
print(patch.key, (lx, ly), patch.to_mosaic(lx, ly))

# Label files are named after the patch; coordinates are normalized to it.
text = serialize_boxes([BoundingBox(84, 208, 20, 20)], patch)
print(label_filename("demo", *patch.key), repr(text))
