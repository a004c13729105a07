"""Counting planting microsites from tiled orthomosaics.

Local counting-by-detection over a regular patch grid, followed by a
block-level ridge-regression correction of the count.
"""

__version__ = "0.1.0"

from .annotations import (
    AnnotationSet,
    BoundingBox,
    DetectionRecord,
    parse_detection_file,
    parse_label_file,
    to_mosaic_frame,
)
from .augmentation import AugmentationConfig, augment_patch, resize_box, translate_box
from .detection import (
    FileBackend,
    OracleBackend,
    OracleBackendConfig,
    count_by_detection,
    detect_block,
)
from .errors import DataError, MoundCountError, SingularSystemError, ValidationError
from .estimator import (
    BlockFeatureVector,
    CountPrediction,
    RidgeModel,
    extract_features,
    fit_ridge,
    predict_count,
)
from .evaluation import EvaluationReport, kfold_cross_validate, loocv_regressor
from .metrics import (
    average_precision,
    match_detections,
    precision_recall_f1,
    relative_precision,
)
from .simulator import SyntheticBlockSpec, generate_block, generate_fleet
from .stats import paired_t_test, paired_t_test_one_sided, t_cdf
from .tiling import (
    EdgePolicy,
    OrthomosaicMeta,
    PatchGrid,
    PatchRef,
    build_grid,
    mosaic_to_patch,
    patch_to_mosaic,
)

__all__ = [
    "__version__",
    "AnnotationSet",
    "augment_patch",
    "AugmentationConfig",
    "average_precision",
    "BlockFeatureVector",
    "BoundingBox",
    "build_grid",
    "count_by_detection",
    "CountPrediction",
    "DataError",
    "detect_block",
    "DetectionRecord",
    "EdgePolicy",
    "EvaluationReport",
    "extract_features",
    "FileBackend",
    "fit_ridge",
    "generate_block",
    "generate_fleet",
    "kfold_cross_validate",
    "loocv_regressor",
    "match_detections",
    "mosaic_to_patch",
    "MoundCountError",
    "OracleBackend",
    "OracleBackendConfig",
    "OrthomosaicMeta",
    "paired_t_test",
    "paired_t_test_one_sided",
    "parse_detection_file",
    "parse_label_file",
    "patch_to_mosaic",
    "PatchGrid",
    "PatchRef",
    "precision_recall_f1",
    "predict_count",
    "relative_precision",
    "resize_box",
    "RidgeModel",
    "SingularSystemError",
    "SyntheticBlockSpec",
    "t_cdf",
    "to_mosaic_frame",
    "translate_box",
    "ValidationError",
]
