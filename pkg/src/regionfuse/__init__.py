"""Region-based facial texture classification with score-level fusion.

The pipeline crops facial regions around 49-point landmarks, describes
each region with compass-direction local binary pattern histograms, ranks
and prunes features on an affinity graph, trains one calibrated linear
SVM per region, and fuses the per-region probabilities with weights found
by a genetic search.
"""

__version__ = "0.1.0"

from .classify import (
    AccuracyReport,
    LinearModel,
    calibrate_platt,
    load_model,
    region_accuracy,
    save_model,
    score,
    train_linear_svm,
)
from .corpus import (
    FoldSplit,
    SampleRecord,
    generate_synthetic_corpus,
    load_gray_image,
    load_manifest,
    make_folds,
    write_manifest,
)
from .errors import DataError, NumericError, PipelineError
from .fusion import GaConfig, GaResult, concat_baseline, fuse, fuse_scores, ga_optimize
from .pipeline import EvaluationReport, RunConfig, run_train_eval
from .regions import RegionId, extract_region_boxes, load_landmarks
from .selection import IfsSelector, affinity_matrix, ifs_scores
from .texture import colbp_descriptor, kirsch_masks, lbp_image

__all__ = [
    "AccuracyReport", "DataError", "EvaluationReport", "FoldSplit",
    "GaConfig", "GaResult", "IfsSelector", "LinearModel", "NumericError",
    "PipelineError", "RegionId", "RunConfig", "SampleRecord",
    "affinity_matrix", "calibrate_platt", "colbp_descriptor",
    "concat_baseline", "extract_region_boxes", "fuse", "fuse_scores",
    "ga_optimize", "generate_synthetic_corpus", "ifs_scores",
    "kirsch_masks", "lbp_image", "load_gray_image", "load_landmarks",
    "load_manifest", "load_model", "make_folds", "region_accuracy",
    "run_train_eval", "save_model", "score", "train_linear_svm",
    "write_manifest",
]
