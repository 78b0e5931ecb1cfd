from esscv.learners.preprocess import FittedPreprocessor, PreprocessOptions, preprocess_fit, winsorize
from esscv.learners.spec import (
    FAMILIES,
    BlockRules,
    LearnerSpec,
    TuningPolicy,
    fit_blocks,
    fold_count,
    train,
    tune,
)

__all__ = [
    "FAMILIES",
    "BlockRules",
    "FittedPreprocessor",
    "LearnerSpec",
    "PreprocessOptions",
    "TuningPolicy",
    "fit_blocks",
    "fold_count",
    "preprocess_fit",
    "train",
    "tune",
    "winsorize",
]
