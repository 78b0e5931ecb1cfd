"""Equivalent sample size of fixed prediction rules via block-out cross-validation."""

from esscv.core import (
    Dataset,
    LossFunction,
    PredictionRule,
    RiskEstimate,
    Schema,
    aggregate_metrics,
    evaluate_loss,
)
from esscv.errors import EssError
from esscv.inference import (
    SequentialResult,
    StepResult,
    TrainingGrid,
    plugin_ess,
    sequential_ess,
    test_step,
)
from esscv.learners import LearnerSpec
from esscv.risk import BlockCvResult, block_out_cv, fixed_rule_risk, partition_blocks

__version__ = "0.1.0"

__all__ = [
    "BlockCvResult",
    "Dataset",
    "EssError",
    "LearnerSpec",
    "LossFunction",
    "PredictionRule",
    "RiskEstimate",
    "Schema",
    "SequentialResult",
    "StepResult",
    "TrainingGrid",
    "aggregate_metrics",
    "block_out_cv",
    "evaluate_loss",
    "fixed_rule_risk",
    "partition_blocks",
    "plugin_ess",
    "sequential_ess",
    "test_step",
]
