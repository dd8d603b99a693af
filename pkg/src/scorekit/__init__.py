"""Consistent scoring functions, calibration diagnostics and model
comparison for point forecasts."""

from .core import (
    EvaluationSample,
    Family,
    Kind,
    ScoreSpec,
    TargetFunctional,
    functional_of_empirical,
    validate_sample,
)
from .scoring import score, tweedie_deviance
from .identification import calibration_report, generalized_residuals, identification_value, v_bar, wald_joint_test
from .comparison import dm_test, empirical_score, murphy_elementary, murphy_tweedie, skill_score, trivial_model
from .decomposition import corp_decomposition, pav_isotonic
from .classification import BinarySample, roc_auc
from .data_io import ColumnSchema, SplitSpec, load_csv, split

__version__ = "0.1.0"

__all__ = [
    "BinarySample",
    "ColumnSchema",
    "EvaluationSample",
    "Family",
    "Kind",
    "ScoreSpec",
    "SplitSpec",
    "TargetFunctional",
    "calibration_report",
    "corp_decomposition",
    "dm_test",
    "empirical_score",
    "functional_of_empirical",
    "generalized_residuals",
    "identification_value",
    "load_csv",
    "murphy_elementary",
    "murphy_tweedie",
    "pav_isotonic",
    "roc_auc",
    "score",
    "skill_score",
    "split",
    "trivial_model",
    "tweedie_deviance",
    "v_bar",
    "validate_sample",
    "wald_joint_test",
]
