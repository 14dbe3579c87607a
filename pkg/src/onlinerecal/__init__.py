"""Online recalibration: calibrated probabilities from any black-box forecaster."""

from .calibrator import OnlineCalibrator, fixed_point, transition_matrix
from .errors import (ConfigError, DataError, DomainError, EmptyStateError, NumericFailure,
                     ProtocolError)
from .losses import LossId, LossSpec, eval_loss, expected_loss, get_loss, is_proper_on_grid
from .metrics import CalibrationCurve, MetricsAccumulator, external_regret, internal_regret
from .recalibrator import Recalibrator, bucket_index

__all__ = [
    "OnlineCalibrator", "fixed_point", "transition_matrix",
    "ConfigError", "DataError", "DomainError", "EmptyStateError", "NumericFailure",
    "ProtocolError",
    "LossId", "LossSpec", "eval_loss", "expected_loss", "get_loss", "is_proper_on_grid",
    "CalibrationCurve", "MetricsAccumulator", "external_regret", "internal_regret",
    "Recalibrator", "bucket_index",
]
