from manyiv.core.interfaces import QuarticForm, RobustTest
from manyiv.core.leave_out import LeaveOut, RankCollapseError, leave_out_projection
from manyiv.core.projections import (
    InvariantViolationError,
    PerfectFitError,
    ProjectionBundle,
    balance_check,
    cross_fit_weights,
)

__all__ = [
    "InvariantViolationError",
    "LeaveOut",
    "PerfectFitError",
    "QuarticForm",
    "ProjectionBundle",
    "RankCollapseError",
    "RobustTest",
    "balance_check",
    "cross_fit_weights",
    "leave_out_projection",
]
