"""Pre-test for identification strength.

F̃ = Σ_{i≠j} P_ij X_i X_j / √(K Υ̂). The JIVE t-test is trusted when F̃
exceeds the cutoff (4.14 for a 2.5 benchmark); otherwise use a robust test.
"""

import numpy as np

from manyiv.core.projections import ProjectionBundle
from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset
from manyiv.models.outcomes import Decision, Flag, PretestOutcome
from manyiv.services.variance import VARIANCE_FLOOR, upsilon

logger = get_logger(__name__)

DEFAULT_CUTOFF = 4.14
DEFAULT_BENCHMARK = 2.5


class DegenerateUpsilonError(ManyIVError):
    """Υ̂ is at or below the floor, so F̃ is undefined."""

    def __init__(self, raw: float, floor: float) -> None:
        self.raw = raw
        self.floor = floor
        super().__init__(f"first-stage normalizer {raw:.3e} is below the floor {floor:.3e}; F-tilde undefined")


def first_stage_f(dataset: Dataset, bundle: ProjectionBundle) -> float:
    """Homoskedastic first-stage F: (X′PX/K) / (X′MX/(N − K − K_W))."""
    x = np.asarray(dataset.x)
    if bundle.has_controls:
        explained = float(x @ bundle.P_perp @ x)
        residual = float(x @ bundle.M_ZW @ x)
    else:
        explained = float(x @ bundle.P @ x)
        residual = float(x @ bundle.M @ x)
    dof = bundle.n - bundle.k_z - bundle.k_w
    if residual <= 0.0 or dof <= 0:
        return float("inf")
    return (explained / bundle.k_z) / (residual / dof)


def pretest_ftilde(
    dataset: Dataset,
    bundle: ProjectionBundle,
    cutoff: float = DEFAULT_CUTOFF,
    benchmark: float = DEFAULT_BENCHMARK,
    floor: float = VARIANCE_FLOOR,
) -> PretestOutcome:
    """Compute F̃ and the strong/weak decision (strong iff F̃ > cutoff).

    With controls X is residualized on W first and the outcome is flagged
    approximate. Raises DegenerateUpsilonError when Υ̂ falls below the floor
    (for example when MX = 0).
    """
    flags: list[Flag] = []
    x = np.asarray(dataset.x)
    if bundle.has_controls:
        x = bundle.M_W @ x
        numerator = float(x @ bundle.jack_perp @ x)
        ups = upsilon(x, bundle, floor, residualized=True)
        flags.append(Flag.APPROXIMATE)
    else:
        numerator = float(x @ bundle.jack @ x)
        ups = upsilon(x, bundle, floor)

    if ups.degenerate:
        logger.warning("pretest_degenerate_upsilon", raw=ups.raw, floor=ups.floor)
        raise DegenerateUpsilonError(ups.raw, ups.floor)
    ftilde = numerator / np.sqrt(bundle.k_z * ups.value)

    decision = Decision.STRONG if ftilde > cutoff else Decision.WEAK
    if decision == Decision.WEAK:
        flags.append(Flag.WEAK_IDENTIFICATION)
    outcome = PretestOutcome(
        ftilde=float(ftilde),
        first_stage_F=first_stage_f(dataset, bundle),
        cutoff=cutoff,
        benchmark=benchmark,
        upsilon=ups,
        decision=decision,
        flags=flags,
    )
    logger.debug("pretest_done", ftilde=outcome.ftilde, decision=str(decision))
    return outcome
