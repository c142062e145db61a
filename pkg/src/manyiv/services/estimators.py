"""Ratio estimators of β: TSLS, the two jack-knife IV estimators and the many-controls trio.

Every estimator has the form x′Cy / x′Cx for a weight matrix C. Standard errors
use the many-instrument heteroskedasticity-robust form

    V̂ = D⁻² [ Σ_i (Cx)_i² ê_i² + Σ_{i≠j} C_ij C_ji (x_i ê_i)(x_j ê_j) ].
"""

from collections.abc import Callable

import numpy as np
from scipy import stats

from manyiv.core.projections import ProjectionBundle
from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset
from manyiv.models.outcomes import (
    Concentration,
    EstimateOutcome,
    EstimatorId,
    Flag,
    Interval,
    ZeroDiagA,
)
from manyiv.services.zero_diagonal import compute_theta

logger = get_logger(__name__)

DENOMINATOR_FLOOR = 1e-12
SATURATION_TOL = 1e-14
LEVERAGE_TOL = 1e-10
WEIGHT_DIAG_TOL = 1e-10
WEIGHT_ANNIHILATION_TOL = 1e-8


class DegenerateDenominatorError(ManyIVError):
    def __init__(self, estimator_id: EstimatorId, denominator: float, floor: float) -> None:
        self.estimator_id = estimator_id
        self.denominator = denominator
        self.floor = floor
        super().__init__(
            f"{estimator_id}: denominator {denominator:.3e} is below the floor {floor:.3e}"
        )


class SaturatedFirstStageError(ManyIVError):
    """The leave-one-out weights vanish (for example Z = I_N)."""

    def __init__(self, estimator_id: EstimatorId) -> None:
        self.estimator_id = estimator_id
        super().__init__(f"{estimator_id}: saturated first stage, all off-diagonal weights are zero")


class HighLeverageError(ManyIVError):
    def __init__(self, index: int, hat_value: float) -> None:
        self.index = index
        self.hat_value = hat_value
        super().__init__(f"observation {index} has hat value {hat_value:.12f}; JIVE1 needs P_ii < 1")


class InadmissibleWeightsError(ManyIVError):
    """A supplied weight matrix lacks a zero diagonal or does not annihilate W."""

    def __init__(self, property: str, deviation: float) -> None:
        self.property = property
        self.deviation = deviation
        super().__init__(f"weight matrix fails '{property}' (max deviation {deviation:.3e})")


class NonPositiveVarianceError(ManyIVError):
    def __init__(self, estimator_id: EstimatorId, variance: float) -> None:
        self.estimator_id = estimator_id
        self.variance = variance
        super().__init__(f"{estimator_id}: robust variance {variance:.3e} is not positive")


def _ratio(
    weights: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    estimator_id: EstimatorId,
    floor: float,
) -> tuple[float, float]:
    denominator = float(x @ weights @ x)
    scale = float(x @ x)
    if abs(denominator) < floor * scale or scale == 0.0:
        raise DegenerateDenominatorError(estimator_id, denominator, floor * scale)
    return float(x @ weights @ y) / denominator, denominator


def _check_saturation(weights: np.ndarray, estimator_id: EstimatorId) -> None:
    if not np.any(np.abs(weights) > SATURATION_TOL):
        raise SaturatedFirstStageError(estimator_id)


def robust_variance(
    weights: np.ndarray,
    x: np.ndarray,
    residuals: np.ndarray,
    denominator: float,
) -> float:
    """Heteroskedasticity-robust variance of x′Cy / x′Cx given residuals ê."""
    q = weights.T @ x
    g = x * residuals
    own = float(np.sum(q**2 * residuals**2))
    cross = float(g @ (weights * weights.T) @ g)
    return (own + cross) / denominator**2


def jive_se(
    dataset: Dataset,
    bundle: ProjectionBundle,
    beta_hat: float,
    weights: np.ndarray | None = None,
    estimator_id: EstimatorId = EstimatorId.JIVE2,
    residualize: bool = False,
) -> float:
    """Robust standard error for a jack-knife ratio estimate.

    ``weights`` defaults to the diagonal-removed P. With controls the
    residuals are M_W(Y − β̂X) when ``residualize`` is set. Zero residuals
    give a standard error of 0.
    """
    c = bundle.jack if weights is None else weights
    x = np.asarray(dataset.x)
    resid = np.asarray(dataset.y) - beta_hat * x
    if residualize:
        resid = bundle.M_W @ resid
    denominator = float(x @ c @ x)

    size = max(float(np.linalg.norm(dataset.y)), float(np.linalg.norm(beta_hat * x)), 1.0)
    if float(np.linalg.norm(resid)) <= 1e-12 * size:
        return 0.0

    variance = robust_variance(c, x, resid, denominator)
    if variance <= 0.0:
        raise NonPositiveVarianceError(estimator_id, variance)
    return float(np.sqrt(variance))


def _outcome(
    estimator_id: EstimatorId,
    beta_hat: float,
    denominator: float,
    std_error: float | None = None,
    diagnostics: dict | None = None,
    flags: list[Flag] | None = None,
) -> EstimateOutcome:
    flags = list(flags or [])
    if std_error is not None and std_error <= 0.0:
        std_error = None
        flags.append(Flag.ZERO_RESIDUALS)
    return EstimateOutcome(
        beta_hat=beta_hat,
        std_error=std_error,
        estimator_id=estimator_id,
        denominator=denominator,
        diagnostics=diagnostics or {},
        flags=flags,
    )


def tsls(
    dataset: Dataset, bundle: ProjectionBundle, floor: float = DENOMINATOR_FLOOR
) -> EstimateOutcome:
    """Two-stage least squares; with controls the P⊥ ratio (P⊥ already annihilates W).

    No standard error is attached.
    """
    weights = bundle.P_perp if bundle.has_controls else bundle.P
    beta, den = _ratio(weights, dataset.x, dataset.y, EstimatorId.TSLS, floor)
    return _outcome(
        EstimatorId.TSLS, beta, den, diagnostics={"k": bundle.k_z, "n": bundle.n}
    )


def jive2(
    dataset: Dataset, bundle: ProjectionBundle, floor: float = DENOMINATOR_FLOOR
) -> EstimateOutcome:
    """Σ_{i≠j} P_ij X_i Y_j / Σ_{i≠j} P_ij X_i X_j with a robust standard error."""
    c = bundle.jack
    _check_saturation(c, EstimatorId.JIVE2)
    beta, den = _ratio(c, dataset.x, dataset.y, EstimatorId.JIVE2, floor)
    flags = [Flag.CONTROLS_IGNORED] if bundle.has_controls else []
    se = jive_se(dataset, bundle, beta, c)
    return _outcome(
        EstimatorId.JIVE2,
        beta,
        den,
        std_error=se,
        diagnostics={"controls_residualized": False} if bundle.has_controls else {},
        flags=flags,
    )


def jive1(
    dataset: Dataset, bundle: ProjectionBundle, floor: float = DENOMINATOR_FLOOR
) -> EstimateOutcome:
    """JIVE with the leave-one-out first stage X̂_i = Σ_{j≠i} P_ij X_j / (1 − P_ii)."""
    hat = bundle.hat_p
    worst = int(np.argmax(hat))
    if hat[worst] >= 1.0 - LEVERAGE_TOL:
        raise HighLeverageError(worst, float(hat[worst]))

    # row i scaled by 1/(1 − P_ii); the estimate is X̂′Y / X̂′X
    c = bundle.jack / (1.0 - hat)[:, None]
    _check_saturation(c, EstimatorId.JIVE1)
    beta, den = _ratio(c.T, dataset.x, dataset.y, EstimatorId.JIVE1, floor)
    flags = [Flag.CONTROLS_IGNORED] if bundle.has_controls else []
    se = jive_se(dataset, bundle, beta, c.T, EstimatorId.JIVE1)
    return _outcome(
        EstimatorId.JIVE1,
        beta,
        den,
        std_error=se,
        diagnostics={"max_hat": float(hat[worst])},
        flags=flags,
    )


def beta1_ijive(
    dataset: Dataset, bundle: ProjectionBundle, floor: float = DENOMINATOR_FLOOR
) -> EstimateOutcome:
    """Residualize on W, then apply diagonal-removed P⊥.

    Biased when K_W is large relative to N; kept for comparison.
    """
    c = bundle.jack_perp
    _check_saturation(c, EstimatorId.BETA1)
    x = bundle.M_W @ dataset.x
    y = bundle.M_W @ dataset.y
    beta, den = _ratio(c, x, y, EstimatorId.BETA1, floor)
    return _outcome(EstimatorId.BETA1, beta, den, diagnostics={"k_w": bundle.k_w})


def beta2_naive(
    dataset: Dataset, bundle: ProjectionBundle, floor: float = DENOMINATOR_FLOOR
) -> EstimateOutcome:
    """Diagonal-removed P⊥ applied to the raw (un-residualized) data."""
    c = bundle.jack_perp
    _check_saturation(c, EstimatorId.BETA2)
    beta, den = _ratio(c, dataset.x, dataset.y, EstimatorId.BETA2, floor)
    return _outcome(EstimatorId.BETA2, beta, den, diagnostics={"k_w": bundle.k_w})


def check_weights(weights: np.ndarray, controls: np.ndarray) -> None:
    """Refuse a weight matrix without a zero diagonal or with A·W ≠ 0."""
    diag_dev = float(np.max(np.abs(np.diag(weights))))
    if diag_dev > WEIGHT_DIAG_TOL:
        raise InadmissibleWeightsError("zero diagonal", diag_dev)
    if controls.shape[1]:
        annihilation = float(np.max(np.abs(weights @ controls)))
        if annihilation > WEIGHT_ANNIHILATION_TOL:
            raise InadmissibleWeightsError("annihilates controls", annihilation)


def beta3_zero_diag(
    dataset: Dataset,
    bundle: ProjectionBundle,
    weights: ZeroDiagA,
    floor: float = DENOMINATOR_FLOOR,
) -> EstimateOutcome:
    """X′AY / X′AX for the zero-diagonal, W-annihilating A."""
    a = weights.A
    check_weights(a, np.asarray(dataset.W))
    _check_saturation(a, EstimatorId.BETA3)
    beta, den = _ratio(a, dataset.x, dataset.y, EstimatorId.BETA3, floor)
    se = jive_se(dataset, bundle, beta, a, EstimatorId.BETA3, residualize=bundle.has_controls)
    return _outcome(
        EstimatorId.BETA3,
        beta,
        den,
        std_error=se,
        diagnostics={
            "max_theta": weights.max_theta,
            "sum_squares": weights.sum_squares,
        },
    )


def wald_interval(outcome: EstimateOutcome, alpha: float = 0.05) -> Interval:
    """β̂ ± z_{1−α/2}·se."""
    if outcome.std_error is None:
        raise ValueError(f"{outcome.estimator_id} has no standard error")
    z = float(stats.norm.ppf(1.0 - alpha / 2.0))
    half = z * outcome.std_error
    return Interval(lower=outcome.beta_hat - half, upper=outcome.beta_hat + half)


def concentration(pi: np.ndarray, dataset: Dataset, bundle: ProjectionBundle) -> Concentration:
    """μ² and π′Z′Zπ for a first-stage coefficient vector on the dataset's instruments.

    With controls the instrument signal is residualized on W and μ² uses P⊥.
    """
    signal = np.asarray(dataset.Z) @ np.asarray(pi, dtype=float)
    if bundle.has_controls:
        signal = bundle.M_W @ signal
    mu2 = float(signal @ bundle.jack_perp @ signal)
    total = float(signal @ signal)
    k = bundle.k_z
    return Concentration(
        mu2=mu2,
        signal=total,
        strength=mu2 / np.sqrt(k),
        signal_per_instrument=total / k,
        k=k,
    )


Estimator = Callable[[Dataset, ProjectionBundle], EstimateOutcome]


def _beta3(dataset: Dataset, bundle: ProjectionBundle) -> EstimateOutcome:
    return beta3_zero_diag(dataset, bundle, compute_theta(bundle, np.asarray(dataset.W)))


ESTIMATORS: dict[EstimatorId, Estimator] = {
    EstimatorId.TSLS: tsls,
    EstimatorId.JIVE1: jive1,
    EstimatorId.JIVE2: jive2,
    EstimatorId.BETA1: beta1_ijive,
    EstimatorId.BETA2: beta2_naive,
    EstimatorId.BETA3: _beta3,
}


def estimate(estimator_id: EstimatorId | str, dataset: Dataset, bundle: ProjectionBundle) -> EstimateOutcome:
    """Dispatch by estimator id."""
    outcome = ESTIMATORS[EstimatorId(estimator_id)](dataset, bundle)
    logger.debug("estimate_done", estimator=str(outcome.estimator_id), beta_hat=outcome.beta_hat)
    return outcome
