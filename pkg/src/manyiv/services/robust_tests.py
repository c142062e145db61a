"""Weak-identification-robust tests of H₀: β = β₀.

Leave-one-out AR (one-sided upper), leave-one-out LM (two-sided, optionally
squared against χ²₁), the many-controls AR_W and the two naive many-controls
AR statistics used as comparators in simulations.
"""

import numpy as np
from scipy import stats

from manyiv.core.interfaces import QuarticForm, RobustTest
from manyiv.core.projections import ProjectionBundle, cross_fit_weights
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset
from manyiv.models.outcomes import (
    AssumptionReport,
    Flag,
    Sidedness,
    StatisticId,
    TestOutcome,
    VarianceEstimate,
    VarianceId,
    ZeroDiagA,
)
from manyiv.services.variance import (
    AR_VARIANCES,
    LM_VARIANCES,
    PHI3_MAX_N,
    VARIANCE_FLOOR,
    phi_perp,
    phi_w,
    proxy_polynomial,
)
from manyiv.services.zero_diagonal import check_balanced_design, compute_theta

logger = get_logger(__name__)

PERFECT_FIT_TOL = 1e-14


def p_value(statistic: float, sidedness: Sidedness) -> float:
    if sidedness == Sidedness.ONE_SIDED_UPPER:
        return float(stats.norm.sf(statistic))
    return float(min(1.0, 2.0 * stats.norm.sf(abs(statistic))))


def _implied_errors(dataset: Dataset, beta0: float) -> np.ndarray:
    return np.asarray(dataset.y) - beta0 * np.asarray(dataset.x)


def _is_perfect_fit(e: np.ndarray, dataset: Dataset) -> bool:
    scale = max(float(np.max(np.abs(dataset.y))), 1.0)
    return float(np.max(np.abs(e))) <= PERFECT_FIT_TOL * scale


def _finish(
    statistic_id: StatisticId,
    numerator: float,
    k: int,
    normalizer: VarianceEstimate,
    sidedness: Sidedness,
    alpha: float,
    beta0: float,
    perfect_fit: bool,
    squared: bool = False,
    flags: list[Flag] | None = None,
) -> TestOutcome:
    flags = list(flags or [])
    if normalizer.degenerate:
        statistic = 0.0
        flags.append(Flag.DEGENERATE_NORMALIZER)
        if perfect_fit:
            flags.append(Flag.PERFECT_FIT)
    else:
        statistic = numerator / np.sqrt(k * normalizer.value)

    p = p_value(statistic, sidedness)
    if squared:
        statistic = statistic**2
        p = float(stats.chi2.sf(statistic, df=1))
    rejected = p < alpha and not normalizer.degenerate
    return TestOutcome(
        statistic_id=statistic_id,
        statistic=float(statistic),
        p_value=p,
        rejected=rejected,
        alpha=alpha,
        sidedness=sidedness,
        normalizer=normalizer,
        beta0=beta0,
        squared=squared,
        flags=flags,
    )


def ar_loo(
    dataset: Dataset,
    bundle: ProjectionBundle,
    beta0: float,
    variance: VarianceId = VarianceId.PHI2,
    alpha: float = 0.05,
    floor: float = VARIANCE_FLOOR,
    phi3_max_n: int = PHI3_MAX_N,
    allow_large: bool = False,
) -> TestOutcome:
    """Leave-one-out AR: Σ_{i≠j} e_i P_ij e_j / √(K Φ̂), rejecting for large values."""
    if variance not in AR_VARIANCES:
        raise ValueError(f"{variance} is not an AR normalizer")
    e = _implied_errors(dataset, beta0)
    numerator = float(e @ bundle.jack @ e)
    estimator = AR_VARIANCES[variance]
    if variance == VarianceId.PHI3:
        normalizer = estimator(e, bundle, beta0, floor, max_n=phi3_max_n, allow_large=allow_large)
    else:
        normalizer = estimator(e, bundle, beta0, floor)
    return _finish(
        StatisticId(f"ar_{variance.value}"),
        numerator,
        bundle.k_z,
        normalizer,
        Sidedness.ONE_SIDED_UPPER,
        alpha,
        beta0,
        _is_perfect_fit(e, dataset),
        flags=[Flag.CONTROLS_IGNORED] if bundle.has_controls else None,
    )


def lm_loo(
    dataset: Dataset,
    bundle: ProjectionBundle,
    beta0: float,
    variance: VarianceId = VarianceId.PSI2,
    alpha: float = 0.05,
    squared: bool = False,
    floor: float = VARIANCE_FLOOR,
) -> TestOutcome:
    """Leave-one-out LM: Σ_{i≠j} e_i P_ij X_j / √(K Ψ̂), two-sided."""
    if variance not in LM_VARIANCES:
        raise ValueError(f"{variance} is not an LM normalizer")
    e = _implied_errors(dataset, beta0)
    numerator = float(e @ bundle.jack @ np.asarray(dataset.x))
    normalizer = LM_VARIANCES[variance](e, dataset.x, bundle, beta0, floor)
    return _finish(
        StatisticId(f"lm_{variance.value}"),
        numerator,
        bundle.k_z,
        normalizer,
        Sidedness.TWO_SIDED,
        alpha,
        beta0,
        _is_perfect_fit(e, dataset),
        squared=squared,
        flags=[Flag.CONTROLS_IGNORED] if bundle.has_controls else None,
    )


def _assumption_flags(report: AssumptionReport | None) -> list[Flag]:
    if report is None:
        return []
    if not report.passed:
        return [Flag.ASSUMPTION_VIOLATION]
    if report.warnings:
        return [Flag.ASSUMPTION_WARNING]
    return []


def ar_w(
    dataset: Dataset,
    bundle: ProjectionBundle,
    beta0: float,
    weights: ZeroDiagA | None = None,
    alpha: float = 0.05,
    assumption: AssumptionReport | None = None,
    floor: float = VARIANCE_FLOOR,
    cross_fit: np.ndarray | None = None,
) -> TestOutcome:
    """(Y − β₀X)′A(Y − β₀X) / √(K_Z Φ̂_W), one-sided upper.

    Balanced-design violations are flagged and never block the test.
    """
    if weights is None:
        weights = compute_theta(bundle, np.asarray(dataset.W))
    if assumption is None:
        assumption = check_balanced_design(bundle, weights.theta)
    e = _implied_errors(dataset, beta0)
    numerator = float(e @ weights.A @ e)
    normalizer = phi_w(e, bundle, weights, beta0, floor, cross_fit=cross_fit)
    return _finish(
        StatisticId.AR_W,
        numerator,
        bundle.k_z,
        normalizer,
        Sidedness.ONE_SIDED_UPPER,
        alpha,
        beta0,
        _is_perfect_fit(e, dataset),
        flags=_assumption_flags(assumption),
    )


def ar_naive(
    dataset: Dataset,
    bundle: ProjectionBundle,
    beta0: float,
    residualize: bool,
    alpha: float = 0.05,
    floor: float = VARIANCE_FLOOR,
) -> TestOutcome:
    """Diagonal-removed P⊥ applied to M_W e (``residualize``) or to the raw e."""
    e = _implied_errors(dataset, beta0)
    if residualize:
        e = bundle.M_W @ e
    numerator = float(e @ bundle.jack_perp @ e)
    normalizer = phi_perp(e, bundle, beta0, floor)
    return _finish(
        StatisticId.AR1_NAIVE if residualize else StatisticId.AR2_NAIVE,
        numerator,
        bundle.k_z,
        normalizer,
        Sidedness.ONE_SIDED_UPPER,
        alpha,
        beta0,
        _is_perfect_fit(e, dataset),
    )


def _quadratic(weights: np.ndarray, dataset: Dataset) -> tuple[float, float, float]:
    y = np.asarray(dataset.y)
    x = np.asarray(dataset.x)
    return float(y @ weights @ y), -2.0 * float(x @ weights @ y), float(x @ weights @ x)


class ArLooTest(RobustTest):
    sidedness = Sidedness.ONE_SIDED_UPPER

    def __init__(
        self,
        dataset: Dataset,
        bundle: ProjectionBundle,
        variance: VarianceId = VarianceId.PHI2,
        floor: float = VARIANCE_FLOOR,
        phi3_max_n: int = PHI3_MAX_N,
        allow_large: bool = False,
    ) -> None:
        self._dataset = dataset
        self._bundle = bundle
        self._variance = VarianceId(variance)
        self._floor = floor
        self._phi3_max_n = phi3_max_n
        self._allow_large = allow_large
        self.statistic_id = StatisticId(f"ar_{self._variance.value}")

    def evaluate(self, beta0: float, alpha: float) -> TestOutcome:
        return ar_loo(
            self._dataset,
            self._bundle,
            beta0,
            self._variance,
            alpha,
            self._floor,
            self._phi3_max_n,
            self._allow_large,
        )

    def quartic_form(self) -> QuarticForm | None:
        if self._variance == VarianceId.PHI3:
            return None
        n0, n1, n2 = _quadratic(self._bundle.jack, self._dataset)
        c0, c1, c2, w, scale = proxy_polynomial(self._variance, self._dataset, self._bundle)
        return QuarticForm(
            n0=n0, n1=n1, n2=n2, c0=c0, c1=c1, c2=c2, weights=w, scale=scale, k=self._bundle.k_z
        )


class LmLooTest(RobustTest):
    sidedness = Sidedness.TWO_SIDED

    def __init__(
        self,
        dataset: Dataset,
        bundle: ProjectionBundle,
        variance: VarianceId = VarianceId.PSI2,
        squared: bool = False,
        floor: float = VARIANCE_FLOOR,
    ) -> None:
        self._dataset = dataset
        self._bundle = bundle
        self._variance = VarianceId(variance)
        self._squared = squared
        self._floor = floor
        self.statistic_id = StatisticId(f"lm_{self._variance.value}")

    def evaluate(self, beta0: float, alpha: float) -> TestOutcome:
        return lm_loo(
            self._dataset, self._bundle, beta0, self._variance, alpha, self._squared, self._floor
        )


class ArWTest(RobustTest):
    statistic_id = StatisticId.AR_W
    sidedness = Sidedness.ONE_SIDED_UPPER

    def __init__(
        self,
        dataset: Dataset,
        bundle: ProjectionBundle,
        weights: ZeroDiagA | None = None,
        assumption: AssumptionReport | None = None,
        floor: float = VARIANCE_FLOOR,
    ) -> None:
        self._dataset = dataset
        self._bundle = bundle
        self.weights = weights or compute_theta(bundle, np.asarray(dataset.W))
        self.assumption = assumption or check_balanced_design(bundle, self.weights.theta)
        self._floor = floor
        self._cross_fit: np.ndarray | None = None

    def evaluate(self, beta0: float, alpha: float) -> TestOutcome:
        if self._cross_fit is None:
            self._cross_fit = cross_fit_weights(self.weights.A, self._bundle.M_ZW)
        return ar_w(
            self._dataset,
            self._bundle,
            beta0,
            self.weights,
            alpha,
            self.assumption,
            self._floor,
            self._cross_fit,
        )

    def quartic_form(self) -> QuarticForm:
        n0, n1, n2 = _quadratic(self.weights.A, self._dataset)
        c0, c1, c2, w, scale = proxy_polynomial(
            VarianceId.PHI_W, self._dataset, self._bundle, self.weights
        )
        return QuarticForm(
            n0=n0, n1=n1, n2=n2, c0=c0, c1=c1, c2=c2, weights=w, scale=scale, k=self._bundle.k_z
        )


class NaiveArTest(RobustTest):
    sidedness = Sidedness.ONE_SIDED_UPPER

    def __init__(
        self,
        dataset: Dataset,
        bundle: ProjectionBundle,
        residualize: bool,
        floor: float = VARIANCE_FLOOR,
    ) -> None:
        self._dataset = dataset
        self._bundle = bundle
        self._residualize = residualize
        self._floor = floor
        self.statistic_id = StatisticId.AR1_NAIVE if residualize else StatisticId.AR2_NAIVE

    def evaluate(self, beta0: float, alpha: float) -> TestOutcome:
        return ar_naive(self._dataset, self._bundle, beta0, self._residualize, alpha, self._floor)


def build_test(
    statistic_id: StatisticId | str,
    dataset: Dataset,
    bundle: ProjectionBundle,
    weights: ZeroDiagA | None = None,
    assumption: AssumptionReport | None = None,
    floor: float = VARIANCE_FLOOR,
    squared: bool = False,
    phi3_max_n: int = PHI3_MAX_N,
    allow_large: bool = False,
) -> RobustTest:
    """Construct the test registered under ``statistic_id``."""
    sid = StatisticId(statistic_id)
    match sid:
        case StatisticId.AR_PHI1 | StatisticId.AR_PHI2 | StatisticId.AR_PHI3:
            return ArLooTest(
                dataset, bundle, VarianceId(sid.value.removeprefix("ar_")), floor, phi3_max_n, allow_large
            )
        case StatisticId.LM_PSI1 | StatisticId.LM_PSI2:
            return LmLooTest(dataset, bundle, VarianceId(sid.value.removeprefix("lm_")), squared, floor)
        case StatisticId.AR_W:
            return ArWTest(dataset, bundle, weights, assumption, floor)
        case StatisticId.AR1_NAIVE:
            return NaiveArTest(dataset, bundle, residualize=True, floor=floor)
        case StatisticId.AR2_NAIVE:
            return NaiveArTest(dataset, bundle, residualize=False, floor=floor)
    raise ValueError(f"unknown statistic {statistic_id}")
