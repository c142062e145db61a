"""Pydantic models for estimator, variance, test and pre-test outcomes."""

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from typing import ClassVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class EstimatorId(StrEnum):
    TSLS = "tsls"
    JIVE1 = "jive1"
    JIVE2 = "jive2"
    BETA1 = "beta1"
    BETA2 = "beta2"
    BETA3 = "beta3"


class VarianceId(StrEnum):
    PHI1 = "phi1"
    PHI2 = "phi2"
    PHI3 = "phi3"
    PSI1 = "psi1"
    PSI2 = "psi2"
    PHI_W = "phiw"
    PHI_PERP = "phi_perp"
    UPSILON = "upsilon"


class StatisticId(StrEnum):
    AR_PHI1 = "ar_phi1"
    AR_PHI2 = "ar_phi2"
    AR_PHI3 = "ar_phi3"
    LM_PSI1 = "lm_psi1"
    LM_PSI2 = "lm_psi2"
    AR_W = "ar_w"
    AR1_NAIVE = "ar1_naive"
    AR2_NAIVE = "ar2_naive"


class Sidedness(StrEnum):
    ONE_SIDED_UPPER = "one-sided-upper"
    TWO_SIDED = "two-sided"


class Decision(StrEnum):
    STRONG = "strong"
    WEAK = "weak"


class Flag(StrEnum):
    DEGENERATE_NORMALIZER = "degenerate-normalizer"
    PERFECT_FIT = "perfect-fit"
    ASSUMPTION_VIOLATION = "assumption-violation"
    ASSUMPTION_WARNING = "assumption-warning"
    APPROXIMATE = "approximate"
    CONTROLS_IGNORED = "controls-ignored"
    ZERO_RESIDUALS = "zero-residuals"
    WEAK_IDENTIFICATION = "weak-identification"
    UNBOUNDED_BELOW = "unbounded-below"
    UNBOUNDED_ABOVE = "unbounded-above"
    WHOLE_LINE = "whole-line"
    EMPTY = "empty"


class EstimateOutcome(BaseModel):
    beta_hat: float
    std_error: float | None = Field(default=None, gt=0.0)
    estimator_id: EstimatorId
    denominator: float
    diagnostics: dict[str, float | int | str | bool] = Field(default_factory=dict)
    flags: list[Flag] = Field(default_factory=list)


class VarianceEstimate(BaseModel):
    """A normalizer after flooring; ``raw`` keeps the unfloored value."""

    value: float = Field(gt=0.0)
    raw: float
    floor: float = Field(gt=0.0)
    estimator_id: VarianceId
    beta0: float | None = None
    components: dict[str, float] = Field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return self.raw < self.floor


class TestOutcome(BaseModel):
    __test__: ClassVar[bool] = False

    statistic_id: StatisticId
    statistic: float
    p_value: float = Field(ge=0.0, le=1.0)
    rejected: bool
    alpha: float
    sidedness: Sidedness
    normalizer: VarianceEstimate
    beta0: float
    squared: bool = False
    flags: list[Flag] = Field(default_factory=list)


class PretestOutcome(BaseModel):
    ftilde: float
    first_stage_F: float
    cutoff: float = 4.14
    benchmark: float = 2.5
    upsilon: VarianceEstimate
    decision: Decision
    flags: list[Flag] = Field(default_factory=list)


class BalanceReport(BaseModel):
    """Leverage balance check on diag(P)."""

    max_hat: float
    argmax: int
    delta: float
    warn_level: float
    passed: bool
    warning: bool


class AssumptionReport(BaseModel):
    """Balanced-design checks for the many-controls case."""

    min_mw_diag: float
    min_theta: float | None
    max_leverage_ratio: float
    delta: float
    warn_level: float
    mw_diag_ok: bool
    theta_ok: bool
    leverage_ok: bool
    warnings: list[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.mw_diag_ok and self.theta_ok and self.leverage_ok


class ZeroDiagA(BaseModel):
    """Weight matrix with A·W = 0 and a zero diagonal: A = P⊥ − M_W·D_θ·M_W."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray
    theta: np.ndarray
    min_mw_diag: float
    max_theta: float
    max_leverage_ratio: float
    sum_squares: float
    lemma_bounds_checked: bool


class Interval(BaseModel):
    """Closed interval; ``None`` marks an infinite end."""

    lower: float | None
    upper: float | None

    def contains(self, value: float) -> bool:
        return (self.lower is None or value >= self.lower) and (
            self.upper is None or value <= self.upper
        )


class ConfidenceSet(BaseModel):
    statistic_id: StatisticId
    alpha: float
    engine: str
    intervals: list[Interval] = Field(default_factory=list)
    flags: list[Flag] = Field(default_factory=list)

    @property
    def bounded(self) -> bool:
        return all(i.lower is not None and i.upper is not None for i in self.intervals)

    def contains(self, value: float) -> bool:
        return any(i.contains(value) for i in self.intervals)


class Concentration(BaseModel):
    """Identification-strength quantities of a first stage π.

    ``mu2`` drops the own-observation terms of π′Z′Zπ; its ratio to √K governs
    JIVE consistency while π′Z′Zπ/K governs TSLS.
    """

    mu2: float
    signal: float
    strength: float
    signal_per_instrument: float
    k: int


class PowerPrediction(BaseModel):
    """Local-alternative rejection probabilities of the AR and LM tests."""

    delta: float
    ar_power: float = Field(ge=0.0, le=1.0)
    lm_power: float = Field(ge=0.0, le=1.0)
