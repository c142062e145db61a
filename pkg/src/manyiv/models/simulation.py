"""Pydantic models for Monte Carlo designs and their aggregated results."""

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, computed_field, model_validator

from manyiv.models.outcomes import Concentration, EstimatorId, PowerPrediction, StatisticId


class SimDesign(BaseModel):
    """Generative specification of one simulation design.

    ``layout = "groups"`` draws balanced group-indicator instruments without
    controls; ``layout = "controls"`` draws a many-controls design with W of
    intercept, dummy blocks and continuous columns.
    """

    layout: Literal["groups", "controls"] = "groups"
    n: int = Field(default=200, ge=3)
    k_z: int = Field(default=40, ge=1)
    k_w: int = Field(default=0, ge=0)
    first_stage: Literal["sparse", "dense", "custom"] = "dense"
    pi: list[float] | None = None
    strength_target: float = Field(default=2.5, ge=0.0)
    rho: float = Field(default=0.2, gt=-1.0, lt=1.0)
    beta_true: float = 0.0
    heteroskedasticity: Literal["none", "weights"] = "none"
    weights: list[float] | None = None

    # many-controls rule
    levels_per_categorical: int = Field(default=11, ge=2)
    dummy_share: float = Field(default=0.85, ge=0.0, le=1.0)
    instrument_control_corr: float = Field(default=0.3, ge=0.0, lt=1.0)
    gamma_scale: float = Field(default=1.0, ge=0.0)
    delta_scale: float = Field(default=0.5, ge=0.0)
    error_loading: float = -1.5
    heteroskedastic_scale: bool = True
    # three-observation control cells carrying their own instruments
    leverage_cells: int = Field(default=0, ge=0)
    leverage_instruments: int = Field(default=0, ge=0)
    beta1_bias_target: float | None = None
    beta2_bias_target: float | None = None
    antithetic: bool = False

    reps: int = Field(default=1000, ge=1)
    seed: int = Field(default=20240601, ge=0, lt=2**64)
    delta_grid: list[float] = Field(default_factory=lambda: [0.0])

    @model_validator(mode="after")
    def _check_layout(self) -> "SimDesign":
        if self.layout == "groups":
            if self.k_w != 0:
                raise ValueError("the group design has no controls (k_w must be 0)")
            if self.n % self.k_z != 0:
                raise ValueError(f"n={self.n} is not divisible by k_z={self.k_z}")
            if self.n // self.k_z < 2:
                raise ValueError("groups need at least two observations")
            if self.leverage_cells or self.beta1_bias_target is not None or self.beta2_bias_target is not None:
                raise ValueError("leverage cells and bias targets apply to the controls design only")
        else:
            if self.k_w < 1:
                raise ValueError("the controls design needs k_w >= 1")
            if self.n <= self.k_z + self.k_w:
                raise ValueError("need n > k_z + k_w")
            if "rho" in self.model_fields_set:
                raise ValueError("rho applies to the group design only; the controls design uses error_loading")
            self._check_leverage_cells()
        if self.first_stage == "custom":
            if self.pi is None or len(self.pi) != self.k_z:
                raise ValueError("a custom first stage needs pi with k_z entries")
        if self.heteroskedasticity == "weights":
            if self.layout != "groups":
                raise ValueError("per-group weights apply to the group design only")
            if self.weights is None or len(self.weights) != self.k_z:
                raise ValueError("heteroskedastic weights need one positive entry per group")
            if min(self.weights) <= 0:
                raise ValueError("heteroskedastic weights must be positive")
        if not self.delta_grid:
            raise ValueError("delta_grid must not be empty")
        return self

    def _check_leverage_cells(self) -> None:
        cells, k_b = self.leverage_cells, self.leverage_instruments
        if (cells == 0) != (k_b == 0):
            raise ValueError("leverage_cells and leverage_instruments are set together")
        if cells:
            if k_b % 2 or k_b >= self.k_z:
                raise ValueError("leverage_instruments must be even and leave signal instruments")
            if cells % k_b or cells < 2 * k_b:
                raise ValueError("leverage_cells must be a multiple of leverage_instruments, at least twice it")
            if self.k_w < cells + 2:
                raise ValueError("k_w must hold the intercept, one dummy per cell and another control")
            if self.n - 3 * cells <= self.k_z + self.k_w - cells:
                raise ValueError("too few observations outside the leverage cells")
        targets = (self.beta1_bias_target, self.beta2_bias_target)
        if any(t is not None for t in targets) and self.beta_true == 0.0:
            raise ValueError("bias targets are relative and need beta_true != 0")
        if self.beta1_bias_target is not None and not cells:
            raise ValueError("beta1_bias_target needs leverage cells")

    @property
    def group_size(self) -> int:
        return self.n // self.k_z


class Experiment(BaseModel):
    """A design plus what to run on it, as read from a design file."""

    name: str
    experiment: Literal["size", "power", "bias"] = "power"
    design: SimDesign
    statistics: list[StatisticId] = Field(default_factory=list)
    estimators: list[EstimatorId] = Field(default_factory=list)
    alpha: float = Field(default=0.05, gt=0.0, lt=0.5)
    plot: bool = False

    @model_validator(mode="after")
    def _check_targets(self) -> "Experiment":
        if self.experiment == "bias":
            if not self.estimators:
                raise ValueError("a bias experiment needs estimators")
            if self.design.beta_true == 0.0:
                raise ValueError("relative bias needs beta_true != 0")
        elif not self.statistics:
            raise ValueError(f"a {self.experiment} experiment needs statistics")
        return self


def mc_se(rate: float, reps: int) -> float:
    return float(np.sqrt(rate * (1.0 - rate) / reps)) if reps > 0 else 0.0


class RejectionRow(BaseModel):
    statistic: StatisticId
    delta: float
    beta0: float
    reps: int
    valid: int
    rejections: int
    predicted: float | None = None

    @computed_field
    @property
    def rate(self) -> float:
        return self.rejections / self.valid if self.valid else 0.0

    @computed_field
    @property
    def mc_se(self) -> float:
        return mc_se(self.rate, self.valid)


class BiasRow(BaseModel):
    estimator: EstimatorId
    reps: int
    valid: int
    mean_relative_bias: float
    mc_se: float
    degenerate: int = 0


class SimReport(BaseModel):
    name: str
    experiment: Literal["size", "power", "bias"]
    design: SimDesign
    alpha: float
    rejections: list[RejectionRow] = Field(default_factory=list)
    bias: list[BiasRow] = Field(default_factory=list)
    predictions: list[PowerPrediction] = Field(default_factory=list)
    concentration: Concentration | None = None
    seeds: list[int] = Field(default_factory=list)
    errors: dict[str, int] = Field(default_factory=dict)
    runtime_seconds: float = 0.0

    def row(self, statistic: StatisticId | str, delta: float = 0.0) -> RejectionRow:
        for row in self.rejections:
            if row.statistic == StatisticId(statistic) and row.delta == delta:
                return row
        raise KeyError(f"no row for {statistic} at delta={delta}")

    def rate(self, statistic: StatisticId | str, delta: float = 0.0) -> float:
        return self.row(statistic, delta).rate

    def bias_for(self, estimator: EstimatorId | str) -> BiasRow:
        for row in self.bias:
            if row.estimator == EstimatorId(estimator):
                return row
        raise KeyError(f"no bias row for {estimator}")
