"""Pydantic models for CLI runs: column roles, inversion grid and the analysis report."""

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, model_validator

from manyiv.models.outcomes import (
    AssumptionReport,
    BalanceReport,
    ConfidenceSet,
    EstimateOutcome,
    EstimatorId,
    Interval,
    PretestOutcome,
    StatisticId,
    TestOutcome,
    VarianceId,
)

SCHEMA_VERSION = "1.0"

Command = Literal["analyze", "pretest", "test", "confset", "estimate", "simulate"]
OutputFormat = Literal["text", "json", "csv"]


class GridSpec(BaseModel):
    """Grid-engine settings; ``center``/``halfwidth`` override the JIVE-based defaults."""

    points: int = Field(default=2001, ge=11)
    halfwidth_se: float = Field(default=20.0, gt=0.0)
    max_extensions: int = Field(default=8, ge=0)
    tail_decades: int = Field(default=6, ge=0)
    tail_points_per_decade: int = Field(default=16, ge=1)
    rtol: float = Field(default=1e-6, gt=0.0)
    center: float | None = None
    halfwidth: float | None = Field(default=None, gt=0.0)


class ColumnRoles(BaseModel):
    outcome: str
    endogenous: str
    instruments: list[str] = Field(default_factory=list)
    instrument_prefix: str | None = None
    controls: list[str] = Field(default_factory=list)
    control_prefix: str | None = None
    expand: list[str] = Field(default_factory=list)
    groups: str | None = None

    @model_validator(mode="after")
    def _check_roles(self) -> "ColumnRoles":
        if self.outcome == self.endogenous:
            raise ValueError("outcome and endogenous columns must differ")
        if not self.instruments and self.instrument_prefix is None:
            raise ValueError("give instrument columns or an instrument prefix")
        return self


class RunConfig(BaseModel):
    command: Command
    input_path: Path | None = None
    roles: ColumnRoles | None = None
    alpha: float = Field(default=0.05, gt=0.0, lt=0.5)
    statistic: StatisticId | None = None
    estimator: EstimatorId = EstimatorId.JIVE2
    beta0: float | None = None
    squared: bool = False
    grid: GridSpec = Field(default_factory=GridSpec)
    engine: Literal["auto", "grid", "polynomial"] = "auto"
    design_path: str | None = None
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    reps: int | None = Field(default=None, ge=1)
    out: Path | None = None
    output_format: OutputFormat = "text"
    workers: int = Field(default=1, ge=1)
    allow_large: bool = False

    @model_validator(mode="after")
    def _check_command(self) -> "RunConfig":
        if self.command == "simulate":
            if not self.design_path:
                raise ValueError("simulate needs a design file")
            return self
        if self.input_path is None or self.roles is None:
            raise ValueError(f"{self.command} needs an input file and column roles")
        if self.command == "test" and self.beta0 is None:
            raise ValueError("test needs --beta0")
        return self


def statistic_for(stat: str, variance: str | None) -> StatisticId:
    """Map the CLI's ``--stat``/``--variance`` pair to a statistic id."""
    match stat:
        case "ar":
            v = VarianceId(variance or "phi2")
            if v not in (VarianceId.PHI1, VarianceId.PHI2, VarianceId.PHI3):
                raise ValueError(f"AR accepts phi1, phi2 or phi3, got {v}")
            return StatisticId(f"ar_{v.value}")
        case "lm":
            v = VarianceId(variance or "psi2")
            if v not in (VarianceId.PSI1, VarianceId.PSI2):
                raise ValueError(f"LM accepts psi1 or psi2, got {v}")
            return StatisticId(f"lm_{v.value}")
        case "arw":
            return StatisticId.AR_W
        case "ar1":
            return StatisticId.AR1_NAIVE
        case "ar2":
            return StatisticId.AR2_NAIVE
    raise ValueError(f"unknown statistic '{stat}'")


class IngestSummary(BaseModel):
    rows_read: int
    rows_dropped: int
    retention: float
    expanded: dict[str, list[str]] = Field(default_factory=dict)
    dropped_instruments: list[str] = Field(default_factory=list)
    dropped_controls: list[str] = Field(default_factory=list)


class AnalysisReport(BaseModel):
    """Structured output of the inference commands; JSON round-trips exactly."""

    schema_version: str = SCHEMA_VERSION
    command: Command
    n: int
    k_z: int
    k_w: int
    alpha: float
    ingest: IngestSummary | None = None
    pretest: PretestOutcome | None = None
    estimates: list[EstimateOutcome] = Field(default_factory=list)
    wald: Interval | None = None
    tests: list[TestOutcome] = Field(default_factory=list)
    confidence_sets: list[ConfidenceSet] = Field(default_factory=list)
    balance: BalanceReport | None = None
    assumption: AssumptionReport | None = None
    warnings: list[str] = Field(default_factory=list)
