from manyiv.models.dataset import Dataset, DatasetError
from manyiv.models.outcomes import (
    AssumptionReport,
    BalanceReport,
    Concentration,
    ConfidenceSet,
    Decision,
    EstimateOutcome,
    EstimatorId,
    Flag,
    Interval,
    PowerPrediction,
    PretestOutcome,
    Sidedness,
    StatisticId,
    TestOutcome,
    VarianceEstimate,
    VarianceId,
    ZeroDiagA,
)
from manyiv.models.run_config import AnalysisReport, ColumnRoles, GridSpec, RunConfig
from manyiv.models.simulation import BiasRow, Experiment, RejectionRow, SimDesign, SimReport

__all__ = [
    "AnalysisReport",
    "AssumptionReport",
    "BalanceReport",
    "BiasRow",
    "ColumnRoles",
    "Concentration",
    "ConfidenceSet",
    "Dataset",
    "DatasetError",
    "Decision",
    "EstimateOutcome",
    "EstimatorId",
    "Experiment",
    "Flag",
    "GridSpec",
    "Interval",
    "PowerPrediction",
    "PretestOutcome",
    "RejectionRow",
    "RunConfig",
    "Sidedness",
    "SimDesign",
    "SimReport",
    "StatisticId",
    "TestOutcome",
    "VarianceEstimate",
    "VarianceId",
    "ZeroDiagA",
]
