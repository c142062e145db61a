"""Command implementations behind the ``manyiv`` entry point.

Each command takes a validated RunConfig plus the loaded Settings and returns
a report model; rendering and file output happen in ``manyiv.main``.
"""

from pathlib import Path

import numpy as np

from manyiv.cli.design_file import load_design
from manyiv.cli.ingest import ingest_csv
from manyiv.cli.plots import plot_power_curves
from manyiv.cli.reporting import write_json, write_sim_csv
from manyiv.config import Settings
from manyiv.core.projections import ProjectionBundle, balance_check
from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset
from manyiv.models.outcomes import (
    AssumptionReport,
    Decision,
    EstimatorId,
    Flag,
    StatisticId,
    ZeroDiagA,
)
from manyiv.models.run_config import AnalysisReport, GridSpec, IngestSummary, RunConfig
from manyiv.models.simulation import SimReport
from manyiv.services.confidence_sets import invert_test
from manyiv.services.estimators import beta3_zero_diag, estimate, jive2, wald_interval
from manyiv.services.pretest import pretest_ftilde
from manyiv.services.robust_tests import build_test
from manyiv.services.zero_diagonal import check_balanced_design, compute_theta
from manyiv.simulation.runner import run_experiment

logger = get_logger(__name__)


class Workspace:
    """A loaded dataset with its projections and, when controls exist, the zero-diagonal weights."""

    def __init__(self, dataset: Dataset, summary: IngestSummary, bundle: ProjectionBundle) -> None:
        self.dataset = dataset
        self.summary = summary
        self.bundle = bundle
        self.weights: ZeroDiagA | None = None
        self.assumption: AssumptionReport | None = None

    def report(self, config: RunConfig) -> AnalysisReport:
        return AnalysisReport(
            command=config.command,
            n=self.dataset.n,
            k_z=self.bundle.k_z,
            k_w=self.bundle.k_w,
            alpha=config.alpha,
            ingest=self.summary,
        )

    def zero_diagonal(self, settings: Settings) -> ZeroDiagA:
        if self.weights is None:
            self.weights = compute_theta(
                self.bundle, np.asarray(self.dataset.W), verify=settings.verify_projections
            )
        return self.weights

    def check_assumption(self, settings: Settings) -> AssumptionReport:
        """Balanced-design report; a failed θ solve is reported, not raised."""
        if self.assumption is None:
            theta = None
            try:
                theta = self.zero_diagonal(settings).theta
            except ManyIVError as exc:
                logger.warning("theta_unavailable", error=str(exc), error_type=type(exc).__name__)
            self.assumption = check_balanced_design(
                self.bundle, theta, settings.balance_delta, settings.balance_warn
            )
        return self.assumption


def load_workspace(config: RunConfig, settings: Settings) -> Workspace:
    assert config.input_path is not None and config.roles is not None
    dataset, summary = ingest_csv(config.input_path, config.roles, settings.min_row_retention)
    bundle = ProjectionBundle.for_dataset(dataset, verify=settings.verify_projections)
    return Workspace(dataset, summary, bundle)


def grid_spec(config: RunConfig, settings: Settings) -> GridSpec:
    """Grid settings: explicit overrides from the run, remaining fields from Settings."""
    explicit = config.grid.model_dump(exclude_unset=True)
    base = GridSpec(
        points=settings.grid_points,
        halfwidth_se=settings.grid_halfwidth_se,
        max_extensions=settings.grid_max_extensions,
        tail_decades=settings.grid_tail_decades,
        rtol=settings.bisection_rtol,
    )
    return base.model_copy(update=explicit)


def default_statistic(ws: Workspace) -> StatisticId:
    return StatisticId.AR_W if ws.bundle.has_controls else StatisticId.LM_PSI2


def _weights_for(statistic: StatisticId, ws: Workspace, settings: Settings) -> tuple[ZeroDiagA | None, AssumptionReport | None]:
    if statistic != StatisticId.AR_W:
        return None, None
    return ws.zero_diagonal(settings), ws.check_assumption(settings)


def cmd_estimate(config: RunConfig, settings: Settings) -> AnalysisReport:
    ws = load_workspace(config, settings)
    report = ws.report(config)
    if config.estimator == EstimatorId.BETA3:
        report.assumption = ws.check_assumption(settings)
        outcome = beta3_zero_diag(ws.dataset, ws.bundle, ws.zero_diagonal(settings), settings.denominator_floor)
    else:
        report.balance = balance_check(ws.bundle, settings.balance_delta, settings.balance_warn)
        outcome = estimate(config.estimator, ws.dataset, ws.bundle)
    report.estimates.append(outcome)
    if outcome.std_error is not None:
        report.wald = wald_interval(outcome, config.alpha)
    return report


def cmd_pretest(config: RunConfig, settings: Settings) -> AnalysisReport:
    ws = load_workspace(config, settings)
    report = ws.report(config)
    report.pretest = pretest_ftilde(
        ws.dataset,
        ws.bundle,
        settings.pretest_cutoff,
        settings.pretest_benchmark,
        settings.variance_floor,
    )
    return report


def cmd_test(config: RunConfig, settings: Settings) -> AnalysisReport:
    assert config.beta0 is not None
    ws = load_workspace(config, settings)
    report = ws.report(config)
    statistic = config.statistic or default_statistic(ws)
    weights, report.assumption = _weights_for(statistic, ws, settings)
    test = build_test(
        statistic,
        ws.dataset,
        ws.bundle,
        weights=weights,
        assumption=report.assumption,
        floor=settings.variance_floor,
        squared=config.squared,
        phi3_max_n=settings.phi3_max_n,
        allow_large=config.allow_large,
    )
    report.tests.append(test.evaluate(config.beta0, config.alpha))
    return report


def cmd_confset(config: RunConfig, settings: Settings) -> AnalysisReport:
    ws = load_workspace(config, settings)
    report = ws.report(config)
    statistic = config.statistic or default_statistic(ws)
    weights, report.assumption = _weights_for(statistic, ws, settings)
    report.confidence_sets.append(
        invert_test(
            ws.dataset,
            ws.bundle,
            statistic,
            config.alpha,
            grid_spec(config, settings),
            config.engine,
            weights=weights,
            assumption=report.assumption,
            workers=config.workers,
            floor=settings.variance_floor,
        )
    )
    return report


def cmd_analyze(config: RunConfig, settings: Settings) -> AnalysisReport:
    """Pre-test, then the jack-knife estimate and robust confidence sets.

    Every section runs even when an earlier one fails; failures become
    report warnings. The Wald interval is only reported under strong
    identification.
    """
    ws = load_workspace(config, settings)
    report = ws.report(config)
    spec = grid_spec(config, settings)

    try:
        report.pretest = pretest_ftilde(
            ws.dataset, ws.bundle, settings.pretest_cutoff, settings.pretest_benchmark, settings.variance_floor
        )
    except ManyIVError as exc:
        report.warnings.append(f"pretest failed, identification strength undetermined: {exc}")
    weak = report.pretest is None or report.pretest.decision == Decision.WEAK
    if report.pretest is not None and weak:
        report.warnings.append("weak identification: the jack-knife t-test is unreliable, use the robust sets")

    weights: ZeroDiagA | None = None
    if ws.bundle.has_controls:
        report.assumption = ws.check_assumption(settings)
        weights = ws.weights
        report.warnings.extend(report.assumption.warnings)
        if not report.assumption.passed:
            report.warnings.append("BALANCED-DESIGN ASSUMPTION VIOLATED: AR_W results may be unreliable")
        statistics = [StatisticId.AR_W]
    else:
        report.balance = balance_check(ws.bundle, settings.balance_delta, settings.balance_warn)
        if not report.balance.passed:
            report.warnings.append(
                f"max P_ii = {report.balance.max_hat:.4f} exceeds {report.balance.delta}"
            )
        statistics = [StatisticId.LM_PSI2, StatisticId.AR_PHI2]

    try:
        if ws.bundle.has_controls:
            if weights is None:
                raise ManyIVError("zero-diagonal weights unavailable")
            outcome = beta3_zero_diag(ws.dataset, ws.bundle, weights, settings.denominator_floor)
        else:
            outcome = jive2(ws.dataset, ws.bundle, settings.denominator_floor)
        if weak:
            outcome.flags.append(Flag.WEAK_IDENTIFICATION)
        report.estimates.append(outcome)
        if not weak and outcome.std_error is not None:
            report.wald = wald_interval(outcome, config.alpha)
    except ManyIVError as exc:
        report.warnings.append(f"estimate failed: {exc}")

    for statistic in statistics:
        try:
            report.confidence_sets.append(
                invert_test(
                    ws.dataset,
                    ws.bundle,
                    statistic,
                    config.alpha,
                    spec,
                    config.engine,
                    weights=weights,
                    assumption=report.assumption,
                    workers=config.workers,
                    floor=settings.variance_floor,
                )
            )
        except ManyIVError as exc:
            report.warnings.append(f"{statistic.value} confidence set failed: {exc}")

    for warning in report.warnings:
        logger.warning("analysis_warning", message=warning)
    return report


def cmd_simulate(config: RunConfig, settings: Settings) -> tuple[SimReport, list[Path]]:
    """Run a design file and write ``<name>.csv``, ``<name>.json`` and, for power runs, ``<name>.svg``."""
    assert config.design_path is not None
    experiment = load_design(config.design_path, seed=config.seed, reps=config.reps)
    report = run_experiment(experiment, config.workers, settings.controls_redraws)

    out_dir = config.out or Path(".")
    written = [out_dir / f"{report.name}.csv", out_dir / f"{report.name}.json"]
    write_sim_csv(report, written[0])
    write_json(report, written[1])
    if experiment.plot and report.rejections:
        written.append(plot_power_curves(report, out_dir / f"{report.name}.svg"))
    logger.info("simulation_written", files=[str(p) for p in written])
    return report, written


COMMANDS = {
    "analyze": cmd_analyze,
    "pretest": cmd_pretest,
    "test": cmd_test,
    "confset": cmd_confset,
    "estimate": cmd_estimate,
}
