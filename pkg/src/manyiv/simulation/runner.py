"""Monte Carlo runners: size, power curves with theoretical overlay, and bias.

Replications are independent and run on a thread pool; results are collected
in replication order so the report does not depend on scheduling.
"""

import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from manyiv.core.projections import PerfectFitError, ProjectionBundle
from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset
from manyiv.models.outcomes import EstimateOutcome, EstimatorId, StatisticId
from manyiv.models.simulation import BiasRow, Experiment, RejectionRow, SimDesign, SimReport
from manyiv.services.estimators import ESTIMATORS, beta3_zero_diag, concentration
from manyiv.services.power import power_curve
from manyiv.services.robust_tests import build_test
from manyiv.services.variance import true_phi, true_psi
from manyiv.services.zero_diagonal import compute_theta
from manyiv.simulation.designs import ControlsDesign, GroupDesign, build_design, replication_seed

logger = get_logger(__name__)

AR_FAMILY = {StatisticId.AR_PHI1, StatisticId.AR_PHI2, StatisticId.AR_PHI3}
LM_FAMILY = {StatisticId.LM_PSI1, StatisticId.LM_PSI2}


def _warm(bundle: ProjectionBundle) -> None:
    """Fill the bundle's cached weight matrices before threads share it."""
    _ = bundle.jack, bundle.jack_sq, bundle.jack_perp
    try:
        _ = bundle.cross_fit_sq
        if bundle.has_controls:
            _ = bundle.perp_cross_fit_sq
    except PerfectFitError:
        pass


def _map(func: Callable[[int], object], reps: int, workers: int) -> list:
    if workers <= 1:
        return [func(r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(reps)))


def _concentration(fixed: GroupDesign | ControlsDesign):
    return concentration(fixed.pi, fixed.draw(0), fixed.bundle)


def _rejections(
    fixed: GroupDesign | ControlsDesign,
    statistics: Sequence[StatisticId],
    deltas: Sequence[float],
    alpha: float,
    workers: int,
) -> tuple[list[RejectionRow], dict[str, int], list[float]]:
    design = fixed.design
    weights = getattr(fixed, "weights", None)
    assumption = getattr(fixed, "assumption", None)

    def replicate(rep: int) -> tuple[dict[tuple[StatisticId, float], bool | None], float | None]:
        dataset = fixed.draw(rep)
        result: dict[tuple[StatisticId, float], bool | None] = {}
        for sid in statistics:
            try:
                test = build_test(sid, dataset, fixed.bundle, weights=weights, assumption=assumption)
            except ManyIVError as exc:
                logger.warning("replication_failed", rep=rep, statistic=str(sid), error=str(exc), error_type=type(exc).__name__)
                result.update({(sid, d): None for d in deltas})
                continue
            for delta in deltas:
                try:
                    outcome = test.evaluate(design.beta_true - delta, alpha)
                    result[(sid, delta)] = outcome.rejected
                except ManyIVError as exc:
                    logger.warning("replication_failed", rep=rep, statistic=str(sid), error=str(exc), error_type=type(exc).__name__)
                    result[(sid, delta)] = None
        oracle_psi = None
        if isinstance(fixed, GroupDesign):
            oracle_psi = true_psi(fixed.sigma2, fixed.gamma, dataset.x, fixed.bundle)
        return result, oracle_psi

    outputs = _map(replicate, design.reps, workers)

    rows: list[RejectionRow] = []
    errors: dict[str, int] = {}
    for sid in statistics:
        for delta in deltas:
            flags = [out[0][(sid, delta)] for out in outputs]
            valid = [f for f in flags if f is not None]
            failed = len(flags) - len(valid)
            if failed:
                errors[f"{sid.value}@{delta!r}"] = failed
            rows.append(
                RejectionRow(
                    statistic=sid,
                    delta=float(delta),
                    beta0=float(design.beta_true - delta),
                    reps=design.reps,
                    valid=len(valid),
                    rejections=int(sum(valid)),
                )
            )
    psis = [out[1] for out in outputs if out[1] is not None]
    return rows, errors, psis


def _experiment_report(
    name: str,
    experiment: str,
    design: SimDesign,
    statistics: Sequence[StatisticId],
    deltas: Sequence[float],
    alpha: float,
    workers: int,
    max_redraws: int,
    overlay: bool,
) -> SimReport:
    started = time.perf_counter()
    fixed = build_design(design, max_redraws)
    _warm(fixed.bundle)
    rows, errors, psis = _rejections(fixed, list(statistics), list(deltas), alpha, workers)
    conc = _concentration(fixed)

    predictions = []
    if overlay and isinstance(fixed, GroupDesign) and psis:
        phi0 = true_phi(fixed.sigma2, fixed.bundle)
        psi0 = float(np.mean(psis))
        predictions = power_curve(conc.mu2, fixed.bundle.k_z, phi0, psi0, deltas, alpha)
        by_delta = {p.delta: p for p in predictions}
        for i, row in enumerate(rows):
            pred = by_delta.get(row.delta)
            if pred is None:
                continue
            if row.statistic in AR_FAMILY:
                rows[i] = row.model_copy(update={"predicted": pred.ar_power})
            elif row.statistic in LM_FAMILY:
                rows[i] = row.model_copy(update={"predicted": pred.lm_power})

    report = SimReport(
        name=name,
        experiment=experiment,
        design=design,
        alpha=alpha,
        rejections=rows,
        predictions=predictions,
        concentration=conc,
        seeds=[replication_seed(design, r) for r in range(design.reps)],
        errors=errors,
        runtime_seconds=time.perf_counter() - started,
    )
    logger.info("experiment_done", name=name, experiment=experiment, reps=design.reps, runtime=report.runtime_seconds)
    return report


def run_size(
    design: SimDesign,
    statistics: Sequence[StatisticId | str],
    alpha: float = 0.05,
    workers: int = 1,
    max_redraws: int = 20,
    name: str = "size",
) -> SimReport:
    """Null rejection rates (β₀ = β) per statistic."""
    return _experiment_report(
        name, "size", design, [StatisticId(s) for s in statistics], [0.0], alpha, workers, max_redraws, overlay=False
    )


def run_power_curve(
    design: SimDesign,
    statistics: Sequence[StatisticId | str],
    alpha: float = 0.05,
    workers: int = 1,
    max_redraws: int = 20,
    name: str = "power",
) -> SimReport:
    """Rejection rates at β₀ = β − Δ over the design's Δ grid, with predicted power."""
    return _experiment_report(
        name,
        "power",
        design,
        [StatisticId(s) for s in statistics],
        design.delta_grid,
        alpha,
        workers,
        max_redraws,
        overlay=True,
    )


def _estimator_calls(
    fixed: GroupDesign | ControlsDesign, estimators: Sequence[EstimatorId]
) -> dict[EstimatorId, Callable[[Dataset], EstimateOutcome]]:
    weights = getattr(fixed, "weights", None)
    calls: dict[EstimatorId, Callable[[Dataset], EstimateOutcome]] = {}
    for eid in estimators:
        if eid == EstimatorId.BETA3:
            a = weights if weights is not None else compute_theta(fixed.bundle)
            calls[eid] = lambda ds, a=a: beta3_zero_diag(ds, fixed.bundle, a)
        else:
            func = ESTIMATORS[eid]
            calls[eid] = lambda ds, func=func: func(ds, fixed.bundle)
    return calls


def run_bias(
    design: SimDesign,
    estimators: Sequence[EstimatorId | str],
    workers: int = 1,
    max_redraws: int = 20,
    name: str = "bias",
) -> SimReport:
    """Mean relative bias (β̂ − β)/β per estimator; failed replications are counted apart."""
    if design.beta_true == 0.0:
        raise ValueError("relative bias needs beta_true != 0")
    started = time.perf_counter()
    ids = [EstimatorId(e) for e in estimators]
    fixed = build_design(design, max_redraws)
    _warm(fixed.bundle)
    calls = _estimator_calls(fixed, ids)

    def replicate(rep: int) -> dict[EstimatorId, float | None]:
        dataset = fixed.draw(rep)
        out: dict[EstimatorId, float | None] = {}
        for eid, call in calls.items():
            try:
                out[eid] = (call(dataset).beta_hat - design.beta_true) / design.beta_true
            except ManyIVError as exc:
                logger.warning("replication_failed", rep=rep, estimator=str(eid), error=str(exc), error_type=type(exc).__name__)
                out[eid] = None
        return out

    outputs = _map(replicate, design.reps, workers)
    rows = []
    errors: dict[str, int] = {}
    for eid in ids:
        values = np.array([o[eid] for o in outputs if o[eid] is not None], dtype=float)
        failed = design.reps - values.size
        if failed:
            errors[eid.value] = failed
        mean = float(values.mean()) if values.size else float("nan")
        se = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
        rows.append(
            BiasRow(estimator=eid, reps=design.reps, valid=int(values.size), mean_relative_bias=mean, mc_se=se, degenerate=failed)
        )

    report = SimReport(
        name=name,
        experiment="bias",
        design=design,
        alpha=0.05,
        bias=rows,
        concentration=_concentration(fixed),
        seeds=[replication_seed(design, r) for r in range(design.reps)],
        errors=errors,
        runtime_seconds=time.perf_counter() - started,
    )
    logger.info("experiment_done", name=name, experiment="bias", reps=design.reps, runtime=report.runtime_seconds)
    return report


def run_experiment(experiment: Experiment, workers: int = 1, max_redraws: int = 20) -> SimReport:
    match experiment.experiment:
        case "size":
            return run_size(experiment.design, experiment.statistics, experiment.alpha, workers, max_redraws, experiment.name)
        case "power":
            return run_power_curve(experiment.design, experiment.statistics, experiment.alpha, workers, max_redraws, experiment.name)
        case _:
            return run_bias(experiment.design, experiment.estimators, workers, max_redraws, experiment.name)
