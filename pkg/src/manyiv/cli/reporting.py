"""Human-readable tables and structured files for reports."""

from pathlib import Path

import pandas as pd
from pydantic import BaseModel

from manyiv.models.outcomes import ConfidenceSet, Interval
from manyiv.models.run_config import AnalysisReport
from manyiv.models.simulation import SimReport

REJECTION_COLUMNS = [
    "experiment", "statistic", "delta", "beta0", "reps", "valid", "rejections", "rate", "mc_se", "predicted",
]
BIAS_COLUMNS = ["experiment", "estimator", "reps", "valid", "mean_relative_bias", "mc_se"]


def format_interval(interval: Interval) -> str:
    lower = "-inf" if interval.lower is None else f"{interval.lower:.6g}"
    upper = "+inf" if interval.upper is None else f"{interval.upper:.6g}"
    return f"[{lower}, {upper}]"


def format_set(cs: ConfidenceSet) -> str:
    if not cs.intervals:
        return "empty"
    return " U ".join(format_interval(i) for i in cs.intervals)


def analysis_rows(report: AnalysisReport) -> pd.DataFrame:
    """Flatten a report into (section, item, value) rows."""
    rows: list[tuple[str, str, str]] = [
        ("data", "N", str(report.n)),
        ("data", "K_Z", str(report.k_z)),
        ("data", "K_W", str(report.k_w)),
    ]
    if report.pretest is not None:
        pt = report.pretest
        rows += [
            ("pretest", "first-stage F", f"{pt.first_stage_F:.4g}"),
            ("pretest", "F-tilde", f"{pt.ftilde:.4g}"),
            ("pretest", "decision", f"{pt.decision.value} (cutoff {pt.cutoff})"),
        ]
    for est in report.estimates:
        se = "n/a" if est.std_error is None else f"{est.std_error:.6g}"
        rows.append(("estimate", est.estimator_id.value, f"{est.beta_hat:.6g} (se {se})"))
    if report.wald is not None:
        rows.append(("estimate", "Wald interval", format_interval(report.wald)))
    for t in report.tests:
        flags = f" [{', '.join(f.value for f in t.flags)}]" if t.flags else ""
        decision = "reject" if t.rejected else "do not reject"
        rows.append(
            ("test", f"{t.statistic_id.value} @ {t.beta0:g}", f"{t.statistic:.4f} p={t.p_value:.4f} {decision}{flags}")
        )
    for cs in report.confidence_sets:
        flags = f" [{', '.join(f.value for f in cs.flags)}]" if cs.flags else ""
        rows.append(("confidence set", f"{cs.statistic_id.value} ({1 - cs.alpha:.0%})", format_set(cs) + flags))
    if report.balance is not None:
        rows.append(("checks", "max P_ii", f"{report.balance.max_hat:.4f} ({'ok' if report.balance.passed else 'FAIL'})"))
    if report.assumption is not None:
        a = report.assumption
        rows.append(("checks", "balanced design", "ok" if a.passed else "VIOLATED"))
    for w in report.warnings:
        rows.append(("warning", "", w))
    return pd.DataFrame(rows, columns=["section", "item", "value"])


def render_text(report: AnalysisReport) -> str:
    return analysis_rows(report).to_string(index=False)


def render_csv(report: AnalysisReport) -> str:
    return analysis_rows(report).to_csv(index=False)


def write_json(model: BaseModel, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2), encoding="utf-8")


def read_report(path: Path) -> AnalysisReport:
    return AnalysisReport.model_validate_json(path.read_text(encoding="utf-8"))


def rejection_frame(report: SimReport) -> pd.DataFrame:
    records = [
        {"experiment": report.name, **row.model_dump(mode="json")} for row in report.rejections
    ]
    return pd.DataFrame(records, columns=REJECTION_COLUMNS)


def bias_frame(report: SimReport) -> pd.DataFrame:
    records = [{"experiment": report.name, **row.model_dump(mode="json")} for row in report.bias]
    return pd.DataFrame(records, columns=BIAS_COLUMNS)


def write_sim_csv(report: SimReport, path: Path) -> None:
    """One row per statistic × Δ (or per estimator for bias runs); no timing columns."""
    frame = bias_frame(report) if report.experiment == "bias" else rejection_frame(report)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def render_sim_text(report: SimReport) -> str:
    frame = bias_frame(report) if report.experiment == "bias" else rejection_frame(report)
    return frame.to_string(index=False)
