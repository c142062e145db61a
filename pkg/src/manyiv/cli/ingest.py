"""CSV ingestion: column roles, categorical expansion and the missing-row policy."""

from pathlib import Path

import pandas as pd

from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset
from manyiv.models.run_config import ColumnRoles, IngestSummary

logger = get_logger(__name__)


class IngestError(ManyIVError):
    def __init__(self, message: str, details: dict | None = None) -> None:
        self.details = details or {}
        super().__init__(message)


def _select(columns: list[str], names: list[str], prefix: str | None, exclude: set[str]) -> list[str]:
    if names:
        return list(names)
    if prefix is None:
        return []
    return [c for c in columns if c.startswith(prefix) and c not in exclude]


def _expand(frame: pd.DataFrame, role: list[str], expand: list[str]) -> tuple[list[str], dict[str, list[str]], pd.DataFrame]:
    """Replace each categorical in ``role`` by dummies, dropping the first level."""
    out_cols: list[str] = []
    expanded: dict[str, list[str]] = {}
    for col in role:
        if col not in expand:
            out_cols.append(col)
            continue
        dummies = pd.get_dummies(frame[col], prefix=col, drop_first=True, dtype=float)
        frame = pd.concat([frame, dummies], axis=1)
        expanded[col] = list(dummies.columns)
        out_cols.extend(dummies.columns)
    return out_cols, expanded, frame


def ingest_csv(path: str | Path, roles: ColumnRoles, min_retention: float = 0.9) -> tuple[Dataset, IngestSummary]:
    """Read a UTF-8 CSV with a header row into a Dataset.

    Rows with missing values in any used column are dropped; the run stops
    if fewer than ``min_retention`` of the rows survive.
    """
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    columns = list(frame.columns)

    base = {roles.outcome, roles.endogenous}
    instruments = _select(columns, roles.instruments, roles.instrument_prefix, base)
    controls = _select(columns, roles.controls, roles.control_prefix, base | set(instruments))
    wanted = [roles.outcome, roles.endogenous, *instruments, *controls]
    if roles.groups:
        wanted.append(roles.groups)
    missing = [c for c in wanted if c not in columns]
    if missing:
        raise IngestError(f"missing columns: {', '.join(missing)}", {"missing": missing})
    unknown_expand = [c for c in roles.expand if c not in instruments and c not in controls]
    if unknown_expand:
        raise IngestError(f"--expand columns are not instruments or controls: {', '.join(unknown_expand)}")
    if not instruments:
        raise IngestError("no instrument columns selected")

    rows_read = len(frame)
    complete = frame[wanted].notna().all(axis=1)
    frame = frame.loc[complete].reset_index(drop=True)
    dropped = rows_read - len(frame)
    retention = len(frame) / rows_read if rows_read else 0.0
    if dropped:
        logger.warning("rows_with_missing_values", dropped=dropped, kept=len(frame), retention=retention)
    if retention < min_retention:
        raise IngestError(
            f"only {retention:.1%} of rows are complete (need {min_retention:.0%})",
            {"rows_read": rows_read, "rows_dropped": dropped},
        )

    instruments, expanded_z, frame = _expand(frame, instruments, roles.expand)
    controls, expanded_w, frame = _expand(frame, controls, roles.expand)

    numeric_cols = [roles.outcome, roles.endogenous, *instruments, *controls]
    numeric = frame[numeric_cols].apply(pd.to_numeric, errors="coerce")
    bad = [c for c in numeric_cols if numeric[c].isna().any()]
    if bad:
        raise IngestError(f"non-numeric cells in: {', '.join(bad)}", {"columns": bad})

    dataset = Dataset.from_arrays(
        y=numeric[roles.outcome].to_numpy(dtype=float),
        x=numeric[roles.endogenous].to_numpy(dtype=float),
        Z=numeric[instruments].to_numpy(dtype=float),
        W=numeric[controls].to_numpy(dtype=float) if controls else None,
        instrument_names=instruments,
        control_names=controls,
        group_labels=frame[roles.groups].to_numpy() if roles.groups else None,
    )
    summary = IngestSummary(
        rows_read=rows_read,
        rows_dropped=dropped,
        retention=retention,
        expanded={**expanded_z, **expanded_w},
        dropped_instruments=dataset.dropped_instruments,
        dropped_controls=dataset.dropped_controls,
    )
    logger.info("dataset_loaded", n=dataset.n, k_z=dataset.k_z, k_w=dataset.k_w, path=str(path))
    return dataset, summary
