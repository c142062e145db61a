"""Strict parser for ``key = value`` simulation design files.

Lines are ``key = value``; ``#`` starts a comment; lists are comma-separated.
Bundled designs ship inside ``manyiv.designs`` and can be named without a path.
"""

from importlib import resources
from pathlib import Path

from pydantic import ValidationError

from manyiv.errors import ManyIVError
from manyiv.models.simulation import Experiment, SimDesign

EXPERIMENT_KEYS = {"name", "experiment", "statistics", "estimators", "alpha", "plot"}
LIST_KEYS = {"pi", "weights", "delta_grid", "statistics", "estimators"}


class DesignFileError(ManyIVError):
    def __init__(self, message: str, key: str | None = None) -> None:
        self.key = key
        super().__init__(message)


def bundled_designs() -> list[str]:
    root = resources.files("manyiv.designs")
    return sorted(p.name.removesuffix(".txt") for p in root.iterdir() if p.name.endswith(".txt"))


def _read(source: str) -> tuple[str, str]:
    path = Path(source)
    if path.is_file():
        return path.stem, path.read_text(encoding="utf-8")
    name = source.removesuffix(".txt")
    resource = resources.files("manyiv.designs") / f"{name}.txt"
    if not resource.is_file():
        raise DesignFileError(
            f"no design file '{source}' (bundled: {', '.join(bundled_designs())})"
        )
    return name, resource.read_text(encoding="utf-8")


def parse_design_text(text: str, default_name: str = "design") -> Experiment:
    design_keys = set(SimDesign.model_fields)
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DesignFileError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in design_keys and key not in EXPERIMENT_KEYS:
            raise DesignFileError(f"line {lineno}: unknown key '{key}'", key)
        if key in values:
            raise DesignFileError(f"line {lineno}: duplicate key '{key}'", key)
        values[key] = [v.strip() for v in value.split(",") if v.strip()] if key in LIST_KEYS else value

    design = {k: v for k, v in values.items() if k in design_keys}
    rest = {k: v for k, v in values.items() if k in EXPERIMENT_KEYS}
    rest.setdefault("name", default_name)
    try:
        return Experiment.model_validate({**rest, "design": SimDesign.model_validate(design)})
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(p) for p in first["loc"] if p != "design") or None
        raise DesignFileError(f"invalid design: {first['msg']} ({key})", key) from exc


def load_design(source: str, seed: int | None = None, reps: int | None = None) -> Experiment:
    """Parse a design file (path or bundled name), applying CLI overrides."""
    name, text = _read(source)
    experiment = parse_design_text(text, name)
    overrides = {k: v for k, v in (("seed", seed), ("reps", reps)) if v is not None}
    if overrides:
        design = SimDesign.model_validate({**experiment.design.model_dump(exclude_unset=True), **overrides})
        experiment = experiment.model_copy(update={"design": design})
    return experiment
