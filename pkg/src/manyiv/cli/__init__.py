from manyiv.cli.commands import (
    COMMANDS,
    cmd_analyze,
    cmd_confset,
    cmd_estimate,
    cmd_pretest,
    cmd_simulate,
    cmd_test,
)
from manyiv.cli.design_file import DesignFileError, load_design, parse_design_text
from manyiv.cli.ingest import IngestError, ingest_csv

__all__ = [
    "COMMANDS",
    "DesignFileError",
    "IngestError",
    "cmd_analyze",
    "cmd_confset",
    "cmd_estimate",
    "cmd_pretest",
    "cmd_simulate",
    "cmd_test",
    "ingest_csv",
    "load_design",
    "parse_design_text",
]
