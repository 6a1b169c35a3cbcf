"""Pipeline orchestration: configuration, records, stages and the command line."""

from .config import TRUTH, ConfigError, ExperimentConfig, derive_seed
from .pipeline import (Cell, RunSummary, cell_seed, cells, cmd_generate, cmd_run, cmd_tune,
                       fit_model, load_data, load_tuning, local_points, run_cell)
from .records import (ExplainerResult, FailureRecord, RecordWriter, RunRecord, read_failures,
                      read_records)
from .report import EmptyRecordsError, Summary, cmd_aggregate, cmd_report, summarize

__all__ = [
    "TRUTH", "ConfigError", "ExperimentConfig", "derive_seed",
    "Cell", "RunSummary", "cell_seed", "cells", "cmd_generate", "cmd_tune", "cmd_run",
    "fit_model", "load_data", "load_tuning", "local_points", "run_cell",
    "ExplainerResult", "FailureRecord", "RecordWriter", "RunRecord", "read_records",
    "read_failures", "EmptyRecordsError", "Summary", "cmd_aggregate", "cmd_report", "summarize",
]
