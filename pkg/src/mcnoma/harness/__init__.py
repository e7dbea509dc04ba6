"""Experiment sweeps, result files and figures."""

from .experiments import (
    KINDS,
    METHODS,
    ExperimentSpec,
    ResultRow,
    ResultTable,
    power_for_snr,
    receive_snr,
    run_experiment,
    seed_for,
)
from .results import COLUMNS, SCHEMA_VERSION, emit_all, emit_results, read_csv

__all__ = [
    "KINDS",
    "METHODS",
    "ExperimentSpec",
    "ResultRow",
    "ResultTable",
    "power_for_snr",
    "receive_snr",
    "run_experiment",
    "seed_for",
    "COLUMNS",
    "SCHEMA_VERSION",
    "emit_all",
    "emit_results",
    "read_csv",
]
