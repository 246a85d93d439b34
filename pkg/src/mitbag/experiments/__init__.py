"""Experiment harness: configs, runners and reports."""

from mitbag.experiments.config import ConfigError, ExperimentConfig, geometric_grid, load_config
from mitbag.experiments.report import ExperimentReport, load_report, write_report
from mitbag.experiments.runs import (
    ExperimentError, LowerBoundViolation, MonotonicityError, UpperBoundViolation, compare_reports,
    compute_diagnostics, run_corner_rounding_study, run_experiment, run_mass_sweep, run_oracle_disk,
    run_penalty_sweep, run_spectrum, run_upper_bound_trial, verify_form_identity, verify_lower_bound,
    verify_report,
)

__all__ = [
    "ConfigError", "ExperimentConfig", "ExperimentError", "ExperimentReport", "LowerBoundViolation",
    "MonotonicityError", "UpperBoundViolation", "compare_reports", "compute_diagnostics",
    "geometric_grid", "load_config", "load_report", "run_corner_rounding_study", "run_experiment",
    "run_mass_sweep", "run_oracle_disk", "run_penalty_sweep", "run_spectrum", "run_upper_bound_trial",
    "verify_form_identity", "verify_lower_bound", "verify_report", "write_report",
]
