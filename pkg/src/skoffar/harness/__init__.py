"""Experiment configs, sweeps, the acceptance suite and the CLI."""

from .config import ExperimentConfig, ProblemSpec, default_sweep, load_config, parse_config
from .experiment import ResultRow, emit_trace_plot_data, run_experiment

__all__ = [
    "ExperimentConfig",
    "ProblemSpec",
    "ResultRow",
    "default_sweep",
    "emit_trace_plot_data",
    "load_config",
    "parse_config",
    "run_experiment",
]
