"""Experiment configuration, train-then-freeze runs and sweeps."""

from .config import RunConfig, load_config, load_config_file
from .runner import ExperimentResult, ReplicateResult, run_experiment, run_replicate
from .sweep import SweepRow, policy_grid, policy_grid_export, sweep

__all__ = [
    "ExperimentResult",
    "ReplicateResult",
    "RunConfig",
    "SweepRow",
    "load_config",
    "load_config_file",
    "policy_grid",
    "policy_grid_export",
    "run_experiment",
    "run_replicate",
    "sweep",
]
