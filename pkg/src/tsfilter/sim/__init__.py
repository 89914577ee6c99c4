"""Spacecraft attitude and gyro-bias Monte-Carlo scenario."""
from .cli import monte_carlo, run_experiment
from .config import ScenarioConfig, format_config, load_config, parse_config
from .filter import BatchResult, run_batch, run_filter, run_many
from .records import RunRecord, aggregate, read_runs, to_records, write_aggregate, write_runs
from .scenario import dipole_field, orbit_state, simulate_gyro, true_attitude

__all__ = [
    "monte_carlo", "run_experiment",
    "ScenarioConfig", "format_config", "load_config", "parse_config",
    "BatchResult", "run_batch", "run_filter", "run_many",
    "RunRecord", "aggregate", "read_runs", "to_records", "write_aggregate", "write_runs",
    "dipole_field", "orbit_state", "simulate_gyro", "true_attitude",
]
