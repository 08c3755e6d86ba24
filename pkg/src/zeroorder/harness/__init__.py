"""Benchmarks, landscape probes, the experiment runner and the CLI."""

from .config import ExperimentConfig, ProbeConfig
from .functions import AnalyticFunction, double_well_1d, make_function, rastrigin, rosenbrock, sphere
from .probes import ProbeTable, linear_grid, risk_probe, surrogate_probe
from .registry import ALGORITHMS, PROBLEM_IDS, build_problem
from .runner import run_experiment, run_seed, summarize

__all__ = [
    "AnalyticFunction",
    "sphere",
    "rosenbrock",
    "rastrigin",
    "double_well_1d",
    "make_function",
    "ProbeTable",
    "linear_grid",
    "surrogate_probe",
    "risk_probe",
    "ExperimentConfig",
    "ProbeConfig",
    "ALGORITHMS",
    "PROBLEM_IDS",
    "build_problem",
    "run_experiment",
    "run_seed",
    "summarize",
]
