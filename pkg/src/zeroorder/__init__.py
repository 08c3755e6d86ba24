"""Zero-order optimization: smoothing estimators, sampling-based search,
trajectory and policy optimization."""

from . import core, distsearch, estimators, policyopt, population, search, trajopt
from .core import (
    BlockDiagonal,
    Diagonal,
    Full,
    Objective,
    RngStream,
    RunTrace,
    ScaledIdentity,
    SearchBudget,
    evaluate,
    evaluate_batch,
    parallel,
    set_workers,
)

__version__ = "0.1.0"

__all__ = [
    "core",
    "estimators",
    "search",
    "distsearch",
    "population",
    "trajopt",
    "policyopt",
    "BlockDiagonal",
    "Diagonal",
    "Full",
    "Objective",
    "RngStream",
    "RunTrace",
    "ScaledIdentity",
    "SearchBudget",
    "evaluate",
    "evaluate_batch",
    "parallel",
    "set_workers",
]
