"""Schema-validated experiment and probe configurations."""

from __future__ import annotations

import json
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .functions import FUNCTIONS
from .registry import ALGORITHMS, PROBLEM_IDS, PROBLEM_OPTIONS

__all__ = ["BudgetConfig", "ExperimentConfig", "GridConfig", "ProbeConfig", "load_json"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BudgetConfig(_Strict):
    max_iters: Optional[int] = Field(100, ge=0)
    max_evals: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _bounded(self):
        if self.max_iters is None and self.max_evals is None:
            raise ValueError("budget needs max_iters or max_evals")
        return self


class ExperimentConfig(_Strict):
    """One algorithm on one problem over several seeds.

    ``hyperparameters`` and ``problem_options`` may only use keys the
    algorithm / problem declares; :meth:`resolved` fills in every default.
    """

    algorithm: str
    problem: str
    hyperparameters: Dict[str, Any] = Field(default_factory=dict)
    problem_options: Dict[str, Any] = Field(default_factory=dict)
    n_seeds: int = Field(6, ge=1)
    seeds: Optional[List[int]] = None
    budget: BudgetConfig = Field(default_factory=BudgetConfig)
    output: str = "results"

    @field_validator("algorithm")
    @classmethod
    def _known_algorithm(cls, v):
        if v not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {v!r}; valid: {sorted(ALGORITHMS)}")
        return v

    @field_validator("problem")
    @classmethod
    def _known_problem(cls, v):
        if v not in PROBLEM_IDS:
            raise ValueError(f"unknown problem {v!r}; valid: {list(PROBLEM_IDS)}")
        return v

    @model_validator(mode="after")
    def _known_keys(self):
        bad = set(self.hyperparameters) - set(ALGORITHMS[self.algorithm].defaults)
        if bad:
            raise ValueError(f"unknown hyperparameters for {self.algorithm}: {sorted(bad)}")
        bad = set(self.problem_options) - set(PROBLEM_OPTIONS[self.problem])
        if bad:
            raise ValueError(f"unknown options for {self.problem}: {sorted(bad)}")
        if self.seeds is not None:
            if len(self.seeds) != self.n_seeds:
                raise ValueError("n_seeds must equal len(seeds)")
            if len(set(self.seeds)) != len(self.seeds) or min(self.seeds) < 0:
                raise ValueError("seeds must be distinct non-negative integers")
        return self

    def seed_list(self) -> List[int]:
        return list(self.seeds) if self.seeds is not None else list(range(self.n_seeds))

    def resolved(self) -> "ExperimentConfig":
        return self.model_copy(update={
            "hyperparameters": {**ALGORITHMS[self.algorithm].defaults, **self.hyperparameters},
            "problem_options": {**PROBLEM_OPTIONS[self.problem], **self.problem_options},
            "seeds": self.seed_list(),
        })

    def with_seeds(self, seeds: List[int]) -> "ExperimentConfig":
        return ExperimentConfig.model_validate({**self.model_dump(), "seeds": list(seeds), "n_seeds": len(seeds)})


class GridConfig(_Strict):
    lo: float = -6.0
    hi: float = 6.0
    n: int = Field(121, ge=1)


class ProbeConfig(_Strict):
    """Landscape probe of an analytic function (defaults: the double well)."""

    function: str = "double_well_1d"
    dim: int = Field(1, ge=1)
    grid: GridConfig = Field(default_factory=GridConfig)
    mu: float = Field(1.0, gt=0)
    lam: float = Field(1.0, gt=0)
    n_mc: int = Field(100_000, ge=1)
    seed: int = Field(0, ge=0)
    output: str = "probe"

    @field_validator("function")
    @classmethod
    def _known_function(cls, v):
        if v not in FUNCTIONS:
            raise ValueError(f"unknown function {v!r}; valid: {sorted(FUNCTIONS)}")
        return v


def load_json(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("configuration must be a JSON object")
    return data
