"""Landscape probes: smoothing surrogates evaluated on a grid."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import RngStream, evaluate_batch
from ..estimators import SmoothingConfig, lse_value, risk_averse_value, smoothed_value

__all__ = ["ProbeTable", "surrogate_probe", "risk_probe", "linear_grid"]


@dataclass(frozen=True)
class ProbeTable:
    columns: tuple
    rows: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(float(v)) for v in r])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "ProbeTable":
        rows = list(csv.reader(io.StringIO(text)))
        return cls(tuple(rows[0]), np.array([[float(v) for v in r] for r in rows[1:]]))


def linear_grid(lo: float, hi: float, n: int) -> list:
    return [np.array([x]) for x in np.linspace(lo, hi, n)]


def _grid_matrix(grid: Sequence) -> np.ndarray:
    G = np.array([np.atleast_1d(np.asarray(g, dtype=float)) for g in grid])
    if G.ndim != 2 or G.shape[0] == 0:
        raise ValueError("grid must be a non-empty list of equal-length vectors")
    return G


def _x_columns(dim: int) -> tuple:
    return ("x",) if dim == 1 else tuple(f"x{i}" for i in range(dim))


def _shared_values(f, G, cfg, n_mc, rng):
    # One noise set, reused at every grid point and for every column.
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    eps = cfg.covariance(G.shape[1]).sample(rng, n_mc)
    base = evaluate_batch(f, G)
    samples = [evaluate_batch(f, g + cfg.mu * eps) for g in G]
    return base, samples


def surrogate_probe(f, grid, cfg: SmoothingConfig, n_mc: int, rng: RngStream) -> ProbeTable:
    """Columns ``x, f, f_mu, f_mu_lam`` (Gaussian smoothing and log-sum-exp)."""
    if math.isinf(cfg.lam):
        raise ValueError("surrogate_probe needs a finite temperature")
    G = _grid_matrix(grid)
    base, samples = _shared_values(f, G, cfg, n_mc, rng)
    rows = [
        [*g, b, smoothed_value(v), lse_value(v, cfg.lam)]
        for g, b, v in zip(G, base, samples)
    ]
    return ProbeTable(_x_columns(G.shape[1]) + ("f", "f_mu", "f_mu_lam"), np.array(rows))


def risk_probe(f, grid, cfg: SmoothingConfig, n_mc: int, rng: RngStream) -> ProbeTable:
    """Columns ``x, neutral, risk_seeking, risk_averse`` on shared samples.

    ``risk_seeking`` is ``-lam log E exp(-f/lam)`` and ``risk_averse`` is
    ``+lam log E exp(+f/lam)``; ``neutral`` is the plain smoothed value.
    """
    if math.isinf(cfg.lam):
        raise ValueError("risk_probe needs a finite temperature")
    G = _grid_matrix(grid)
    _, samples = _shared_values(f, G, cfg, n_mc, rng)
    rows = [
        [*g, smoothed_value(v), lse_value(v, cfg.lam), risk_averse_value(v, cfg.lam)]
        for g, v in zip(G, samples)
    ]
    return ProbeTable(_x_columns(G.shape[1]) + ("neutral", "risk_seeking", "risk_averse"), np.array(rows))
