"""Run a configured experiment over several seeds and write its outputs."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..core import RngStream, RunTrace, SearchBudget, parallel, parallel_map
from .config import ExperimentConfig
from .registry import build_problem, run_algorithm

__all__ = ["SUMMARY_HEADER", "ExperimentResult", "run_seed", "run_experiment", "summarize", "summary_csv",
           "library_version"]

SUMMARY_HEADER = ("iteration", "median", "q25", "q75", "n_seeds")


def library_version() -> str:
    from .. import __version__

    return __version__


def run_seed(config: ExperimentConfig, seed: int) -> RunTrace:
    """One seed of ``config``; the seed owns the stream ``(seed, stream_id=seed)``."""
    cfg = config.resolved()
    problem = build_problem(cfg.problem, cfg.problem_options)
    budget = SearchBudget(max_iters=cfg.budget.max_iters, max_evals=cfg.budget.max_evals)
    trace = run_algorithm(cfg.algorithm, problem, cfg.hyperparameters, budget, RngStream(seed, stream_id=seed))
    trace.seed = seed
    return trace


def summarize(traces: List[RunTrace]) -> np.ndarray:
    """Per-record median and quartiles of ``current`` across seeds.

    Rows are aligned by record index and truncated to the shortest trace.
    Columns follow :data:`SUMMARY_HEADER`.
    """
    n = min(len(t) for t in traces)
    V = np.array([t.column("current")[:n] for t in traces])
    its = traces[0].column("iteration")[:n]
    med = np.median(V, axis=0)
    q25, q75 = np.percentile(V, [25.0, 75.0], axis=0)
    return np.column_stack([its, med, q25, q75, np.full(n, len(traces))])


def summary_csv(table: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for it, med, lo, hi, k in table:
        w.writerow([int(it), repr(float(med)), repr(float(lo)), repr(float(hi)), int(k)])
    return buf.getvalue()


@dataclass(frozen=True)
class ExperimentResult:
    traces: Dict[int, RunTrace]
    summary: np.ndarray
    files: Dict[str, str]


def _trace_name(cfg: ExperimentConfig, seed: int) -> str:
    return f"trace_{cfg.algorithm}_{cfg.problem}_seed{seed}.csv"


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None,
                   threads: Optional[int] = None) -> ExperimentResult:
    """Run every seed, then write traces, ``summary.csv`` and ``metadata.json``.

    Seeds run concurrently on the worker pool (``threads`` workers; the
    outputs do not depend on it). Files are written afterwards by the calling
    thread only. ``metadata.json`` is byte-stable across re-runs except for
    its ``timestamp`` field.
    """
    cfg = config.resolved()
    seeds = cfg.seed_list()
    out = out_dir or cfg.output
    build_problem(cfg.problem, cfg.problem_options)  # fail early on bad options

    def run(seed):
        return run_seed(cfg, seed)

    if threads is None:
        traces = parallel_map(run, seeds)
    else:
        with parallel(threads):
            traces = parallel_map(run, seeds)

    os.makedirs(out, exist_ok=True)
    files = {}
    for seed, trace in zip(seeds, traces):
        path = os.path.join(out, _trace_name(cfg, seed))
        trace.to_csv(path)
        files[f"trace_seed{seed}"] = path
    table = summarize(traces)
    path = os.path.join(out, "summary.csv")
    with open(path, "w", newline="") as fh:
        fh.write(summary_csv(table))
    files["summary"] = path
    problem = build_problem(cfg.problem, cfg.problem_options)
    meta = {
        "config": cfg.model_dump(mode="json"),
        "library_version": library_version(),
        "seeds": seeds,
        "problem": problem.info,
        "final_current": {str(s): t.records[-1].current for s, t in zip(seeds, traces)},
        "best": {str(s): t.best_value for s, t in zip(seeds, traces)},
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    path = os.path.join(out, "metadata.json")
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files["metadata"] = path
    return ExperimentResult(dict(zip(seeds, traces)), table, files)
