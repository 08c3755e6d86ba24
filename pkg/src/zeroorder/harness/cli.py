"""Command-line interface.

Exit codes: 0 on success, 2 for configuration and usage errors, 3 when a
run fails numerically.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from ..core import NumericalError, RngStream, parallel, parallel_map
from ..estimators import SmoothingConfig
from ..policyopt import TrainConfig, train
from .config import ExperimentConfig, ProbeConfig, load_json
from .functions import make_function
from .probes import linear_grid, risk_probe, surrogate_probe
from .registry import ALGORITHMS, PROBLEM_IDS
from .runner import run_experiment
from .svg import line_plot_svg

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _seeds(text: str) -> List[int]:
    try:
        seeds = [int(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers, got {text!r}") from None
    if not seeds or min(seeds) < 0:
        raise argparse.ArgumentTypeError("need at least one non-negative seed")
    return seeds


def _threads(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zeroorder", description="Zero-order optimization experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=True):
        if seeds:
            sp.add_argument("--seeds", type=_seeds, help="comma-separated seed list (overrides the config)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--threads", type=_threads, default=1, help="worker threads; never changes results")

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    common(run)

    probe = sub.add_parser("probe", help="evaluate smoothing surrogates on a grid")
    probe.add_argument("kind", choices=["surrogates", "risk"])
    probe.add_argument("config")
    probe.add_argument("--svg", action="store_true", help="also write an SVG plot")
    common(probe, seeds=False)

    tr = sub.add_parser("train", help="train a linear policy")
    tr.add_argument("config")
    common(tr)

    ls = sub.add_parser("list", help="list algorithm or problem ids")
    ls.add_argument("what", choices=["algorithms", "problems"])
    return p


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.model_validate(load_json(args.config))
    if args.seeds:
        cfg = cfg.with_seeds(args.seeds)
    result = run_experiment(cfg, out_dir=args.out, threads=args.threads)
    for name in sorted(result.files):
        print(result.files[name])
    return EXIT_OK


def _cmd_probe(args) -> int:
    cfg = ProbeConfig.model_validate(load_json(args.config))
    f = make_function(cfg.function, cfg.dim)
    if f.dim != 1:
        grid = [np.full(f.dim, x) for x in np.linspace(cfg.grid.lo, cfg.grid.hi, cfg.grid.n)]
    else:
        grid = linear_grid(cfg.grid.lo, cfg.grid.hi, cfg.grid.n)
    smoothing = SmoothingConfig(mu=cfg.mu, lam=cfg.lam)
    probe = surrogate_probe if args.kind == "surrogates" else risk_probe
    with parallel(args.threads):
        table = probe(f, grid, smoothing, cfg.n_mc, RngStream(cfg.seed, stream_id=cfg.seed))
    out = args.out or cfg.output
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"probe_{args.kind}.csv")
    table.to_csv(path)
    print(path)
    if args.svg:
        xcol = table.columns[0]
        series = {c: table.column(c) for c in table.columns[1:] if not c.startswith("x")}
        svg_path = os.path.join(out, f"probe_{args.kind}.svg")
        line_plot_svg(table.column(xcol), series, title=f"{cfg.function}: {args.kind}", path=svg_path)
        print(svg_path)
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = TrainConfig.from_dict(load_json(args.config))
    seeds = args.seeds or list(cfg.seeds)
    env, policy0, noise = cfg.build()

    def one(seed):
        return train(env, policy0, cfg.method, cfg.alpha, cfg.iters, RngStream(seed, stream_id=seed), noise,
                     n_eval=cfg.n_eval)[1]

    with parallel(args.threads):
        traces = parallel_map(one, seeds)
    out = args.out or "train_results"
    os.makedirs(out, exist_ok=True)
    for seed, t in zip(seeds, traces):
        t.to_csv(os.path.join(out, f"trace_{cfg.method}_seed{seed}.csv"))
    path = os.path.join(out, "values.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration"] + [f"seed{s}" for s in seeds])
        for i in range(len(traces[0])):
            w.writerow([i] + [repr(float(t.extras[i]["value"])) for t in traces])
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump({**cfg.to_dict(), "seeds": seeds}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(path)
    return EXIT_OK


def _cmd_list(args) -> int:
    names = sorted(ALGORITHMS) if args.what == "algorithms" else list(PROBLEM_IDS)
    print("\n".join(names))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "probe": _cmd_probe, "train": _cmd_train, "list": _cmd_list}
    try:
        return handlers[args.command](args)
    except (ValidationError, ValueError, KeyError, TypeError, FileNotFoundError, IsADirectoryError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
