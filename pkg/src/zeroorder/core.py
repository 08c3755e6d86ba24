"""Shared numeric plumbing: random streams, covariance structures, objectives
and run bookkeeping.

Every optimizer in the package works on dense ``float64`` vectors and draws
randomness exclusively through :class:`RngStream`, so that a run is fully
determined by ``(seed, stream_id)`` no matter how many worker threads are used
to evaluate the objective.
"""

from __future__ import annotations

import csv
import io
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpotrf

__all__ = [
    "NumericalError",
    "NonFiniteValueError",
    "NotPositiveDefiniteError",
    "DivergenceError",
    "RngStream",
    "CovarianceModel",
    "ScaledIdentity",
    "Diagonal",
    "BlockDiagonal",
    "Full",
    "cholesky",
    "gaussian_sample",
    "sphere_sample",
    "Objective",
    "evaluate",
    "evaluate_batch",
    "set_workers",
    "get_workers",
    "parallel",
    "parallel_map",
    "SearchBudget",
    "as_budget",
    "TraceRecord",
    "RunTrace",
    "as_vector",
]


# --------------------------------------------------------------------------
# Errors
# --------------------------------------------------------------------------


class NumericalError(ArithmeticError):
    """Base class for numeric failures raised by the optimizers."""


class NonFiniteValueError(NumericalError):
    def __init__(self, point, value):
        self.point = np.array(point, dtype=float, copy=True)
        self.value = value
        super().__init__(f"objective returned {value!r} at {self.point.tolist()}")


class NotPositiveDefiniteError(NumericalError):
    """Raised when a covariance matrix fails Cholesky factorization.

    ``minor`` is the (1-based) order of the leading minor that is not positive
    definite. ``weights`` is filled in by the distribution updates so callers
    can decide whether to shrink the covariance step size.
    """

    def __init__(self, minor: int, message: str = "", weights=None):
        self.minor = int(minor)
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        super().__init__(message or f"leading minor of order {minor} is not positive definite")


class DivergenceError(NumericalError):
    def __init__(self, step, norm, iteration):
        self.step = step
        self.norm = norm
        self.iteration = iteration
        super().__init__(
            f"iterate norm {norm:.3e} exceeded 1e8 at iteration {iteration}; "
            f"step size {step!r} is too large"
        )


def as_vector(x, name: str = "x") -> np.ndarray:
    v = np.array(x, dtype=float, copy=True).reshape(-1)
    if v.size == 0:
        raise ValueError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite, got {v.tolist()}")
    return v


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------


class RngStream:
    """A reproducible stream of random draws.

    The draws of a stream depend only on ``(seed, stream_id, path)`` and on how
    many values have already been taken from it. :meth:`substream` derives a
    child stream keyed by an integer; children are independent of each other
    and of the parent, and deriving one never advances the parent. Streams are
    backed by numpy's counter-based Philox generator.
    """

    __slots__ = ("seed", "stream_id", "path", "_gen")

    def __init__(self, seed: int, stream_id: int = 0, path: tuple = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(p) for p in path)
        self._gen: Optional[np.random.Generator] = None

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def substream(self, i: int) -> "RngStream":
        if i < 0:
            raise ValueError("substream index must be non-negative")
        return RngStream(self.seed, self.stream_id, self.path + (i,))

    def fresh(self) -> "RngStream":
        """Same key, rewound to the first draw."""
        return RngStream(self.seed, self.stream_id, self.path)

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def signs(self, size) -> np.ndarray:
        """Independent fair +-1 entries."""
        return np.where(self.generator.random(size) < 0.5, -1.0, 1.0)


# --------------------------------------------------------------------------
# Covariance structures
# --------------------------------------------------------------------------

# Pivots smaller than this (relative to the largest diagonal entry) are treated
# as a failed factorization: the matrix is numerically singular.
_PIVOT_RTOL = 1e-13


def cholesky(matrix) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises:
        NotPositiveDefiniteError: naming the first leading minor that is not
            (numerically) positive definite.
    """
    a = np.array(matrix, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefiniteError(1, "matrix has non-finite entries")
    c, info = dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info)
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise ValueError(f"dpotrf argument {-info} invalid")
    scale = float(np.max(np.abs(np.diag(a))))
    pivots = np.diag(c) ** 2
    bad = np.nonzero(pivots <= _PIVOT_RTOL * scale)[0]
    if bad.size:
        raise NotPositiveDefiniteError(
            int(bad[0]) + 1, f"leading minor of order {int(bad[0]) + 1} is numerically singular"
        )
    return c


class CovarianceModel:
    """Structured symmetric positive definite matrix.

    Subclasses provide sampling from ``N(0, Sigma)``, products with ``Sigma``
    and with its inverse, and a dense view. Instances are immutable.
    """

    dim: int

    def sample(self, rng: RngStream, size: Optional[int] = None) -> np.ndarray:
        """Draw ``size`` vectors (rows) from ``N(0, Sigma)``, or one if size is None."""
        n = 1 if size is None else int(size)
        z = rng.normal((n, self.dim))
        out = self._transform(z)
        return out[0] if size is None else out

    def _transform(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, v) -> np.ndarray:
        raise NotImplementedError

    def inverse_apply(self, v) -> np.ndarray:
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        raise NotImplementedError

    def trace(self) -> float:
        return float(np.trace(self.dense()))


class ScaledIdentity(CovarianceModel):
    def __init__(self, sigma2: float, dim: int, *, allow_zero: bool = False):
        sigma2 = float(sigma2)
        if dim < 1:
            raise ValueError("dim must be positive")
        if not math.isfinite(sigma2) or sigma2 < 0 or (sigma2 == 0 and not allow_zero):
            raise ValueError(f"sigma2 must be > 0, got {sigma2}")
        self.sigma2 = sigma2
        self.dim = int(dim)
        self._std = math.sqrt(sigma2)

    def __repr__(self):
        return f"ScaledIdentity(sigma2={self.sigma2}, dim={self.dim})"

    def _transform(self, z):
        return self._std * z

    def apply(self, v):
        return self.sigma2 * np.asarray(v, dtype=float)

    def inverse_apply(self, v):
        return np.asarray(v, dtype=float) / self.sigma2

    def dense(self):
        return self.sigma2 * np.eye(self.dim)


class Diagonal(CovarianceModel):
    def __init__(self, d):
        d = np.array(d, dtype=float, copy=True).reshape(-1)
        if d.size == 0 or not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValueError(f"diagonal entries must be finite and > 0, got {d.tolist()}")
        self.d = d
        self.d.setflags(write=False)
        self.dim = d.size
        self._std = np.sqrt(d)

    def __repr__(self):
        return f"Diagonal(d={self.d.tolist()})"

    def _transform(self, z):
        return z * self._std

    def apply(self, v):
        return np.asarray(v, dtype=float) * self.d

    def inverse_apply(self, v):
        return np.asarray(v, dtype=float) / self.d

    def dense(self):
        return np.diag(self.d)


def _check_symmetric(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=1e-12, atol=1e-14 * max(1.0, float(np.max(np.abs(m))))):
        raise ValueError("covariance matrix must be symmetric")


class Full(CovarianceModel):
    """Dense covariance; the Cholesky factor is computed once at construction."""

    def __init__(self, matrix, *, factor: Optional[np.ndarray] = None):
        m = np.array(matrix, dtype=float, copy=True)
        _check_symmetric(m)
        self.matrix = m
        self.matrix.setflags(write=False)
        self.dim = m.shape[0]
        self.L = cholesky(m) if factor is None else factor
        self.L.setflags(write=False)

    def __repr__(self):
        return f"Full(dim={self.dim})"

    def _transform(self, z):
        return z @ self.L.T

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        return v @ self.matrix.T if v.ndim > 1 else self.matrix @ v

    def inverse_apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.ndim > 1:
            return cho_solve((self.L, True), v.T).T
        return cho_solve((self.L, True), v)

    def dense(self):
        return self.matrix.copy()


class BlockDiagonal(CovarianceModel):
    """``blockdiag(S_1, ..., S_B)``; each block is stored as a :class:`Full`."""

    def __init__(self, blocks: Sequence):
        if len(blocks) == 0:
            raise ValueError("need at least one block")
        self.blocks = tuple(b if isinstance(b, Full) else Full(b) for b in blocks)
        sizes = [b.dim for b in self.blocks]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.slices = tuple(slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:]))
        self.dim = int(offsets[-1])

    def __repr__(self):
        return f"BlockDiagonal(block_sizes={[b.dim for b in self.blocks]})"

    @classmethod
    def uniform(cls, n_blocks: int, block: Any) -> "BlockDiagonal":
        """``n_blocks`` copies of the same block matrix."""
        blk = Full(block)
        return cls([blk] * n_blocks)

    def _transform(self, z):
        out = np.empty_like(z)
        for sl, b in zip(self.slices, self.blocks):
            out[:, sl] = b._transform(z[:, sl])
        return out

    def _blockwise(self, v, method):
        v = np.asarray(v, dtype=float)
        out = np.empty_like(v)
        for sl, b in zip(self.slices, self.blocks):
            out[..., sl] = getattr(b, method)(v[..., sl])
        return out

    def apply(self, v):
        return self._blockwise(v, "apply")

    def inverse_apply(self, v):
        return self._blockwise(v, "inverse_apply")

    def dense(self):
        out = np.zeros((self.dim, self.dim))
        for sl, b in zip(self.slices, self.blocks):
            out[sl, sl] = b.matrix
        return out


def gaussian_sample(cov: CovarianceModel, rng: RngStream) -> np.ndarray:
    """One draw from ``N(0, cov)``."""
    return cov.sample(rng)


def sphere_sample(dim: int, rng: RngStream) -> np.ndarray:
    """A point drawn uniformly from the unit sphere in ``R^dim``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    while True:
        z = rng.normal(dim)
        norm = float(np.linalg.norm(z))
        if norm > 0.0:
            return z / norm


# --------------------------------------------------------------------------
# Objectives and (thread-parallel) evaluation
# --------------------------------------------------------------------------


class Objective:
    """A deterministic map from ``R^dim`` to the reals.

    ``batch`` (optional) evaluates a 2-D array of points row-wise in one call;
    when given, single-point calls are routed through it so both paths return
    identical bits.
    """

    def __init__(self, fn: Optional[Callable] = None, dim: int = 1, *, batch: Optional[Callable] = None,
                 name: str = ""):
        if fn is None and batch is None:
            raise ValueError("need fn or batch")
        self._fn = fn
        self.dim = int(dim)
        self.name = name
        if batch is not None:
            self.batch = batch

    def __call__(self, x) -> float:
        if self._fn is None:
            return float(self.batch(np.asarray(x, dtype=float)[None, :])[0])
        return float(self._fn(np.asarray(x, dtype=float)))

    def __repr__(self):
        return f"Objective(name={self.name!r}, dim={self.dim})"


_CHUNK = 256
_workers = 1
_pool: Optional[ThreadPoolExecutor] = None
_pool_lock = threading.Lock()


def set_workers(n: int) -> None:
    """Number of threads used for objective evaluation (results never depend on it)."""
    global _workers, _pool
    n = int(n)
    if n < 1:
        raise ValueError("workers must be >= 1")
    with _pool_lock:
        if n != _workers and _pool is not None:
            _pool.shutdown(wait=True)
            _pool = None
        _workers = n


def get_workers() -> int:
    return _workers


@contextmanager
def parallel(n: int) -> Iterator[None]:
    previous = _workers
    set_workers(n)
    try:
        yield
    finally:
        set_workers(previous)


def _get_pool() -> ThreadPoolExecutor:
    global _pool
    with _pool_lock:
        if _pool is None:
            _pool = ThreadPoolExecutor(max_workers=_workers, thread_name_prefix="zeroorder")
        return _pool


def parallel_map(fn, items) -> list:
    """``[fn(it) for it in items]`` on the worker pool, order preserved.

    Calls made from inside a pool thread run serially, so nested parallel
    sections cannot deadlock.
    """
    items = list(items)
    if _workers > 1 and len(items) > 1 and threading.current_thread().name[:9] != "zeroorder":
        return list(_get_pool().map(fn, items))
    return [fn(it) for it in items]


def evaluate_batch(f, points) -> np.ndarray:
    """Evaluate ``f`` on every row of ``points``.

    Vectorized objectives are called on fixed-size chunks so that the bits of
    every value are independent of the worker count.

    Raises:
        NonFiniteValueError: carrying the first offending point.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    batch = getattr(f, "batch", None)
    if batch is not None:
        if X.shape[0] <= _CHUNK:
            values = np.asarray(batch(X), dtype=float).reshape(-1)
        else:
            chunks = [X[i:i + _CHUNK] for i in range(0, X.shape[0], _CHUNK)]
            parts = parallel_map(lambda c: np.asarray(batch(c), dtype=float).reshape(-1), chunks)
            values = np.concatenate(parts)
    else:
        values = np.array(parallel_map(lambda row: float(f(row)), list(X)), dtype=float)
    if not np.isfinite(values).all():
        bad = np.nonzero(~np.isfinite(values))[0]
        raise NonFiniteValueError(X[bad[0]], float(values[bad[0]]))
    return values


def evaluate(f, x) -> float:
    """Single evaluation through the same path as :func:`evaluate_batch`."""
    return float(evaluate_batch(f, np.asarray(x, dtype=float)[None, :])[0])


# --------------------------------------------------------------------------
# Budgets and traces
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchBudget:
    """Stopping rule: stop once any bound is reached."""

    max_iters: Optional[int] = None
    max_evals: Optional[int] = None
    target_value: Optional[float] = None

    def __post_init__(self):
        if self.max_iters is None and self.max_evals is None and self.target_value is None:
            raise ValueError("SearchBudget needs at least one finite bound")
        for name in ("max_iters", "max_evals"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")

    def exhausted(self, iteration: int, n_evals: int, best: float) -> bool:
        if self.max_iters is not None and iteration >= self.max_iters:
            return True
        if self.max_evals is not None and n_evals >= self.max_evals:
            return True
        return self.target_value is not None and best <= self.target_value

    def split(self, parts: int) -> "SearchBudget":
        return SearchBudget(
            None if self.max_iters is None else self.max_iters // parts,
            None if self.max_evals is None else self.max_evals // parts,
            self.target_value,
        )


def as_budget(budget) -> SearchBudget:
    if isinstance(budget, SearchBudget):
        return budget
    return SearchBudget(max_iters=int(budget))


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    n_evals: int
    current: float
    best: float


@dataclass
class RunTrace:
    """Per-iteration record of a run.

    ``best`` is maintained by :meth:`record` and can never increase;
    ``n_evals`` must strictly increase. Additional per-record diagnostics
    (temperatures, jitter...) go to ``extras`` and are kept in the JSON form
    only.
    """

    algorithm_id: str
    seed: int = 0
    records: list = field(default_factory=list)
    extras: list = field(default_factory=list)

    CSV_HEADER = ("iteration", "n_evals", "current", "best")

    def record(self, iteration: int, n_evals: int, current: float, **extra) -> TraceRecord:
        current = float(current)
        if self.records:
            last = self.records[-1]
            if n_evals <= last.n_evals:
                raise ValueError(f"n_evals must increase ({last.n_evals} -> {n_evals})")
            best = min(last.best, current)
        else:
            best = current
        rec = TraceRecord(int(iteration), int(n_evals), current, best)
        self.records.append(rec)
        self.extras.append(dict(extra))
        return rec

    def __len__(self):
        return len(self.records)

    @property
    def best_value(self) -> float:
        return self.records[-1].best if self.records else math.inf

    @property
    def n_evals(self) -> int:
        return self.records[-1].n_evals if self.records else 0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def extra_column(self, key: str) -> list:
        return [e.get(key) for e in self.extras]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for r in self.records:
            w.writerow([r.iteration, r.n_evals, repr(r.current), repr(r.best)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path, algorithm_id: str = "", seed: int = 0) -> "RunTrace":
        text = text_or_path
        if "\n" not in str(text_or_path):
            with open(text_or_path) as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != cls.CSV_HEADER:
            raise ValueError(f"unexpected trace header {rows[0]}")
        trace = cls(algorithm_id, seed)
        for it, ne, cur, best in rows[1:]:
            trace.records.append(TraceRecord(int(it), int(ne), float(cur), float(best)))
            trace.extras.append({})
        return trace

    def to_dict(self) -> dict:
        return {
            "algorithm_id": self.algorithm_id,
            "seed": self.seed,
            "records": [[r.iteration, r.n_evals, r.current, r.best] for r in self.records],
            "extras": self.extras,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text: str) -> "RunTrace":
        d = json.loads(text)
        trace = cls(d["algorithm_id"], d["seed"])
        trace.records = [TraceRecord(int(a), int(b), float(c), float(e)) for a, b, c, e in d["records"]]
        trace.extras = list(d.get("extras", [{}] * len(trace.records)))
        return trace
