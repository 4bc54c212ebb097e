"""Shared helpers: worker pool sizing and deterministic chunked sampling.

Every stochastic routine in the package draws from numpy substreams spawned
off a single SeedSequence, with the chunk layout fixed by the input sizes
alone.  Results are reduced in chunk order, so the number of worker threads
(OPPLAB_THREADS) changes wall time but never changes a single output byte.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
U = TypeVar("U")


def worker_count() -> int:
    """Number of worker threads, from OPPLAB_THREADS or the CPU count."""
    raw = os.environ.get("OPPLAB_THREADS")
    if raw is not None:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ValueError(f"OPPLAB_THREADS must be an integer, got {raw!r}") from exc
        if n < 1:
            raise ValueError(f"OPPLAB_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[T], U], items: Iterable[T]) -> list[U]:
    """Map ``fn`` over ``items``, preserving order.

    Work is farmed out to ``worker_count()`` threads; the returned list is
    always in input order, so reductions over it are thread-count-independent.
    """
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as ex:
        return list(ex.map(fn, items))


def spawn_rngs(seed: int, k: int) -> list[np.random.Generator]:
    """k reproducible, statistically independent generators for one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def chunk_sizes(total: int, target: int) -> list[int]:
    """Split ``total`` into nearly equal chunks of size about ``target``.

    The layout depends only on (total, target), never on the worker count.
    """
    if total <= 0:
        return []
    k = max(1, -(-total // target))
    base, extra = divmod(total, k)
    return [base + (1 if i < extra else 0) for i in range(k)]


def uniform_ball(rng: np.random.Generator, n: int, dim: int = 3) -> np.ndarray:
    """n points uniform in the unit ball of R^dim (direction times radius^(1/dim))."""
    x = rng.normal(size=(n, dim))
    x /= np.linalg.norm(x, axis=1)[:, None]
    x *= rng.random(n)[:, None] ** (1.0 / dim)
    return x


def weighted_mean_stderr(values: Sequence[float], weights: Sequence[float]) -> tuple[float, float]:
    """Weighted mean of independent chunk estimates and its standard error.

    The spread between chunks estimates the sampling variance, so no analytic
    variance formula for the underlying estimator is needed.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    mean = float(np.sum(w * v))
    if len(v) < 2:
        return mean, float("nan")
    # unbiased-ish spread of the weighted mean; exact for equal weights
    var = float(np.sum(w**2 * (v - mean) ** 2) * len(v) / (len(v) - 1))
    return mean, var**0.5
