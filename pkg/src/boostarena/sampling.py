"""Seed splitting, play sampling and replication fan-out."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def sub_seed(seed: int, index: int) -> int:
    """Seed of replication ``index``: splitmix64(seed xor index)."""
    return splitmix64((int(seed) ^ int(index)) & MASK64)


def replication_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(sub_seed(seed, index))


def worker_count() -> int:
    cap = os.environ.get("BOOSTARENA_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError("BOOSTARENA_THREADS must be an integer") from None
    return n


def map_replications(fn: Callable[[int], object], n: int) -> list:
    """``[fn(0), ..., fn(n-1)]`` in index order, possibly computed in parallel."""
    workers = min(worker_count(), n)
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def _cdf(probs: np.ndarray) -> np.ndarray:
    # dividing by the row total makes the last entry exactly 1, so trailing
    # zero-probability columns can never be drawn
    c = np.cumsum(probs, axis=1)
    return c / c[:, -1:]


def inverse_cdf(cdf_rows: np.ndarray, row: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sample column indices: for each i, the first j with cdf_rows[row[i], j] > u[i]."""
    cdf = cdf_rows[row]
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def draw_plays(game, sigma, rng: np.random.Generator, rounds: int):
    """Draw (state index, sender action index, receiver type index) per round.

    Three uniforms per round are consumed in a fixed order, so two strategies
    on the same game sampled from equal seeds share their random numbers.
    """
    u = rng.random((3, rounds))
    prior_cdf = _cdf(game.prior[None, :])
    theta = inverse_cdf(prior_cdf, np.zeros(rounds, dtype=int), u[0])
    p_idx = inverse_cdf(_cdf(sigma.probs), theta, u[1])
    types = inverse_cdf(_cdf(game.type_weights[None, :]), np.zeros(rounds, dtype=int), u[2])
    return theta, p_idx, types


def geometric_grid(first: int, last: int) -> list:
    """{first, 2 first, 4 first, ...} up to ``last``, with ``last`` appended."""
    if first < 1:
        raise ValueError("grid start must be >= 1")
    out, t = [], first
    while t < last:
        out.append(t)
        t *= 2
    out.append(last)
    return sorted(set(out))


def mean_and_se(values: Sequence[float]):
    x = np.asarray(values, dtype=float)
    if len(x) < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))
