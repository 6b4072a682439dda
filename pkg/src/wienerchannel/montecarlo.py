"""Deterministic batch-means Monte Carlo.

Samples are split into ``batches`` equal batches. Batch ``b`` draws from
its own generator, spawned from ``SeedSequence(seed)``, so the result of a
run does not depend on how many threads executed it: batch statistics are
reduced in batch order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np


@dataclass(frozen=True)
class McConfig:
    """Sample budget and seeding of a Monte-Carlo run.

    Parameters
    ----------
    samples : int
        Total number of joint draws N (rounded down to a multiple of ``batches``).
    batches : int
        Number of batches B used for the batch-means standard error.
    seed : int
        Base seed; batch ``b`` uses the ``b``-th spawned child sequence.
    threads : int
        Worker threads. Performance only, never changes results.
    """

    samples: int = 100_000
    batches: int = 50
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.batches < 2:
            raise ValueError("at least 2 batches are needed for a standard error")
        if self.samples < 2 * self.batches:
            raise ValueError(
                f"samples={self.samples} too small for {self.batches} batches "
                "(need at least 2 per batch)"
            )
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def batch_size(self) -> int:
        return self.samples // self.batches

    @property
    def effective_samples(self) -> int:
        return self.batch_size * self.batches

    def with_seed(self, seed: int) -> "McConfig":
        return McConfig(self.samples, self.batches, seed, self.threads)

    def with_threads(self, threads: int) -> "McConfig":
        return McConfig(self.samples, self.batches, self.seed, threads)


def batch_generators(mc: McConfig) -> list[np.random.Generator]:
    children = np.random.SeedSequence(mc.seed).spawn(mc.batches)
    return [np.random.default_rng(c) for c in children]


def map_batches(mc: McConfig, fn: Callable[[np.random.Generator], object]) -> list:
    """Apply ``fn`` to every batch generator; results come back in batch order."""
    gens = batch_generators(mc)
    if mc.threads > 1:
        with ThreadPoolExecutor(max_workers=mc.threads) as pool:
            return list(pool.map(fn, gens))
    return [fn(g) for g in gens]


@dataclass
class McResult:
    """Per-batch means of named statistics.

    ``batch[name]`` has shape ``(B,)`` or ``(B, k)``.
    """

    batch: dict[str, np.ndarray]
    samples: int
    extra: dict = field(default_factory=dict)

    @property
    def batches(self) -> int:
        return next(iter(self.batch.values())).shape[0]

    def mean(self, name: str):
        return self.batch[name].mean(axis=0)

    def maximum(self, name: str):
        return self.batch[name].max(axis=0)

    def stderr(self, name: str):
        return batch_stderr(self.batch[name])

    def derived(self, fn: Callable[[Mapping[str, np.ndarray]], np.ndarray]):
        """Mean and batch-means stderr of ``fn`` applied batch by batch.

        ``fn`` receives the dict of per-batch means (each leading axis B) and
        must return an array with leading axis B. Use it for differences
        and ratios so correlations between statistics are accounted for.
        """
        vals = np.asarray(fn(self.batch), dtype=float)
        return vals.mean(axis=0), batch_stderr(vals)


def batch_stderr(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])


def run_batches(
    mc: McConfig,
    draw: Callable[[np.random.Generator, int], object],
    stats: Callable[[object], Mapping[str, np.ndarray]],
) -> McResult:
    """Run ``stats(draw(rng_b, batch_size))`` for every batch and collect batch means.

    ``stats`` returns per-sample arrays (leading axis = batch size), whose
    batch means are stored. Keys starting with ``max_`` are reduced with
    ``max`` instead (use :meth:`McResult.maximum` to read them).
    """
    size = mc.batch_size

    def one(rng):
        out = stats(draw(rng, size))
        return {
            k: (np.max if k.startswith("max_") else np.mean)(
                np.asarray(v, dtype=float), axis=0
            )
            for k, v in out.items()
        }

    per_batch = map_batches(mc, one)
    keys = per_batch[0].keys()
    batch = {k: np.stack([pb[k] for pb in per_batch]) for k in keys}
    return McResult(batch, mc.effective_samples)
