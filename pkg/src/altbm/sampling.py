"""Reproducible random streams and nested Poisson families.

A :class:`RandomStream` is identified by ``(seed, stream_id)``.  Named
substreams are derived by hashing the parent id with a label, so the draws
a construction sees do not depend on the order in which other
constructions consumed theirs.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInput

_TWO53 = float(2**53)


def _label_id(parent: int, label: str) -> int:
    digest = hashlib.blake2b(f"{parent}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RandomStream:
    """Single-owner uniform source on (0, 1) with a draw counter.

    Uniforms are 53-bit midpoints ``(k + 1/2) / 2**53`` so neither 0 nor 1
    can occur.  Every exponential costs one uniform and every Gaussian two
    (Box-Muller, cosine branch only), so stream positions are predictable.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & (2**64 - 1)
        self.stream_id = int(stream_id) & (2**64 - 1)
        self.position = 0
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}, position={self.position})"

    def substream(self, label: str) -> "RandomStream":
        return RandomStream(self.seed, _label_id(self.stream_id, label))

    def uniform(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        self.position += n
        k = self._gen.integers(0, 2**53, size=size, dtype=np.int64)
        return (k + 0.5) / _TWO53

    def exponential(self, rate: float, size=None):
        if not rate > 0:
            raise InvalidInput(f"exponential rate must be positive, got {rate}")
        return -np.log(self.uniform(size)) / rate

    def normal(self, mean=0.0, variance=1.0, size=None):
        variance = np.asarray(variance, dtype=float)
        if np.any(variance < 0):
            raise InvalidInput("variance must be nonnegative")
        u1 = self.uniform(size)
        u2 = self.uniform(size)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return mean + np.sqrt(variance) * z


def exp_from_uniform(u: float, rate: float) -> float:
    return -math.log(u) / rate


def exp_draw(rate: float, s: RandomStream) -> float:
    return float(s.exponential(rate))


def gauss_draw(mean: float, variance: float, s: RandomStream) -> float:
    if variance == 0:
        # still consume the pair so stream layout does not depend on parameters
        s.uniform(2)
        return float(mean)
    return float(s.normal(mean, variance))


def poisson_epochs(rate: float, s: RandomStream, horizon: float | None = None,
                   count: int | None = None) -> np.ndarray:
    """Arrival epochs of a Poisson process, with a leading 0.

    Exactly one of ``horizon`` (arrivals in (0, horizon]) or ``count``
    (the first ``count`` arrivals) must be given.
    """
    if (horizon is None) == (count is None):
        raise InvalidInput("give exactly one of horizon or count")
    if count is not None:
        if count < 0:
            raise InvalidInput("count must be nonnegative")
        return np.concatenate(([0.0], np.cumsum(s.exponential(rate, count))))
    if not horizon > 0:
        raise InvalidInput(f"horizon must be positive, got {horizon}")
    mean = rate * horizon
    chunk = int(mean + 6.0 * math.sqrt(mean) + 16)
    times = np.cumsum(s.exponential(rate, chunk))
    while times[-1] <= horizon:
        more = times[-1] + np.cumsum(s.exponential(rate, chunk))
        times = np.concatenate((times, more))
    return np.concatenate(([0.0], times[times <= horizon]))


@dataclass(frozen=True)
class NestedPoissonFamily:
    """Poisson processes of intensities ``rates[n]/2`` where each level
    contains every arrival of the level below.

    ``epochs[n][k]`` is the k-th arrival of level n (``epochs[n][0] == 0``)
    and ``embeddings[n][k]`` is the index of that same epoch at level n+1.
    """
    rates: tuple
    horizon: float
    epochs: tuple = field(repr=False)
    embeddings: tuple = field(repr=False)

    @property
    def levels(self) -> int:
        return len(self.rates)

    def embed(self, indices, n: int) -> np.ndarray:
        """Map level-0 indices to level-n indices through the stored embeddings."""
        idx = np.asarray(indices, dtype=np.int64)
        for level in range(n):
            idx = self.embeddings[level][idx]
        return idx

    def counting(self, n: int, times) -> np.ndarray:
        """N_n(t): number of level-n arrivals in (0, t]."""
        return np.searchsorted(self.epochs[n], times, side="right") - 1

    def to_rows(self):
        for n, ep in enumerate(self.epochs):
            nxt = self.embeddings[n] if n < len(self.embeddings) else None
            for k, t in enumerate(ep):
                yield (n, k, float(t), int(nxt[k]) if nxt is not None else -1)


def superpose(coarse: np.ndarray, extra: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge two epoch arrays (both with leading 0); return merged epochs and
    the index of every coarse epoch inside the merged array."""
    merged = np.concatenate((coarse, extra[1:]))
    merged.sort(kind="stable")
    embedding = np.searchsorted(merged, coarse)
    return merged, embedding


def build_nested_family(rates: Sequence[float], s: RandomStream, horizon: float | None = None,
                        count: int | None = None) -> NestedPoissonFamily:
    """Level 0 is Poisson(rates[0]/2); level n+1 superposes level n with an
    independent Poisson((rates[n+1]-rates[n])/2)."""
    rates = tuple(float(r) for r in rates)
    if not rates or rates[0] <= 0 or any(b <= a for a, b in zip(rates, rates[1:])):
        raise InvalidInput(f"rates must be positive and strictly increasing, got {rates}")
    base = poisson_epochs(rates[0] / 2, s.substream("poisson-level-0"), horizon=horizon, count=count)
    if count is not None:
        horizon = float(base[-1]) if count > 0 else 0.0
    epochs = [base]
    embeddings = []
    for n in range(1, len(rates)):
        sub = s.substream(f"poisson-level-{n}")
        if horizon > 0:
            extra = poisson_epochs((rates[n] - rates[n - 1]) / 2, sub, horizon=horizon)
        else:
            extra = np.zeros(1)
        merged, emb = superpose(epochs[-1], extra)
        epochs.append(merged)
        embeddings.append(emb)
    return NestedPoissonFamily(rates, float(horizon), tuple(epochs), tuple(embeddings))
