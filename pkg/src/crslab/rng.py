"""Deterministic random streams for experiments.

Every random quantity is drawn from a Philox (counter-based) generator
keyed by (experiment seed, purpose tag, counter tuple).  Distinct purposes
never share bits, so edge states, arrival keys, and scheme coins are
mutually independent; the same key always replays the same stream, and
results do not depend on how trials are partitioned across workers as long
as chunk boundaries are fixed.
"""
from __future__ import annotations

import numpy as np

# Stable purpose registry; append only, never reorder.
_PURPOSES = (
    "states",        # edge activity bits X_e
    "order",         # per-edge arrival times
    "vertex_seeds",  # per-vertex seeds for lexicographic orders
    "accept",        # Tree-OCRS acceptance coins A_e
    "couple_keep",   # two-round coupling: the X' = X*Ber(yz/x) coin
    "couple_split",  # two-round coupling: the (1,0)/(0,1)/(0,0) split coin
    "drop",          # exactly-c normalization drop coins
    "tree",          # Galton-Watson sampling
    "subset",        # random subset search
    "misc",
)
_PURPOSE_CODE = {name: i for i, name in enumerate(_PURPOSES)}

#: Trials per stream chunk in the Monte Carlo drivers.  Fixed so that the
#: trial -> stream mapping is independent of worker count.
CHUNK = 4096


def stream(seed: int, purpose: str, *counters: int) -> np.random.Generator:
    """Return the Generator for (seed, purpose, *counters).

    `counters` is typically (target_edge_or_minus1, chunk_index) in the
    estimation drivers and (trial,) for single-shot draws.
    """
    code = _PURPOSE_CODE[purpose]
    ss = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(code, *(int(c) & 0xFFFFFFFFFFFFFFFF for c in counters)),
    )
    return np.random.Generator(np.random.Philox(ss))


class UniformBuffer:
    """Scalar uniform[0,1) draws served from vectorized blocks.

    np.random scalar calls cost ~1us each; hot per-trial loops instead pull
    from a refilled array, which is an order of magnitude cheaper while
    consuming the identical stream.
    """

    __slots__ = ("_rng", "_block", "_buf", "_pos")

    def __init__(self, rng: np.random.Generator, block: int = 1 << 14):
        self._rng = rng
        self._block = block
        self._buf = rng.random(block)
        self._pos = 0

    def next(self) -> float:
        if self._pos >= self._buf.shape[0]:
            self._buf = self._rng.random(self._block)
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v

    def take(self, k: int) -> np.ndarray:
        if k > self._block:
            return self._rng.random(k)
        if self._pos + k > self._buf.shape[0]:
            self._buf = self._rng.random(self._block)
            self._pos = 0
        out = self._buf[self._pos:self._pos + k]
        self._pos += k
        return out

    def index(self, n: int) -> int:
        """Uniform integer in [0, n) (floor of u*n; bias < n/2^53)."""
        return int(self.next() * n)


class PoissonBuffer:
    """Scalar Poisson(mean) draws served from vectorized blocks."""

    __slots__ = ("_rng", "_mean", "_block", "_buf", "_pos")

    def __init__(self, rng: np.random.Generator, mean: float = 1.0, block: int = 1 << 14):
        self._rng = rng
        self._mean = mean
        self._block = block
        self._buf = rng.poisson(mean, block)
        self._pos = 0

    def next(self) -> int:
        if self._pos >= self._buf.shape[0]:
            self._buf = self._rng.poisson(self._mean, self._block)
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return int(v)


def sample_distinct(ubuf: UniformBuffer, n: int, k: int) -> list[int]:
    """k distinct uniform indices from range(n) (unordered).

    Rejection sampling; cheap for k << n, falls back to a partial shuffle
    when k is a large fraction of n.
    """
    if k <= 0:
        return []
    if k >= n:
        return list(range(n))
    if k > n // 2:
        perm = np.argsort(ubuf.take(n))  # uniform permutation
        return perm[:k].tolist()
    chosen: set[int] = set()
    while len(chosen) < k:
        chosen.add(ubuf.index(n))
    return list(chosen)
