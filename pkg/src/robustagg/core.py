"""Vector statistics over index subsets and the seeded RNG contract.

Vectors are stacked as float64 arrays of shape ``(n, d)``; most helpers also
accept a leading batch axis ``(..., n, d)``. Index sets are 0-based, sorted,
duplicate-free sequences of row indices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

RNG_ALGORITHMS = ("philox", "pcg64")


def as_vectors(vectors, *, min_count: int = 1) -> np.ndarray:
    """Coerce input to a finite float64 array of shape ``(..., n, d)``.

    A 1-D input is read as ``n`` scalars, i.e. shape ``(n, 1)``.
    """
    try:
        x = np.asarray(vectors, dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"dimension mismatch: {exc}") from None
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim < 2:
        raise ValueError("expected a sequence of vectors")
    if x.shape[-2] < min_count:
        raise ValueError(f"expected at least {min_count} vector(s), got {x.shape[-2]}")
    if x.shape[-1] < 1:
        raise ValueError("vectors must have dimension d >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite entries in input vectors")
    return x


def check_index_set(S: Sequence[int], n: int) -> np.ndarray:
    idx = np.asarray(S, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ValueError("empty index set")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("index set must be strictly increasing")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValueError(f"index out of range for n={n}")
    return idx


def subset_mean(vectors, S: Sequence[int]) -> np.ndarray:
    x = as_vectors(vectors)
    idx = check_index_set(S, x.shape[-2])
    return x[..., idx, :].mean(axis=-2)


def subset_variance(vectors, S: Sequence[int]):
    """Population variance ``(1/|S|) sum_i ||x_i - mean_S||^2``."""
    x = as_vectors(vectors)
    idx = check_index_set(S, x.shape[-2])
    sel = x[..., idx, :]
    centered = sel - sel.mean(axis=-2, keepdims=True)
    out = np.mean(np.sum(centered**2, axis=-1), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def coordinate_std(vectors) -> np.ndarray:
    x = as_vectors(vectors)
    return x.std(axis=-2)


def pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    # explicit differences keep self-distances exactly zero
    diff = x[..., :, None, :] - x[..., None, :, :]
    return np.einsum("...ijk,...ijk->...ij", diff, diff)


@dataclass(frozen=True)
class RngStream:
    """Identity of a reproducible random stream.

    Equal ``(seed, stream_id, algorithm)`` always yield the same draws. Streams
    with different ids are statistically independent, so per-worker streams do
    not depend on the order in which workers are scheduled.
    """

    seed: int
    stream_id: int = 0
    algorithm: str = "philox"

    def __post_init__(self):
        if self.algorithm not in RNG_ALGORITHMS:
            raise ValueError(f"unknown rng algorithm {self.algorithm!r}")
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        bitgen = np.random.Philox(ss) if self.algorithm == "philox" else np.random.PCG64(ss)
        return np.random.Generator(bitgen)

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id, self.algorithm)
