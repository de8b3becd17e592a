"""Base aggregation rules: mean, coordinate-wise median / trimmed mean,
geometric median (smoothed Weiszfeld) and Krum.

Every rule maps an array of shape ``(..., n, d)`` to ``(..., d)``, so a stack of
independent input sets can be aggregated in one call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_vectors, pairwise_sq_dists

RULE_NAMES = ("mean", "cwmed", "cwtm", "gm", "krum")

GM_TOLERANCE = 1e-10
GM_MAX_ITERS = 1000
GM_SMOOTHING = 1e-8


class RobustnessPreconditionError(ValueError):
    pass


def _require_majority(n: int, f: int, rule: str):
    if f < 0:
        raise ValueError("f must be nonnegative")
    if 2 * f >= n:
        raise RobustnessPreconditionError(
            f"robustness precondition violated: {rule} needs n > 2f, got n={n}, f={f}"
        )


def mean(vectors) -> np.ndarray:
    return as_vectors(vectors).mean(axis=-2)


def cwmed(vectors) -> np.ndarray:
    # numpy's median already takes the midpoint of the two central values for even n
    return np.median(as_vectors(vectors), axis=-2)


def cwtm(vectors, f: int) -> np.ndarray:
    x = as_vectors(vectors)
    n = x.shape[-2]
    _require_majority(n, f, "cwtm")
    ordered = np.sort(x, axis=-2, kind="stable")
    # reduce along a contiguous axis so each coordinate's summation order, and
    # hence its rounding, does not depend on how many coordinates there are
    kept = np.ascontiguousarray(np.swapaxes(ordered[..., f : n - f, :], -1, -2))
    return kept.mean(axis=-1)


def geometric_median(
    vectors,
    tolerance: float = GM_TOLERANCE,
    max_iters: int = GM_MAX_ITERS,
    smoothing: float = GM_SMOOTHING,
) -> np.ndarray:
    """Smoothed Weiszfeld iteration started from the arithmetic mean.

    The result is replaced by the best input point when that has a smaller
    objective. Each item of a batch stops independently once successive
    iterates are closer than ``tolerance``, so batching does not change any
    single result.
    """
    if tolerance <= 0:
        raise ValueError("gm tolerance must be positive")
    if max_iters < 1:
        raise ValueError("gm max_iters must be >= 1")
    if smoothing < 0:
        raise ValueError("gm smoothing must be nonnegative")
    x = as_vectors(vectors)
    batch_shape = x.shape[:-2]
    n, d = x.shape[-2:]
    xb = x.reshape(-1, n, d)
    y = xb.mean(axis=1)
    active = np.ones(len(xb), dtype=bool)
    floor = smoothing if smoothing > 0 else np.finfo(np.float64).tiny
    for _ in range(max_iters):
        ids = np.flatnonzero(active)
        if ids.size == 0:
            break
        pts = xb[ids]
        cur = y[ids]
        dist = np.sqrt(np.sum((pts - cur[:, None, :]) ** 2, axis=-1))
        w = 1.0 / np.maximum(dist, floor)
        nxt = np.einsum("bi,bid->bd", w, pts) / w.sum(axis=1, keepdims=True)
        if not np.all(np.isfinite(nxt)):
            raise FloatingPointError("non-finite iterate in geometric median")
        step = np.sqrt(np.sum((nxt - cur) ** 2, axis=-1))
        y[ids] = nxt
        active[ids[step < tolerance]] = False
    # Weiszfeld crawls when the minimiser sits on an input point; snap to the
    # best input whenever it beats the iterate
    pair = np.sqrt(np.maximum(pairwise_sq_dists(xb), 0.0)).sum(axis=-1)
    obj = np.sqrt(np.sum((xb - y[:, None, :]) ** 2, axis=-1)).sum(axis=-1)
    best = np.argmin(pair, axis=-1)
    snap = pair[np.arange(len(xb)), best] < obj
    y[snap] = xb[snap, best[snap]]
    return y.reshape(*batch_shape, d)


def krum_scores(vectors, f: int) -> np.ndarray:
    """Sum of squared distances from each vector to its ``n - f`` nearest
    neighbours (itself included)."""
    x = as_vectors(vectors)
    n = x.shape[-2]
    _require_majority(n, f, "krum")
    dists = np.sort(pairwise_sq_dists(x), axis=-1)
    return dists[..., : n - f].sum(axis=-1)


def krum(vectors, f: int) -> np.ndarray:
    x = as_vectors(vectors)
    # argmin returns the first minimiser, i.e. the lowest index on ties
    winner = np.argmin(krum_scores(x, f), axis=-1)
    return np.take_along_axis(x, winner[..., None, None], axis=-2)[..., 0, :]


@dataclass(frozen=True)
class AggregatorSpec:
    name: str
    f: int = 0
    gm_tolerance: float = GM_TOLERANCE
    gm_max_iters: int = GM_MAX_ITERS
    gm_smoothing: float = GM_SMOOTHING

    def __post_init__(self):
        if self.name not in RULE_NAMES:
            raise ValueError(f"unknown aggregation rule {self.name!r}; expected one of {RULE_NAMES}")
        if self.f < 0:
            raise ValueError("f must be nonnegative")
        if self.gm_tolerance <= 0 or self.gm_max_iters < 1 or self.gm_smoothing < 0:
            raise ValueError("invalid geometric median parameters")

    def __call__(self, vectors) -> np.ndarray:
        return aggregate(self, vectors)


def aggregate(spec: AggregatorSpec, vectors, f: int | None = None) -> np.ndarray:
    x = as_vectors(vectors)
    f = spec.f if f is None else f
    if spec.name == "mean":
        return mean(x)
    _require_majority(x.shape[-2], f, spec.name)
    if spec.name == "cwmed":
        return cwmed(x)
    if spec.name == "cwtm":
        return cwtm(x, f)
    if spec.name == "krum":
        return krum(x, f)
    return geometric_median(x, spec.gm_tolerance, spec.gm_max_iters, spec.gm_smoothing)
