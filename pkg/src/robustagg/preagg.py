"""Pre-aggregation transforms (nearest neighbor mixing, bucketing) and their
composition with a base rule into a server pipeline."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .aggregators import RULE_NAMES, AggregatorSpec, RobustnessPreconditionError, aggregate
from .core import RngStream, as_vectors, pairwise_sq_dists

PREAGG_NAMES = ("none", "nnm", "bucketing")


def nnm(vectors, f: int) -> np.ndarray:
    """Replace every vector by the average of its ``n - f`` nearest neighbours.

    Distance ties are broken towards the lowest index. Output rows follow
    input order.
    """
    x = as_vectors(vectors)
    n = x.shape[-2]
    if f < 0 or 2 * f >= n:
        raise RobustnessPreconditionError(f"nnm needs n > 2f, got n={n}, f={f}")
    order = np.argsort(pairwise_sq_dists(x), axis=-1, kind="stable")[..., : n - f]
    mix = np.zeros(x.shape[:-1] + (n,))
    np.put_along_axis(mix, order, 1.0 / (n - f), axis=-1)
    return mix @ x


def bucket_slices(n: int, s: int) -> list[slice]:
    return [slice(k, min(k + s, n)) for k in range(0, n, s)]


def bucketing(vectors, s: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffle, cut into consecutive buckets of size ``s`` and average each.

    The last bucket holds the remainder when ``s`` does not divide ``n``. Batched
    input draws one permutation per input set, in batch order.
    """
    x = as_vectors(vectors)
    n = x.shape[-2]
    if s < 1:
        raise ValueError("bucket size must be >= 1")
    if s > n:
        raise ValueError(f"bucket size {s} exceeds number of inputs {n}")
    flat = x.reshape(-1, n, x.shape[-1])
    perms = np.stack([rng.permutation(n) for _ in range(len(flat))])
    shuffled = np.take_along_axis(flat, perms[:, :, None], axis=1)
    out = np.stack([shuffled[:, sl].mean(axis=1) for sl in bucket_slices(n, s)], axis=1)
    return out.reshape(*x.shape[:-2], out.shape[1], x.shape[-1])


def default_bucket_size(n: int, f: int) -> int:
    return n // (2 * f) if f > 0 else 1


@dataclass(frozen=True)
class PreAggSpec:
    kind: str = "none"
    f: int = 0
    bucket_size: int | None = None
    rng: RngStream | None = None

    def __post_init__(self):
        if self.kind not in PREAGG_NAMES:
            raise ValueError(f"unknown pre-aggregation {self.kind!r}; expected one of {PREAGG_NAMES}")
        if self.bucket_size is not None and self.bucket_size < 1:
            raise ValueError("bucket size must be >= 1")


class Pipeline:
    """``base ∘ pre`` as a callable on ``(..., n, d)`` arrays.

    ``evaluations`` counts aggregated input sets (a batch of B sets counts B).
    """

    def __init__(self, pre: PreAggSpec, base: AggregatorSpec):
        self.pre = pre
        self.base = base
        self.evaluations = 0
        self._gen = None
        if pre.kind == "bucketing":
            self._gen = (pre.rng or RngStream(0)).generator()

    @property
    def name(self) -> str:
        return self.base.name if self.pre.kind == "none" else f"{self.pre.kind}+{self.base.name}"

    @property
    def f(self) -> int:
        return self.base.f

    def bucket_size(self, n: int) -> int:
        return self.pre.bucket_size or default_bucket_size(n, self.pre.f)

    def with_rng(self, rng: RngStream) -> "Pipeline":
        return Pipeline(replace(self.pre, rng=rng), self.base)

    def __call__(self, vectors) -> np.ndarray:
        x = as_vectors(vectors)
        self.evaluations += int(np.prod(x.shape[:-2], dtype=np.int64))
        if self.pre.kind == "nnm":
            x = nnm(x, self.pre.f)
        elif self.pre.kind == "bucketing":
            n = x.shape[-2]
            s = self.bucket_size(n)
            if self.pre.f >= 1 and s > n // (2 * self.pre.f):
                raise ValueError(f"bucket size {s} exceeds n/(2f) = {n // (2 * self.pre.f)}")
            x = bucketing(x, s, self._gen)
            if 2 * self.base.f >= x.shape[-2] and self.base.name != "mean":
                raise RobustnessPreconditionError(
                    f"bucket size too large for f: {x.shape[-2]} buckets cannot tolerate f={self.base.f}"
                )
        return aggregate(self.base, x)

    def __repr__(self):
        return f"Pipeline({self.name!r}, f={self.f})"


def compose(pre: PreAggSpec, base: AggregatorSpec) -> Pipeline:
    return Pipeline(pre, base)


def parse_pipeline(
    text: str,
    f: int,
    *,
    bucket_size: int | None = None,
    rng: RngStream | None = None,
    **gm_params,
) -> Pipeline:
    """Build a pipeline from strings like ``"cwtm"``, ``"nnm+krum"``, ``"bucketing+gm"``."""
    parts = text.strip().lower().split("+")
    if len(parts) == 1:
        pre_kind, base_name = "none", parts[0]
    elif len(parts) == 2:
        pre_kind, base_name = parts
    else:
        raise ValueError(f"malformed pipeline {text!r}")
    if base_name not in RULE_NAMES:
        raise ValueError(f"unknown aggregation rule {base_name!r} in pipeline {text!r}")
    if pre_kind not in PREAGG_NAMES:
        raise ValueError(f"unknown pre-aggregation {pre_kind!r} in pipeline {text!r}")
    base = AggregatorSpec(base_name, f, **gm_params)
    return Pipeline(PreAggSpec(pre_kind, f, bucket_size, rng), base)
