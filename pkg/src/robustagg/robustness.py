"""Certification of (f, kappa)-robustness by exhaustive subset enumeration,
closed-form robustness coefficients, lower-bound instances, and conversions
to other robustness formalisms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np

from .core import as_vectors

ENUMERATION_LIMIT = 10**6
ZERO_VAR_TOL = 1e-12


@dataclass(frozen=True)
class KappaEstimate:
    kappa_hat: float
    argmax_subset: tuple[int, ...]
    trials: int
    degenerate_count: int


def subsets_of_size(n: int, k: int) -> np.ndarray:
    count = math.comb(n, k)
    if count > ENUMERATION_LIMIT:
        raise ValueError(
            f"enumeration guard exceeded: {count} subsets of size {k} from n={n} (limit {ENUMERATION_LIMIT})"
        )
    return np.array(list(combinations(range(n), k)), dtype=np.int64).reshape(count, k)


def subset_ratios(output, vectors, subsets: np.ndarray, zero_var_tol: float = ZERO_VAR_TOL):
    """Error-to-variance ratio of ``output`` for every subset.

    Works on a batch: ``output`` is ``(..., d)``, ``vectors`` ``(..., n, d)``;
    the result is ``(..., n_subsets)``. Degenerate subsets (variance below
    ``zero_var_tol``) give 0 when the error is also below tolerance, else inf.
    Also returns the boolean degeneracy mask.
    """
    x = as_vectors(vectors)
    out = np.asarray(output, dtype=np.float64)
    sel = x[..., subsets, :]  # (..., C, k, d)
    centre = sel.mean(axis=-2)
    var = np.mean(np.sum((sel - centre[..., None, :]) ** 2, axis=-1), axis=-1)
    err = np.sum((out[..., None, :] - centre) ** 2, axis=-1)
    degenerate = var < zero_var_tol
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(degenerate, np.where(err > zero_var_tol, np.inf, 0.0), err / var)
    return ratio, degenerate


def estimate_kappa(
    agg: Callable, vectors, f: int, zero_var_tol: float = ZERO_VAR_TOL
) -> KappaEstimate:
    """Worst ratio of ``||F(x) - mean_S||^2`` to the variance of ``S`` over all
    subsets ``S`` of size ``n - f``."""
    x = as_vectors(vectors)
    if x.ndim != 2:
        raise ValueError("estimate_kappa takes a single (n, d) instance")
    n = x.shape[0]
    if 2 * f >= n:
        raise ValueError(f"estimate_kappa needs n > 2f, got n={n}, f={f}")
    subsets = subsets_of_size(n, n - f)
    ratio, degenerate = subset_ratios(agg(x), x, subsets, zero_var_tol)
    best = int(np.argmax(ratio))
    return KappaEstimate(
        kappa_hat=float(ratio[best]),
        argmax_subset=tuple(int(i) for i in subsets[best]),
        trials=len(subsets),
        degenerate_count=int(degenerate.sum()),
    )


def _check_nf(n: int, f: int):
    if f < 0 or 2 * f >= n:
        raise ValueError(f"need n > 2f >= 0, got n={n}, f={f}")


def theoretical_kappa(rule: str, n: int, f: int) -> float:
    _check_nf(n, f)
    r = f / (n - 2 * f)
    if rule == "cwtm":
        return 6 * r * (1 + r)
    if rule == "krum":
        return 6 * (1 + r)
    if rule in ("gm", "cwmed"):
        return 4 * (1 + r) ** 2
    if rule == "mean":
        raise ValueError("no robustness guarantee for mean")
    raise ValueError(f"unknown rule {rule!r}")


def nnm_boosted_kappa(kappa: float, n: int, f: int) -> float:
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    _check_nf(n, f)
    return 8 * f / (n - f) * (kappa + 1)


def pipeline_kappa(pipeline, n: int, f: int | None = None) -> float:
    """Certified coefficient of a pipeline with no randomness.

    The plain mean only qualifies for ``f = 0``, where it returns the exact
    average of all inputs.
    """
    f = pipeline.f if f is None else f
    _check_nf(n, f)
    kind = pipeline.pre.kind
    if kind == "bucketing":
        raise ValueError("bucketing has no worst-case robustness coefficient")
    base = pipeline.base.name
    if base == "mean":
        if f > 0:
            raise ValueError("no robustness guarantee for mean")
        kappa = 0.0
    else:
        kappa = theoretical_kappa(base, n, f)
    return nnm_boosted_kappa(kappa, n, f) if kind == "nnm" else kappa


def lower_bound_instance(kind: str, n: int, f: int) -> np.ndarray:
    _check_nf(n, f)
    x = np.zeros((n, 1))
    if kind == "universal":
        x[n - f :] = 1.0
    elif kind == "gar":
        if f < 1:
            raise ValueError("gar instance requires f >= 1")
        x[:] = 1.0
        x[: (n - f) // 2] = -1.0
    else:
        raise ValueError(f"unknown lower-bound instance {kind!r}")
    return x


def universal_kappa_floor(n: int, f: int) -> float:
    _check_nf(n, f)
    return f / (n - 2 * f)


def gar_ratio(n: int, f: int) -> float:
    _check_nf(n, f)
    if f < 1:
        raise ValueError("gar_ratio requires f >= 1")
    h = n - f
    return 1.0 if h % 2 == 0 else (h - 1) / (h + 1)


def lambda_from_kappa(kappa: float) -> float:
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    return math.sqrt(kappa / 2)


def aragg_c(kappa: float, n: int, f: int) -> float:
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if f < 1:
        raise ValueError("aragg_c requires f >= 1")
    return kappa * n / (2 * f)


def heterogeneity_lower_bound_instance(n: int, f: int, G: float, d: int = 2) -> np.ndarray:
    """Quadratic centres: ``n - f`` workers at the origin, ``f`` at ``z`` with
    ``||z||^2 = (n - f)^2 G^2 / (f (n - 2f))``."""
    if f < 1 or 2 * f >= n:
        raise ValueError(f"need n > 2f >= 2, got n={n}, f={f}")
    if G <= 0:
        raise ValueError("G must be positive")
    centres = np.zeros((n, d))
    centres[n - f :, 0] = math.sqrt((n - f) ** 2 / (f * (n - 2 * f))) * G
    return centres


def lower_bound_gap(theta_hat, n: int, f: int, centres) -> float:
    """max over the two honest-set hypotheses of ``||grad L_H(theta_hat)||^2``."""
    theta = np.asarray(theta_hat, dtype=np.float64)
    z = np.asarray(centres)[-1]
    first = np.sum(theta**2)
    second = np.sum((theta - f / (n - f) * z) ** 2)
    return float(max(first, second))


def heterogeneity_lower_bound_demo(n: int, f: int, G: float, T: int, algorithm, d: int = 2):
    """Run ``algorithm`` once on the indistinguishable two-situation instance.

    ``algorithm`` receives a :class:`~robustagg.tasks.QuadraticTask` plus ``T``
    and returns a model. The two situations feed identical inputs to any
    algorithm that ignores worker identities, so one run serves both.
    Returns ``(eps_observed, eps_floor)``.
    """
    from .tasks import QuadraticTask

    centres = heterogeneity_lower_bound_instance(n, f, G, d)
    theta_hat = algorithm(QuadraticTask(centres), T)
    observed = lower_bound_gap(theta_hat, n, f, centres)
    floor = 0.25 * f / (n - 2 * f) * G**2
    assert observed >= floor - 1e-9, (observed, floor)
    return observed, floor
