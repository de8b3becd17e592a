"""Robust distributed gradient descent (D-GD) and distributed stochastic heavy
ball (D-SHB) with a robust server-side aggregation pipeline, per-step metrics
and evaluation of the matching convergence bounds."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aggregators import GM_MAX_ITERS, GM_SMOOTHING, GM_TOLERANCE
from .attacks import (
    SEARCHED_ATTACKS,
    AttackSpec,
    MimicState,
    assemble,
    attack_vector,
    honest_reference,
    mimic_select,
    optimize_eta,
    replicate,
)
from .core import RngStream
from .preagg import Pipeline, parse_pipeline
from .robustness import pipeline_kappa
from .tasks import (
    LogisticTask,
    QuadraticTask,
    dirichlet_partition,
    heterogeneity_G,
    load_idx,
    make_gaussian_mixture,
)

ALGORITHMS = ("dgd", "dshb")
CSV_HEADER = ("step", "loss", "grad_norm", "agg_norm", "kappa_hat", "eta_star")
DEGENERATE_TOL = 1e-12

SERVER_STREAM = 0


def worker_stream(i: int) -> int:
    return 1 + i


def attacker_stream(n: int) -> int:
    return n + 1


def task_stream(n: int) -> int:
    return n + 2


def output_stream(n: int) -> int:
    return n + 3


@dataclass(frozen=True)
class TaskSpec:
    """Description of a task built deterministically from the run seed.

    Quadratic centres are ``center_mean + center_spread * N(0, I)``. Logistic
    data is a Gaussian mixture (or an IDX pair) split by a Dirichlet partition.
    """

    kind: str = "quadratic"
    d: int = 10
    center_mean: float = 1.0
    center_spread: float = 1.0
    theta0: tuple[float, ...] | None = None
    samples: int = 2000
    features: int = 5
    classes: int = 3
    alpha: float = 1.0
    l2_reg: float = 1e-4
    separation: float = 2.0
    idx_images: str | None = None
    idx_labels: str | None = None

    def __post_init__(self):
        if self.kind not in ("quadratic", "logistic"):
            raise ValueError(f"unknown task kind {self.kind!r}")

    def build(self, n: int, seed: int, noise_sigma: float = 0.0):
        rng = RngStream(seed, task_stream(n)).generator()
        if self.kind == "quadratic":
            centers = self.center_mean + self.center_spread * rng.standard_normal((n, self.d))
            task = QuadraticTask(centers, noise_sigma)
        else:
            if self.idx_images:
                data = load_idx(self.idx_images, self.idx_labels, self.classes)
                data.features = np.hstack([data.features, np.ones((len(data.features), 1))])
            else:
                data = make_gaussian_mixture(self.samples, self.features, self.classes, rng, self.separation)
            part = dirichlet_partition(data.labels, n, self.alpha, rng)
            task = LogisticTask.from_partition(data, part, self.l2_reg)
        theta0 = np.zeros(task.dim) if self.theta0 is None else np.asarray(self.theta0, dtype=np.float64)
        if theta0.shape != (task.dim,):
            raise ValueError(f"theta0 must have length {task.dim}")
        return task, theta0


@dataclass(frozen=True)
class PipelineSpec:
    name: str = "nnm+cwtm"
    bucket_size: int | None = None
    gm_tolerance: float = GM_TOLERANCE
    gm_max_iters: int = GM_MAX_ITERS
    gm_smoothing: float = GM_SMOOTHING

    def build(self, f: int, rng: RngStream | None = None) -> Pipeline:
        return parse_pipeline(
            self.name,
            f,
            bucket_size=self.bucket_size,
            rng=rng,
            gm_tolerance=self.gm_tolerance,
            gm_max_iters=self.gm_max_iters,
            gm_smoothing=self.gm_smoothing,
        )


@dataclass
class RunConfig:
    n: int
    f: int
    task: object = field(default_factory=TaskSpec)
    pipeline: PipelineSpec | str = "nnm+cwtm"
    attack: AttackSpec | str = "none"
    algorithm: str = "dgd"
    T: int = 100
    gamma: float | str = "auto"
    beta: float | str = "auto"
    batch_size: int | None = None
    clip_norm: float | None = None
    sigma: float | None = None
    seed: int = 0
    honest_set: Sequence[int] | None = None
    theta0: Sequence[float] | None = None

    def __post_init__(self):
        if isinstance(self.pipeline, str):
            self.pipeline = PipelineSpec(self.pipeline)
        if isinstance(self.attack, str):
            self.attack = AttackSpec(self.attack)
        if self.n < 1 or self.f < 0 or 2 * self.f >= self.n:
            raise ValueError(f"need n > 2f >= 0, got n={self.n}, f={self.f}")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.gamma != "auto" and not float(self.gamma) > 0:
            raise ValueError("gamma must be positive or 'auto'")
        if self.beta != "auto" and not 0 <= float(self.beta) < 1:
            raise ValueError("beta must lie in [0, 1) or be 'auto'")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        honest = self.honest_indices()
        if len(honest) != self.n - self.f or len(set(honest)) != len(honest):
            raise ValueError("honest_set must list n - f distinct workers")
        if any(not 0 <= i < self.n for i in honest):
            raise ValueError("honest_set index out of range")

    def honest_indices(self) -> list[int]:
        if self.honest_set is None:
            return list(range(self.n - self.f))
        return sorted(int(i) for i in self.honest_set)

    def honest_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.honest_indices()] = True
        return mask

    def resolve_task(self):
        """Return ``(task, theta0)``, building the task from its spec if needed."""
        if isinstance(self.task, TaskSpec):
            task, theta0 = self.task.build(self.n, self.seed, self.sigma or 0.0)
        else:
            task = self.task
            theta0 = np.zeros(task.dim)
        if self.theta0 is not None:
            theta0 = np.asarray(self.theta0, dtype=np.float64)
        if task.num_workers != self.n:
            raise ValueError(f"task has {task.num_workers} workers, config says n={self.n}")
        return task, theta0


@dataclass
class MetricRow:
    step: int
    loss: float
    grad_norm: float
    agg_norm: float
    kappa_hat: float
    eta_star: float | None = None


@dataclass
class RunResult:
    theta_hat: np.ndarray
    trace: list[MetricRow]
    thetas: list[np.ndarray]
    gamma: float
    beta: float
    selected_step: int
    honest: list[int]


def momentum_update(m_prev, g, beta: float) -> np.ndarray:
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    return beta * np.asarray(m_prev) + (1.0 - beta) * np.asarray(g)


def clip(g, clip_norm: float | None) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if clip_norm is None:
        return g
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    norm = float(np.linalg.norm(g))
    return g if norm <= clip_norm else g * (clip_norm / norm)


def kappa_hat_step(R, honest_vectors, tol: float = DEGENERATE_TOL) -> float:
    """Aggregation error over honest spread: ``||R - m_bar||^2 / var(m_H)``."""
    m = np.asarray(honest_vectors, dtype=np.float64)
    m_bar = m.mean(axis=0)
    num = float(np.sum((np.asarray(R) - m_bar) ** 2))
    den = float(np.mean(np.sum((m - m_bar) ** 2, axis=1)))
    if den < tol:
        return 0.0 if num < tol else math.inf
    return num / den


@dataclass(frozen=True)
class DSHBConstants:
    gamma: float
    beta: float
    rhs: float
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a_kappa: float


def dshb_constants(L: float, gap: float, sigma: float, G: float, n: int, f: int, kappa: float, T: int) -> DSHBConstants:
    """Learning rate, momentum and expected-error bound of the D-SHB analysis."""
    if L <= 0 or gap < 0 or sigma < 0 or G < 0 or kappa < 0 or T < 1:
        raise ValueError("invalid constants for the D-SHB schedule")
    a1 = 36.0
    a2 = 6.0 * math.sqrt(gap)
    a3 = 1728.0 * L
    a4 = 288.0 * L
    a5 = 6.0 * L * a2**2
    a_kappa = math.sqrt(a3 * kappa + a4 / (n - f))
    gamma = 1.0 / (24.0 * L)
    if sigma > 0:
        gamma = min(gamma, a2 / (2.0 * a_kappa * sigma * math.sqrt(T)))
    beta = math.sqrt(max(0.0, 1.0 - 24.0 * gamma * L))
    rhs = (
        a1 * kappa * G**2
        + a2 * a_kappa * sigma / math.sqrt(T)
        + a5 / T
        + a2 * a4 * sigma / (n * a_kappa * T**1.5)
    )
    return DSHBConstants(gamma, beta, rhs, a1, a2, a3, a4, a5, a_kappa)


def certified_kappa(config: RunConfig) -> float:
    return pipeline_kappa(config.pipeline.build(config.f), config.n, config.f)


def dshb_bound_constants(config: RunConfig, task=None, theta0=None) -> DSHBConstants:
    if task is None:
        task, theta0 = config.resolve_task()
    missing = [name for name, ok in (
        ("sigma", config.sigma is not None),
        ("L", getattr(task, "smoothness", None) is not None),
        ("loss gap", hasattr(task, "optimality_gap")),
    ) if not ok]
    if missing:
        raise ValueError(f"auto schedule needs missing quantities: {', '.join(missing)}")
    honest = config.honest_indices()
    G = heterogeneity_G(task, honest) if isinstance(task, QuadraticTask) else 0.0
    return dshb_constants(
        task.smoothness,
        task.optimality_gap(honest, theta0),
        config.sigma,
        G,
        config.n,
        config.f,
        certified_kappa(config),
        config.T,
    )


class _Byzantine:
    """Produces the f Byzantine rows for one step."""

    def __init__(self, config: RunConfig, server: Pipeline):
        self.kind = config.attack.kind
        self.spec = config.attack
        self.f = config.f
        self.mask = config.honest_mask()
        self.byz = [i for i in range(config.n) if not self.mask[i]]
        # a private copy, so the search never advances the server's bucketing stream
        self.search = server.with_rng(RngStream(config.seed, attacker_stream(config.n)))
        self.mimic = MimicState()

    def rows(self, honest: np.ndarray, own: np.ndarray | None):
        """Return ``(rows, eta_star)``; ``own`` holds Byzantine workers' own
        honest-procedure vectors (used by ``none`` and ``lf``)."""
        if self.f == 0:
            return np.empty((0, honest.shape[1])), None
        if self.kind in ("none", "lf"):
            return own, None
        if self.kind == "mimic":
            i, self.mimic = mimic_select(honest, self.mimic, self.spec.mimic_warmup)
            return replicate(honest[i], self.f), None
        if self.kind in SEARCHED_ATTACKS:
            eta, vec, _ = optimize_eta(self.kind, self.spec.grid(), honest, self.f, self.search, self.mask)
            return replicate(vec, self.f), eta
        return replicate(attack_vector(self.kind, honest_reference(honest), honest), self.f), None


def _resolve_gamma_beta(config: RunConfig, task, theta0):
    if config.algorithm == "dgd":
        gamma = 1.0 / task.smoothness if config.gamma == "auto" else float(config.gamma)
        return gamma, 0.0
    if config.gamma == "auto":
        consts = dshb_bound_constants(config, task, theta0)
        gamma = consts.gamma
        beta = consts.beta if config.beta == "auto" else float(config.beta)
    else:
        gamma = float(config.gamma)
        if config.beta == "auto":
            x = 1.0 - 24.0 * gamma * task.smoothness
            if x < 0:
                raise ValueError("beta='auto' needs gamma <= 1/(24 L)")
            beta = math.sqrt(x)
        else:
            beta = float(config.beta)
    if not 0 <= beta < 1:
        raise ValueError(f"momentum coefficient {beta} outside [0, 1)")
    return gamma, beta


def _batch(task, worker: int, b: int | None) -> int:
    size = task.shard_size(worker)
    return size if b is None else min(b, size)


def _worker_vector(task, i, theta, config, rngs, flipped=False, stochastic=False):
    if stochastic:
        b = _batch(task, i, config.batch_size)
        if b == 0:
            g = task.full_gradient(i, theta, flipped)
        else:
            g = task.stochastic_gradient(i, theta, b, rngs[i], flipped)
    else:
        g = task.full_gradient(i, theta, flipped)
    return clip(g, config.clip_norm)


def _run(config: RunConfig, task=None, theta0=None, pipeline: Pipeline | None = None) -> RunResult:
    if task is None:
        task, theta0 = config.resolve_task()
    theta = np.array(theta0, dtype=np.float64)
    gamma, beta = _resolve_gamma_beta(config, task, theta)
    honest = config.honest_indices()
    mask = config.honest_mask()
    byz_ids = [i for i in range(config.n) if not mask[i]]
    server = pipeline or config.pipeline.build(config.f, RngStream(config.seed, SERVER_STREAM))
    adversary = _Byzantine(config, server)
    rngs = {i: RngStream(config.seed, worker_stream(i)).generator() for i in range(config.n)}
    output_rng = RngStream(config.seed, output_stream(config.n)).generator()
    shb = config.algorithm == "dshb"
    momenta = np.zeros((config.n, task.dim))
    flipped = config.attack.kind == "lf"
    trace: list[MetricRow] = []
    thetas = [theta.copy()]
    for t in range(1, config.T + 1):
        vecs = np.stack([_worker_vector(task, i, theta, config, rngs, stochastic=shb) for i in honest])
        own = None
        if config.attack.kind in ("none", "lf") and byz_ids:
            own = np.stack([_worker_vector(task, i, theta, config, rngs, flipped, shb) for i in byz_ids])
        if shb:
            momenta[honest] = momentum_update(momenta[honest], vecs, beta)
            vecs = momenta[honest]
            if own is not None:
                momenta[byz_ids] = momentum_update(momenta[byz_ids], own, beta)
                own = momenta[byz_ids]
        byz_rows, eta = adversary.rows(vecs, own)
        R = server(assemble(vecs, byz_rows, mask))
        trace.append(MetricRow(
            step=t,
            loss=task.honest_loss(honest, theta),
            grad_norm=float(np.linalg.norm(task.honest_gradient(honest, theta))),
            agg_norm=float(np.linalg.norm(R)),
            kappa_hat=kappa_hat_step(R, vecs),
            eta_star=eta,
        ))
        theta = theta - gamma * R
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError(f"non-finite model at step {t}")
        thetas.append(theta.copy())
    if shb:
        selected = int(output_rng.integers(config.T))
    else:
        # tau is the first step with the smallest aggregate; theta_hat = theta_{tau-1}
        selected = int(np.argmin([row.agg_norm for row in trace]))
    return RunResult(thetas[selected].copy(), trace, thetas, gamma, beta, selected, honest)


def run_dgd(config: RunConfig, task=None, theta0=None, pipeline=None) -> RunResult:
    if config.algorithm != "dgd":
        raise ValueError("run_dgd needs algorithm='dgd'")
    return _run(config, task, theta0, pipeline)


def run_dshb(config: RunConfig, task=None, theta0=None, pipeline=None) -> RunResult:
    if config.algorithm != "dshb":
        raise ValueError("run_dshb needs algorithm='dshb'")
    return _run(config, task, theta0, pipeline)


def run(config: RunConfig, task=None, theta0=None) -> RunResult:
    return _run(config, task, theta0)


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    kappa: float
    G: float
    gap: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-9


def dgd_bound(config: RunConfig, result: RunResult, task=None, theta0=None) -> BoundCheck:
    """``||grad L_H(theta_hat)||^2`` against ``4 kappa G^2 + 4 L (L_H(theta_0) - L*) / T``."""
    if task is None:
        task, theta0 = config.resolve_task()
    if not isinstance(task, QuadraticTask):
        raise ValueError("bound check requires exact constants (quadratic task)")
    if not math.isclose(result.gamma, 1.0 / task.smoothness, rel_tol=1e-12):
        raise ValueError("the D-GD bound assumes gamma = 1/L")
    honest = result.honest
    kappa = certified_kappa(config)
    G = heterogeneity_G(task, honest)
    gap = task.optimality_gap(honest, theta0)
    lhs = float(np.sum(task.honest_gradient(honest, result.theta_hat) ** 2))
    rhs = 4 * kappa * G**2 + 4 * task.smoothness * gap / config.T
    return BoundCheck(lhs, rhs, kappa, G, gap)


def dshb_bound(config: RunConfig, result: RunResult, task=None, theta0=None) -> BoundCheck:
    """Single-run value against the D-SHB expected-error bound (holds only on average)."""
    if task is None:
        task, theta0 = config.resolve_task()
    if not isinstance(task, QuadraticTask):
        raise ValueError("bound check requires exact constants (quadratic task)")
    consts = dshb_bound_constants(config, task, theta0)
    honest = result.honest
    lhs = float(np.sum(task.honest_gradient(honest, result.theta_hat) ** 2))
    return BoundCheck(lhs, consts.rhs, certified_kappa(config), heterogeneity_G(task, honest), task.optimality_gap(honest, theta0))


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def trace_to_csv(trace: Sequence[MetricRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in trace:
        writer.writerow([row.step, _fmt(row.loss), _fmt(row.grad_norm), _fmt(row.agg_norm), _fmt(row.kappa_hat), _fmt(row.eta_star)])
    return out.getvalue()


def write_trace_csv(trace: Sequence[MetricRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(trace_to_csv(trace))
