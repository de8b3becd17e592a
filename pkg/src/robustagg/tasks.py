"""Per-worker objectives, synthetic and IDX-backed datasets, and the Dirichlet
label-skew partitioner."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import subset_variance

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class QuadraticTask:
    """Worker ``i`` minimises ``0.5 * ||theta - c_i||^2``.

    Smoothness is exactly 1, honest heterogeneity is the variance of the honest
    centres at every ``theta``. ``noise_sigma`` adds isotropic Gaussian noise
    with ``E||noise||^2 = noise_sigma^2`` to stochastic gradients.
    """

    kind = "quadratic"
    smoothness = 1.0

    def __init__(self, centers, noise_sigma: float = 0.0):
        c = np.asarray(centers, dtype=np.float64)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError("centers must be an (n, d) array")
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        self.centers = c
        self.noise_sigma = float(noise_sigma)

    @property
    def num_workers(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _center(self, worker: int, flipped: bool = False) -> np.ndarray:
        if not 0 <= worker < self.num_workers:
            raise KeyError(f"unknown worker id {worker}")
        # label flipping has no labels here; the analogue is mirroring the centre
        return -self.centers[worker] if flipped else self.centers[worker]

    def shard_size(self, worker: int) -> int:
        self._center(worker)
        return 1

    def loss(self, worker: int, theta) -> float:
        return 0.5 * float(np.sum((np.asarray(theta) - self._center(worker)) ** 2))

    def full_gradient(self, worker: int, theta, flipped: bool = False) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64) - self._center(worker, flipped)

    def stochastic_gradient(self, worker, theta, batch_size, rng, flipped=False) -> np.ndarray:
        if batch_size < 1:
            raise ValueError("batch size must be >= 1")
        g = self.full_gradient(worker, theta, flipped)
        if self.noise_sigma > 0:
            g = g + rng.standard_normal(self.dim) * (self.noise_sigma / math.sqrt(self.dim))
        return g

    def honest_loss(self, honest: Sequence[int], theta) -> float:
        diff = np.asarray(theta) - self.centers[list(honest)]
        return 0.5 * float(np.mean(np.sum(diff**2, axis=1)))

    def honest_gradient(self, honest: Sequence[int], theta) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64) - self.centers[list(honest)].mean(axis=0)

    def optimal_value(self, honest: Sequence[int]) -> float:
        return self.honest_loss(honest, self.centers[list(honest)].mean(axis=0))

    def optimality_gap(self, honest: Sequence[int], theta) -> float:
        return self.honest_loss(honest, theta) - self.optimal_value(honest)


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class LogisticTask:
    """Multinomial logistic regression, one data shard per worker.

    The model is a ``(num_classes, num_features)`` weight matrix flattened
    row-major; append a constant feature for a bias term. Each point's loss is
    the negative log-likelihood plus ``l2_reg / 2 * ||theta||^2``.
    """

    kind = "logistic"

    def __init__(self, shards: Sequence[tuple[np.ndarray, np.ndarray]], num_classes: int, l2_reg: float = 0.0):
        if num_classes < 2:
            raise ValueError("need at least two classes")
        if l2_reg < 0:
            raise ValueError("l2_reg must be nonnegative")
        self.shards = [(np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64)) for X, y in shards]
        widths = {X.shape[1] for X, _ in self.shards if X.ndim == 2}
        if len(widths) != 1:
            raise ValueError("all shards need the same feature width")
        self.num_features = widths.pop()
        self.num_classes = num_classes
        self.l2_reg = float(l2_reg)
        for X, y in self.shards:
            if len(X) != len(y):
                raise ValueError("shard features and labels differ in length")
            if y.size and (y.min() < 0 or y.max() >= num_classes):
                raise ValueError("label out of range")
        max_sq = max((float(np.max(np.sum(X**2, axis=1))) for X, _ in self.shards if len(X)), default=0.0)
        # Hessian of the softmax NLL is bounded by 0.5 * ||x||^2 (= 1/4 with a slack of 2)
        self.smoothness = 0.25 * 2.0 * max_sq + self.l2_reg

    @classmethod
    def from_partition(cls, data: LabeledDataset, partition: "DirichletPartition", l2_reg: float = 0.0):
        shards = [(data.features[idx], data.labels[idx]) for idx in partition.assignments]
        return cls(shards, data.num_classes, l2_reg)

    @property
    def num_workers(self) -> int:
        return len(self.shards)

    @property
    def dim(self) -> int:
        return self.num_classes * self.num_features

    def _shard(self, worker: int, flipped: bool = False):
        if not 0 <= worker < self.num_workers:
            raise KeyError(f"unknown worker id {worker}")
        X, y = self.shards[worker]
        if flipped:
            y = (self.num_classes - 1) - y
        return X, y

    def shard_size(self, worker: int) -> int:
        return len(self._shard(worker)[0])

    def _loss_grad(self, X, y, theta):
        theta = np.asarray(theta, dtype=np.float64)
        W = theta.reshape(self.num_classes, self.num_features)
        reg_loss = 0.5 * self.l2_reg * float(theta @ theta)
        if len(X) == 0:
            return reg_loss, self.l2_reg * theta
        logits = X @ W.T
        logits = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(logits).sum(axis=1))
        nll = float(np.mean(logz - logits[np.arange(len(y)), y]))
        p = _softmax(logits)
        p[np.arange(len(y)), y] -= 1.0
        grad = (p.T @ X) / len(X)
        return nll + reg_loss, grad.reshape(-1) + self.l2_reg * theta

    def loss(self, worker: int, theta) -> float:
        X, y = self._shard(worker)
        return self._loss_grad(X, y, theta)[0]

    def full_gradient(self, worker: int, theta, flipped: bool = False) -> np.ndarray:
        X, y = self._shard(worker, flipped)
        return self._loss_grad(X, y, theta)[1]

    def stochastic_gradient(self, worker, theta, batch_size, rng, flipped=False) -> np.ndarray:
        X, y = self._shard(worker, flipped)
        if not 1 <= batch_size <= len(X):
            raise ValueError(f"batch size {batch_size} out of range for shard of size {len(X)}")
        if batch_size == len(X):
            return self._loss_grad(X, y, theta)[1]
        pick = np.sort(rng.choice(len(X), size=batch_size, replace=False))
        return self._loss_grad(X[pick], y[pick], theta)[1]

    def honest_loss(self, honest: Sequence[int], theta) -> float:
        return float(np.mean([self.loss(i, theta) for i in honest]))

    def honest_gradient(self, honest: Sequence[int], theta) -> np.ndarray:
        return np.mean([self.full_gradient(i, theta) for i in honest], axis=0)

    def optimality_gap(self, honest: Sequence[int], theta) -> float:
        # the loss is nonnegative, so L_H(theta) bounds the gap from above
        return self.honest_loss(honest, theta)


def heterogeneity_G(task, honest: Sequence[int], probes=None) -> float:
    """Heterogeneity ``G`` of the honest workers.

    Exact for quadratic tasks. For other tasks this is the largest honest
    gradient spread over the supplied probe points, an estimate only.
    """
    honest = list(honest)
    if isinstance(task, QuadraticTask):
        return math.sqrt(subset_variance(task.centers, honest))
    if probes is None:
        raise ValueError("probe points are required to estimate G for this task")
    worst = 0.0
    for theta in np.atleast_2d(np.asarray(probes, dtype=np.float64)):
        grads = np.stack([task.full_gradient(i, theta) for i in honest])
        worst = max(worst, subset_variance(grads, range(len(honest))))
    return math.sqrt(worst)


@dataclass
class DirichletPartition:
    alpha: float
    counts: np.ndarray
    assignments: list[np.ndarray] = field(repr=False)


def dirichlet_partition(labels, n_workers: int, alpha: float, rng: np.random.Generator) -> DirichletPartition:
    """Split samples across workers with per-class proportions ``~ Dir(alpha)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty label sequence")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n_workers < 1:
        raise ValueError("need at least one worker")
    classes = np.unique(labels)
    counts = np.zeros((n_workers, int(classes.max()) + 1), dtype=np.int64)
    buckets: list[list[np.ndarray]] = [[] for _ in range(n_workers)]
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        share = rng.dirichlet(np.full(n_workers, alpha))
        take = rng.multinomial(len(members), share)
        counts[:, c] = take
        for w, chunk in enumerate(np.split(members, np.cumsum(take)[:-1])):
            buckets[w].append(chunk)
    assignments = [np.sort(np.concatenate(b)) for b in buckets]
    return DirichletPartition(alpha, counts, assignments)


def make_gaussian_mixture(num_samples, num_features, num_classes, rng, separation=2.0, bias=True) -> LabeledDataset:
    means = rng.standard_normal((num_classes, num_features)) * separation
    y = rng.integers(num_classes, size=num_samples)
    X = means[y] + rng.standard_normal((num_samples, num_features))
    if bias:
        X = np.hstack([X, np.ones((num_samples, 1))])
    return LabeledDataset(X, y, num_classes)


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


def _read_idx(path, magic: int, ndims: int):
    raw = Path(path).read_bytes()
    header = 4 * (1 + ndims)
    if len(raw) < header:
        raise IdxTruncatedError(f"truncated header in {path}")
    found, *dims = struct.unpack(f">{1 + ndims}I", raw[:header])
    if found != magic:
        raise IdxMagicError(f"bad magic 0x{found:08x} in {path}, expected 0x{magic:08x}")
    size = int(np.prod(dims))
    body = raw[header:]
    if len(body) < size:
        raise IdxTruncatedError(f"truncated data in {path}: expected {size} bytes, got {len(body)}")
    return dims, np.frombuffer(body, dtype=np.uint8, count=size)


def load_idx(images_path, labels_path, num_classes: int = 10) -> LabeledDataset:
    """Read an MNIST-style IDX image/label pair; pixels are scaled to [0, 1]."""
    (count, rows, cols), pixels = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    (nlabels,), labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if count != nlabels:
        raise IdxCountMismatchError(f"count mismatch: {count} images vs {nlabels} labels")
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return LabeledDataset(features, labels.astype(np.int64), num_classes)
