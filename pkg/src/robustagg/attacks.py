"""Byzantine behaviours: fall of empires (FOE), a little is enough (ALIE),
sign flipping (SF), label flipping (LF) and Mimic, plus the greedy line search
over the attack magnitude."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import as_vectors, coordinate_std

ATTACK_NAMES = ("none", "foe", "alie", "sf", "lf", "mimic")
VECTOR_ATTACKS = ("foe", "alie", "sf")
SEARCHED_ATTACKS = ("foe", "alie")

DEFAULT_GRIDS = {
    "foe": np.linspace(0.0, 10.0, 201),
    "alie": np.linspace(-5.0, 5.0, 201),
}


def default_grid(kind: str) -> np.ndarray:
    return DEFAULT_GRIDS[kind].copy()


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    eta_grid: tuple[float, ...] | None = None
    mimic_warmup: int | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_NAMES:
            raise ValueError(f"unknown attack {self.kind!r}; expected one of {ATTACK_NAMES}")
        if self.eta_grid is not None:
            grid = np.asarray(self.eta_grid, dtype=np.float64)
            if grid.size == 0 or not np.all(np.isfinite(grid)):
                raise ValueError("eta grid must be non-empty and finite")
            object.__setattr__(self, "eta_grid", tuple(float(v) for v in grid))
        if self.mimic_warmup is not None and self.mimic_warmup < 0:
            raise ValueError("mimic warmup must be nonnegative")

    def grid(self) -> np.ndarray:
        if self.eta_grid is not None:
            return np.asarray(self.eta_grid)
        return default_grid(self.kind)


def honest_reference(honest_vectors) -> np.ndarray:
    return as_vectors(honest_vectors).mean(axis=-2)


def attack_vector(kind: str, s_bar, honest_vectors, eta: float = 0.0) -> np.ndarray:
    s_bar = np.asarray(s_bar, dtype=np.float64)
    if kind == "foe":
        return (1.0 - eta) * s_bar
    if kind == "alie":
        return s_bar + eta * coordinate_std(honest_vectors)
    if kind == "sf":
        return -s_bar
    raise ValueError(f"not a vector-formula attack: {kind!r}")


def assemble(honest_vectors: np.ndarray, byz_rows: np.ndarray, honest_mask: np.ndarray) -> np.ndarray:
    """Interleave honest rows and Byzantine rows ``(..., n_byz, d)`` into the
    server's input order; leading batch axes of ``byz_rows`` are kept."""
    n = honest_mask.size
    d = honest_vectors.shape[-1]
    byz_rows = np.asarray(byz_rows, dtype=np.float64)
    if byz_rows.shape[-2:] != (n - int(honest_mask.sum()), d):
        raise ValueError(f"expected Byzantine rows of shape (..., {n - int(honest_mask.sum())}, {d})")
    out = np.empty(byz_rows.shape[:-2] + (n, d))
    out[..., honest_mask, :] = honest_vectors
    out[..., ~honest_mask, :] = byz_rows
    return out


def replicate(vector: np.ndarray, count: int) -> np.ndarray:
    """``count`` copies of ``vector`` (or of each vector in a batch)."""
    vector = np.asarray(vector, dtype=np.float64)
    return np.broadcast_to(vector[..., None, :], vector.shape[:-1] + (count, vector.shape[-1]))


def optimize_eta(
    kind: str,
    eta_grid: Sequence[float],
    honest_vectors,
    f: int,
    aggregator: Callable,
    honest_mask: np.ndarray | None = None,
):
    """Pick the grid value maximising ``||F(inputs) - s_bar||``.

    All grid candidates are stacked and aggregated in one batched call. Ties go
    to the earliest grid entry. Returns ``(eta, byzantine_vector, score)``.
    """
    if kind not in SEARCHED_ATTACKS:
        raise ValueError(f"eta search only applies to {SEARCHED_ATTACKS}, got {kind!r}")
    grid = np.asarray(eta_grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise ValueError("empty eta grid")
    honest = as_vectors(honest_vectors)
    s_bar = honest_reference(honest)
    if honest_mask is None:
        honest_mask = np.arange(len(honest) + f) < len(honest)
    if kind == "foe":
        cands = (1.0 - grid)[:, None] * s_bar
    else:
        cands = s_bar + grid[:, None] * coordinate_std(honest)
    nbyz = honest_mask.size - int(honest_mask.sum())
    outputs = aggregator(assemble(honest, replicate(cands, nbyz), honest_mask))
    scores = np.sqrt(np.sum((outputs - s_bar) ** 2, axis=-1))
    best = int(np.argmax(scores))
    return float(grid[best]), cands[best], float(scores[best])


def label_flip(label: int, num_classes: int) -> int:
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} out of range for {num_classes} classes")
    return num_classes - 1 - label


@dataclass(frozen=True)
class MimicState:
    direction: np.ndarray | None = None
    rounds: int = 0


def mimic_select(honest_vectors, state: MimicState | None = None, warmup: int | None = None):
    """Choose which honest worker every Byzantine worker copies.

    Tracks the dominant direction of honest deviations by one power-iteration
    step per round (frozen after ``warmup`` rounds when given), and picks the
    worker furthest along it. Returns ``(index, new_state)``; indices refer to
    rows of ``honest_vectors``.
    """
    x = as_vectors(honest_vectors)
    state = state or MimicState()
    dev = x - x.mean(axis=0)
    z = state.direction
    if z is None:
        z = dev[int(np.argmax(np.sum(dev**2, axis=1)))]
        z = _normalise(z, z)
    elif warmup is None or state.rounds < warmup:
        z = _normalise((dev @ z) @ dev, z)
    index = int(np.argmax(dev @ z))
    return index, MimicState(z, state.rounds + 1)


def _normalise(v: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else fallback
