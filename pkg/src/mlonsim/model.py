"""Logistic regression model split across worker shards.

Parameter vectors are plain float64 numpy arrays of length d. The global
objective is the average over workers of each worker's mean logistic loss,
so with equal shard sizes it equals the mean loss over the pooled samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError


@dataclass(frozen=True)
class WorkerShard:
    """One worker's private samples. Labels are strictly -1/+1."""

    worker_id: int
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int, entries in {-1, +1}

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ConfigurationError("shard features must be (n, d), labels (n,)")
        if len(self.features) != len(self.labels):
            raise ConfigurationError("shard features/labels length mismatch")
        if len(self.labels) == 0:
            raise ConfigurationError("shard must hold at least one sample")
        if not np.all(np.abs(self.labels) == 1):
            raise ConfigurationError("labels must be -1 or +1")

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class GradientVector:
    values: np.ndarray
    worker_id: int
    iteration: int


def _signed_margins(w: np.ndarray, shard: WorkerShard) -> np.ndarray:
    if w.shape != (shard.dim,):
        raise ConfigurationError(
            f"parameter dimension {w.shape} does not match shard dimension ({shard.dim},)"
        )
    return shard.labels * (shard.features @ w)


def local_loss(w: np.ndarray, shard: WorkerShard) -> float:
    """Mean logistic loss log(1 + exp(-y * w.x)) over the shard.

    logaddexp(0, -z) is the stable two-branch evaluation, so large |z|
    never overflows.
    """
    z = _signed_margins(w, shard)
    return float(np.mean(np.logaddexp(0.0, -z)))


def local_gradient(w: np.ndarray, shard: WorkerShard, iteration: int = 0) -> GradientVector:
    """Analytic gradient of local_loss: -(1/n) sum_i y_i x_i sigmoid(-z_i)."""
    z = _signed_margins(w, shard)
    coeff = shard.labels * expit(-z)
    values = -(shard.features.T @ coeff) / shard.size
    return GradientVector(values=values, worker_id=shard.worker_id, iteration=iteration)


def global_loss(w: np.ndarray, shards: list[WorkerShard]) -> float:
    """Average of the per-worker mean losses."""
    if not shards:
        raise ConfigurationError("at least one shard required")
    return float(np.mean([local_loss(w, s) for s in shards]))


def global_gradient(w: np.ndarray, shards: list[WorkerShard]) -> np.ndarray:
    """Average of the per-worker gradients, in worker index order."""
    if not shards:
        raise ConfigurationError("at least one shard required")
    acc = np.zeros(shards[0].dim)
    for s in shards:
        acc += local_gradient(w, s).values
    return acc / len(shards)


def smoothness_bound(shards: list[WorkerShard]) -> float:
    """Upper bound on the objective's smoothness: max_i ||x_i||^2 / 4."""
    best = 0.0
    for s in shards:
        best = max(best, float(np.max(np.sum(s.features**2, axis=1))))
    return max(best / 4.0, 1e-12)


def default_step_size(shards: list[WorkerShard]) -> float:
    """Constant step size 1/L guaranteeing monotone descent."""
    return 1.0 / smoothness_bound(shards)


def partition_dataset(
    features: np.ndarray, labels: np.ndarray, num_workers: int, seed: int
) -> list[WorkerShard]:
    """Shuffle, truncate to a multiple of num_workers, and split into equal
    disjoint shards. Deterministic per seed; worker ids are 1-based."""
    n = len(labels)
    if num_workers < 1:
        raise ConfigurationError("num_workers must be >= 1")
    if num_workers > n:
        raise ConfigurationError(f"cannot split {n} samples across {num_workers} workers")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    per_worker = n // num_workers
    perm = perm[: per_worker * num_workers]
    shards = []
    for j in range(num_workers):
        idx = perm[j * per_worker : (j + 1) * per_worker]
        shards.append(
            WorkerShard(worker_id=j + 1, features=features[idx], labels=labels[idx])
        )
    return shards
