"""Distributed gradient descent driven over the simulated uplink.

Each iteration k: the master broadcasts the current parameters (constant
downlink latency), every worker computes its shard gradient in parallel
(constant compute latency), the gradients contend on the uplink (simulated,
the dominant and variable cost), and the master applies the averaged update
(constant latency). Batch mode waits for all M gradients; minibatch mode
collects whatever arrives within a fixed window and averages over the
received subset with the 0/0 = 0 convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aloha import AlohaNetwork
from .config import MODE_BATCH, MODE_MINIBATCH, STOP_CAUSAL, SimConfig
from .errors import ConfigurationError
from .model import GradientVector, WorkerShard, default_step_size, global_loss, local_gradient
from .stopping import (
    causal_should_stop,
    causal_stop_index,
    combined_objective,
    compare_stops,
    noncausal_stop_index,
)


@dataclass(frozen=True)
class LatencyBreakdown:
    broadcast: float  # downlink parameter push
    compute: float  # parallel worker gradient computation
    uplink: float  # contention on the shared channel
    update: float  # master-side parameter update

    @property
    def total(self) -> float:
        return self.broadcast + self.compute + self.uplink + self.update


@dataclass(frozen=True)
class IterationRecord:
    k: int
    loss: float
    cost: LatencyBreakdown
    cum_cost: float  # raw seconds
    objective: float  # beta * normalized cum cost + (1-beta) * loss
    grads_received: int
    mean_queue_len: float
    grad_norm: float  # norm of the applied average gradient (0 when none)


@dataclass(frozen=True)
class StoppingResult:
    k_star: int
    k_star_c: int
    g_at_k_star: float
    g_at_k_star_c: float
    f_at_k_star: float
    f_at_k_star_c: float
    w_at_k_star: np.ndarray
    w_at_k_star_c: np.ndarray


@dataclass(frozen=True)
class RunResult:
    records: list[IterationRecord]
    f0: float
    stopping: StoppingResult
    aborted: bool  # an uplink phase hit the slot cap
    alpha: float
    normalizer: float
    beta: float
    weights: Optional[list[np.ndarray]] = None  # per-iteration trajectory
    events: Optional[list] = None  # per-slot channel events when recorded

    def objective_sequence(self) -> np.ndarray:
        g = np.empty(len(self.records) + 1)
        g[0] = (1.0 - self.beta) * self.f0
        g[1:] = [r.objective for r in self.records]
        return g

    def loss_sequence(self) -> np.ndarray:
        f = np.empty(len(self.records) + 1)
        f[0] = self.f0
        f[1:] = [r.loss for r in self.records]
        return f


def gd_step(w: np.ndarray, gradients: list[GradientVector], alpha: float) -> np.ndarray:
    """w - alpha * mean(received gradients); an empty set leaves w unchanged."""
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    if not gradients:
        return w.copy()
    its = {g.iteration for g in gradients}
    if len(its) != 1:
        raise ConfigurationError(f"gradients from mixed iterations: {sorted(its)}")
    acc = np.zeros_like(w)
    for g in gradients:
        if g.values.shape != w.shape:
            raise ConfigurationError(
                f"gradient dimension {g.values.shape} does not match parameters {w.shape}"
            )
        acc += g.values
    return w - alpha * (acc / len(gradients))


def _resolve_alpha(config: SimConfig, shards: list[WorkerShard]) -> float:
    return config.alpha if config.alpha is not None else default_step_size(shards)


def _build_network(config: SimConfig, seed: int, record_events: bool) -> AlohaNetwork:
    return AlohaNetwork(
        num_workers=config.workers,
        background_prob=config.background_prob,
        backoff_base=config.backoff_base,
        seed=seed,
        record_events=record_events,
    )


def _finalize(
    config: SimConfig,
    f0: float,
    records: list[IterationRecord],
    trajectory: list[np.ndarray],
    w0: np.ndarray,
    aborted: bool,
    alpha: float,
    keep_weights: bool,
    events,
) -> RunResult:
    z = config.normalizer_value()
    beta = config.beta
    g = combined_objective(
        [f0] + [r.loss for r in records], [r.cum_cost / z for r in records], beta
    )
    k_star = noncausal_stop_index(g)
    k_star_c = causal_stop_index(g) if len(g) >= 2 else 0
    losses = [f0] + [r.loss for r in records]

    def w_at(k: int) -> np.ndarray:
        return w0 if k == 0 else trajectory[k - 1]

    stopping = StoppingResult(
        k_star=k_star,
        k_star_c=k_star_c,
        g_at_k_star=float(g[k_star]),
        g_at_k_star_c=float(g[k_star_c]),
        f_at_k_star=losses[k_star],
        f_at_k_star_c=losses[k_star_c],
        w_at_k_star=w_at(k_star),
        w_at_k_star_c=w_at(k_star_c),
    )
    return RunResult(
        records=records,
        f0=f0,
        stopping=stopping,
        aborted=aborted,
        alpha=alpha,
        normalizer=z,
        beta=beta,
        weights=trajectory if keep_weights else None,
        events=events,
    )


def _run(
    config: SimConfig,
    shards: list[WorkerShard],
    seed: int,
    net: Optional[AlohaNetwork],
    record_weights: bool,
    record_events: bool,
) -> RunResult:
    config.validate()
    if len(shards) != config.workers:
        raise ConfigurationError(
            f"config expects {config.workers} workers, got {len(shards)} shards"
        )
    minibatch = config.mode == MODE_MINIBATCH
    window = config.resolved_window() if minibatch else None
    if net is None:
        net = _build_network(config, seed, record_events)
    alpha = _resolve_alpha(config, shards)
    z = config.normalizer_value()
    beta = config.beta
    causal = config.stop_rule == STOP_CAUSAL

    d = shards[0].dim
    w0 = np.zeros(d)
    w = w0
    f0 = global_loss(w, shards)
    records: list[IterationRecord] = []
    trajectory: list[np.ndarray] = []
    cum = 0.0
    g_prev = None
    aborted = False

    for k in range(1, config.max_iters + 1):
        gradients = [local_gradient(w, s, iteration=k) for s in shards]
        keys = [net.enqueue_gradient(s.worker_id, k) for s in shards]
        if minibatch:
            report = net.run_window(window)
            uplink_slots = window
            got = set(report.delivered) & set(keys)
        else:
            report = net.run_until_all_delivered(keys, config.max_slots_per_iteration)
            uplink_slots = report.slots_elapsed
            got = set(report.delivery_slots)
            aborted = report.aborted
        received = [g for g in gradients if (g.iteration, g.worker_id) in got]
        w = gd_step(w, received, alpha)
        f = global_loss(w, shards)
        cost = LatencyBreakdown(
            broadcast=config.broadcast_seconds,
            compute=config.compute_seconds,
            uplink=uplink_slots * config.slot_seconds,
            update=config.update_seconds,
        )
        cum += cost.total
        g_k = beta * (cum / z) + (1.0 - beta) * f
        if received:
            mean_grad = np.mean([g.values for g in received], axis=0)
            grad_norm = float(np.linalg.norm(mean_grad))
        else:
            grad_norm = 0.0
        records.append(
            IterationRecord(
                k=k,
                loss=f,
                cost=cost,
                cum_cost=cum,
                objective=g_k,
                grads_received=len(received),
                mean_queue_len=report.mean_queue_len,
                grad_norm=grad_norm,
            )
        )
        trajectory.append(w)
        if aborted:
            break
        if causal and g_prev is not None and causal_should_stop(g_prev, g_k):
            break
        g_prev = g_k

    return _finalize(
        config, f0, records, trajectory, w0, aborted, alpha, record_weights, net.events
    )


def run_batch(
    config: SimConfig,
    shards: list[WorkerShard],
    seed: int = 0,
    net: Optional[AlohaNetwork] = None,
    record_weights: bool = False,
    record_events: bool = False,
) -> RunResult:
    if config.mode != MODE_BATCH:
        config = config.replace(mode=MODE_BATCH)
    return _run(config, shards, seed, net, record_weights, record_events)


def run_minibatch(
    config: SimConfig,
    shards: list[WorkerShard],
    seed: int = 0,
    net: Optional[AlohaNetwork] = None,
    record_weights: bool = False,
    record_events: bool = False,
) -> RunResult:
    if config.mode != MODE_MINIBATCH:
        config = config.replace(mode=MODE_MINIBATCH)
    return _run(config, shards, seed, net, record_weights, record_events)


def run_simulation(
    config: SimConfig,
    shards: list[WorkerShard],
    seed: int = 0,
    net: Optional[AlohaNetwork] = None,
    record_weights: bool = False,
    record_events: bool = False,
) -> RunResult:
    """Dispatch on config.mode."""
    return _run(config, shards, seed, net, record_weights, record_events)


def check_prop_bounds(result: RunResult, beta: Optional[float] = None):
    """Re-evaluate the causal-vs-optimal comparison on a finished run,
    optionally at a different tradeoff weight."""
    beta = result.beta if beta is None else beta
    return compare_stops(
        result.loss_sequence(),
        [r.cum_cost / result.normalizer for r in result.records],
        beta,
    )
