"""Experiment configuration: all knobs for a simulation run or sweep.

Defaults for the physical constants (downlink rate, payload size, backoff
base, compute/update latencies) are assumptions, not measurements; every one
of them is sweepable from the CLI.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import ConfigurationError

MODE_BATCH = "batch"
MODE_MINIBATCH = "minibatch"

STOP_CAUSAL = "causal"
STOP_NONE = "none"

#: abort threshold for a single batch iteration's uplink phase
MAX_SLOTS_PER_ITERATION = 10_000_000

#: contention window stops doubling after this many collisions
WINDOW_DOUBLING_CAP = 16


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic two-blob dataset parameters."""

    dim: int = 2
    count: int = 100
    margin: float = 2.0


@dataclass(frozen=True)
class MnistSpec:
    """Location of the IDX files and the target sample count after the
    binary 0/1 extraction (None keeps every 0/1 sample)."""

    directory: str
    count: Optional[int] = 12600


DatasetSpec = Union[SynthSpec, MnistSpec]


@dataclass(frozen=True)
class SimConfig:
    workers: int = 5
    background_prob: float = 0.02
    mode: str = MODE_BATCH
    window_slots: Optional[int] = None  # minibatch only; default 4 * workers
    beta: float = 0.5
    alpha: Optional[float] = None  # None -> 1/L from the dataset
    max_iters: int = 30
    seed: int = 0
    runs: int = 1
    slot_seconds: float = 1e-6
    payload_bits: int = 25088
    downlink_bps: float = 1e6
    backoff_base: int = 2
    compute_seconds: float = 50e-6
    update_seconds: float = 10e-6
    dataset: DatasetSpec = field(default_factory=SynthSpec)
    stop_rule: str = STOP_CAUSAL
    normalizer: Union[str, float] = "uncontended"
    max_slots_per_iteration: int = MAX_SLOTS_PER_ITERATION

    def validate(self) -> None:
        problems = []
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if not 0.0 <= self.background_prob <= 1.0:
            problems.append("background_prob must be in [0, 1]")
        if self.mode not in (MODE_BATCH, MODE_MINIBATCH):
            problems.append(f"mode must be '{MODE_BATCH}' or '{MODE_MINIBATCH}'")
        if self.mode == MODE_MINIBATCH and self.resolved_window() < 1:
            problems.append("window_slots must be >= 1 in minibatch mode")
        if not 0.0 <= self.beta <= 1.0:
            problems.append("beta must be in [0, 1]")
        if self.alpha is not None and self.alpha <= 0:
            problems.append("alpha must be positive")
        if self.max_iters < 1:
            problems.append("max_iters must be >= 1")
        if self.runs < 1:
            problems.append("runs must be >= 1")
        if self.slot_seconds <= 0:
            problems.append("slot_seconds must be positive")
        if self.payload_bits < 1:
            problems.append("payload_bits must be >= 1")
        if self.downlink_bps <= 0:
            problems.append("downlink_bps must be positive")
        if self.backoff_base < 1:
            problems.append("backoff_base must be >= 1")
        if self.compute_seconds < 0 or self.update_seconds < 0:
            problems.append("latency constants must be nonnegative")
        if self.stop_rule not in (STOP_CAUSAL, STOP_NONE):
            problems.append(f"stop_rule must be '{STOP_CAUSAL}' or '{STOP_NONE}'")
        if isinstance(self.normalizer, str) and self.normalizer not in ("uncontended", "none"):
            problems.append("normalizer must be 'uncontended', 'none', or a positive number")
        if isinstance(self.normalizer, (int, float)) and not isinstance(self.normalizer, bool):
            if self.normalizer <= 0:
                problems.append("numeric normalizer must be positive")
        if self.max_slots_per_iteration < 1:
            problems.append("max_slots_per_iteration must be >= 1")
        if problems:
            raise ConfigurationError("; ".join(problems))

    def resolved_window(self) -> int:
        """Uplink collection window in slots (minibatch mode)."""
        return self.window_slots if self.window_slots is not None else 4 * self.workers

    @property
    def broadcast_seconds(self) -> float:
        """Downlink latency per iteration: contention-free broadcast."""
        return self.payload_bits / self.downlink_bps

    def iteration_floor_seconds(self) -> float:
        """Cost of one iteration if the uplink never contends: each of the
        M gradients takes one slot on a one-packet-per-slot channel."""
        return (
            self.broadcast_seconds
            + self.compute_seconds
            + self.workers * self.slot_seconds
            + self.update_seconds
        )

    def normalizer_value(self) -> float:
        """Scale that maps cumulative seconds into loss-comparable units."""
        if self.normalizer == "uncontended":
            return self.max_iters * self.iteration_floor_seconds()
        if self.normalizer == "none":
            return 1.0
        return float(self.normalizer)

    def replace(self, **kwargs) -> "SimConfig":
        return dataclasses.replace(self, **kwargs)
