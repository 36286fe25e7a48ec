"""Slot-synchronous simulator of the contention-based uplink.

Channel model: capacity of one packet per slot; transmissions start only at
slot boundaries. A lone transmitter in a slot succeeds and its packet is
dequeued; two or more transmitters collide. On every collision each collider
increments its collision count c, its contention window becomes
base * 2^min(c, cap), and it redraws a delay uniformly from [1, window].
A packet that reaches the head of a queue (fresh enqueue into an empty queue,
or promotion after a delivery) transmits at the next slot boundary.

Background traffic arrives at each worker as an independent Bernoulli(p_b)
process per slot, realized through geometric inter-arrival gaps drawn from a
dedicated per-worker stream; this keeps the law identical while letting the
run loops jump straight to the next interesting slot. Queues are unbounded
and strictly FIFO. Because background packets are indistinguishable, each
queue is stored as run-length counts between queued gradient packets;
arrival slots are retained so delivery order and the optional event trace
stay exact.

Determinism: a fixed (config, seed) pair yields a bit-identical event
sequence. Each worker owns two RNG streams (arrivals, backoff draws), so the
draw order is independent of how the loop batches its work. Long batch
drains are offloaded to a JIT kernel with identical semantics when numba is
importable (see _fastpath); `fastpath=False` forces the reference loop.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .config import WINDOW_DOUBLING_CAP
from .errors import ConfigurationError

INFINITE_SLOT = 1 << 62

_ARRIVAL_CHUNK = 4096
_UNIFORM_CHUNK = 4096
# on a kernel refill request, pre-draw arrivals this many slots past the
# requested one (drawing ahead never changes the consumed values)
_ARRIVAL_LOOKAHEAD = 1 << 20

KIND_BACKGROUND = "background"
KIND_GRADIENT = "gradient"

EVENT_ENQUEUE_BG = "enqueue_bg"
EVENT_ENQUEUE_GRAD = "enqueue_grad"
EVENT_TX = "tx"
EVENT_COLLISION = "collision"
EVENT_DELIVERY = "delivery"

_FASTPATH_UNSET = object()
_fastpath_module = _FASTPATH_UNSET


def _fastpath():
    """Import the JIT kernel lazily; None when numba is unavailable."""
    global _fastpath_module
    if _fastpath_module is _FASTPATH_UNSET:
        try:
            from . import _fastpath as module

            _fastpath_module = module
        except Exception:
            _fastpath_module = None
    return _fastpath_module


@dataclass
class SlotClock:
    current_slot: int = 0
    slot_duration_seconds: float = 1e-6


@dataclass(frozen=True)
class QueuedPacket:
    kind: str
    origin_worker: int
    enqueue_slot: int
    gradient_ref: Optional[tuple[int, int]] = None  # (iteration, worker_id)

    def __post_init__(self):
        if (self.gradient_ref is not None) != (self.kind == KIND_GRADIENT):
            raise ConfigurationError("gradient_ref present iff kind == gradient")


class SlotEvent(NamedTuple):
    slot: int
    worker: int
    kind: str
    queue_len: int


class SlotOutcome(NamedTuple):
    slot: int
    delivered: Optional[QueuedPacket]
    colliders: tuple[int, ...]
    arrivals: tuple[int, ...]
    queue_lengths: tuple[int, ...]


class DeliveryReport(NamedTuple):
    slots_elapsed: int
    delivery_slots: dict
    aborted: bool
    queue_lengths: tuple[int, ...]
    mean_queue_len: float


class WindowReport(NamedTuple):
    delivered: dict
    queue_lengths: tuple[int, ...]
    mean_queue_len: float


class AlohaNetwork:
    """Shared uplink for `num_workers` FIFO queues with background traffic."""

    def __init__(
        self,
        num_workers: int,
        background_prob: float,
        backoff_base: int = 2,
        seed: int = 0,
        window_doubling_cap: int = WINDOW_DOUBLING_CAP,
        record_events: bool = False,
        fastpath: bool = True,
    ):
        if num_workers < 1:
            raise ConfigurationError("num_workers must be >= 1")
        if not 0.0 <= background_prob <= 1.0:
            raise ConfigurationError("background_prob must be in [0, 1]")
        if backoff_base < 1:
            raise ConfigurationError("backoff_base must be >= 1")
        m = num_workers
        self.num_workers = m
        self.clock = SlotClock()
        self._p_b = background_prob
        self._base = backoff_base
        self._cap = window_doubling_cap
        self._use_fastpath = fastpath
        self.events: Optional[list[SlotEvent]] = [] if record_events else None

        root = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0xA10A])
        children = root.spawn(2 * m)
        self._arr_rng = [np.random.default_rng(children[2 * j]) for j in range(m)]
        self._bo_rng = [np.random.default_rng(children[2 * j + 1]) for j in range(m)]

        self._sched: list[Optional[int]] = [None] * m
        self._window = [backoff_base] * m
        self._coll = [0] * m
        # queue encoding: deque of [key, bg_ahead, enqueue_slot] per gradient,
        # plus a count of background packets behind the last gradient
        self._grad_entries: list[deque] = [deque() for _ in range(m)]
        self._bg_tail = [0] * m
        self._qlen = [0] * m
        self._bg_served = [0] * m

        # arrival slots per worker: capacity-managed int64 buffers
        self._arr_slots = [np.empty(_ARRIVAL_CHUNK, dtype=np.int64) for _ in range(m)]
        self._arr_len = [0] * m  # valid entries
        self._arr_used = [0] * m  # folded into the queue counts
        self._arr_last = [0] * m  # last drawn absolute slot
        self._bo_chunk = [np.empty(0)] * m
        self._bo_idx = [0] * m

    # -- RNG streams ----------------------------------------------------------

    def _extend_arrivals(self, j: int) -> None:
        gaps = self._arr_rng[j].geometric(self._p_b, size=_ARRIVAL_CHUNK)
        new = self._arr_last[j] + np.cumsum(gaps)
        n = self._arr_len[j]
        buf = self._arr_slots[j]
        if n + _ARRIVAL_CHUNK > len(buf):
            grown = np.empty(max(2 * len(buf), n + _ARRIVAL_CHUNK), dtype=np.int64)
            grown[:n] = buf[:n]
            self._arr_slots[j] = buf = grown
        buf[n : n + _ARRIVAL_CHUNK] = new
        self._arr_len[j] = n + _ARRIVAL_CHUNK
        self._arr_last[j] = int(new[-1])

    def _peek_arrival(self, j: int) -> int:
        """Next background arrival slot not yet in the queue (or infinity)."""
        if self._p_b == 0.0:
            return INFINITE_SLOT
        while self._arr_used[j] >= self._arr_len[j]:
            self._extend_arrivals(j)
        return int(self._arr_slots[j][self._arr_used[j]])

    def _next_uniform(self, j: int) -> float:
        i = self._bo_idx[j]
        if i >= len(self._bo_chunk[j]):
            self._bo_chunk[j] = self._bo_rng[j].random(_UNIFORM_CHUNK)
            i = 0
        self._bo_idx[j] = i + 1
        return self._bo_chunk[j][i]

    # -- queue maintenance ------------------------------------------------------

    def _materialize(self, j: int, t: int) -> int:
        """Fold background arrivals up to and including slot t into the
        queue counts; returns how many arrived. Wakes an empty queue by
        scheduling its new head for the slot after its arrival."""
        if self._p_b == 0.0:
            return 0
        while self._arr_last[j] <= t:
            self._extend_arrivals(j)
        arr = self._arr_slots[j]
        used = self._arr_used[j]
        hi = int(np.searchsorted(arr[: self._arr_len[j]], t, side="right"))
        count = hi - used
        if count <= 0:
            return 0
        if self._qlen[j] == 0:
            self._sched[j] = int(arr[used]) + 1
        if self.events is not None:
            base_len = self._qlen[j]
            for i in range(used, hi):
                base_len += 1
                self.events.append(SlotEvent(int(arr[i]), j + 1, EVENT_ENQUEUE_BG, base_len))
        self._bg_tail[j] += count
        self._qlen[j] += count
        self._arr_used[j] = hi
        return count

    def enqueue_gradient(self, worker_id: int, iteration: int) -> tuple[int, int]:
        """Append a gradient packet behind the worker's backlog; returns its
        key (iteration, worker_id). FIFO order is strict."""
        if not 1 <= worker_id <= self.num_workers:
            raise ConfigurationError(f"unknown worker id {worker_id}")
        j = worker_id - 1
        t0 = self.clock.current_slot
        self._materialize(j, t0)
        key = (iteration, worker_id)
        self._grad_entries[j].append([key, self._bg_tail[j], t0])
        self._bg_tail[j] = 0
        if self._qlen[j] == 0:
            self._sched[j] = t0 + 1
        self._qlen[j] += 1
        if self.events is not None:
            self.events.append(SlotEvent(t0, worker_id, EVENT_ENQUEUE_GRAD, self._qlen[j]))
        return key

    def _deliver(self, j: int, t: int):
        """Dequeue worker j's head packet; returns (gradient_key | None,
        enqueue_slot). Resets the backoff state and schedules the next head."""
        self._materialize(j, t)
        entries = self._grad_entries[j]
        if entries and entries[0][1] == 0:
            key, _, enq = entries.popleft()
        else:
            if entries:
                entries[0][1] -= 1
            else:
                self._bg_tail[j] -= 1
            key = None
            enq = int(self._arr_slots[j][self._bg_served[j]])
            self._bg_served[j] += 1
        self._qlen[j] -= 1
        self._coll[j] = 0
        self._window[j] = self._base
        self._sched[j] = t + 1 if self._qlen[j] > 0 else None
        if self.events is not None:
            self.events.append(SlotEvent(t, j + 1, EVENT_DELIVERY, self._qlen[j]))
        return key, enq

    # -- slot processing ----------------------------------------------------------

    def _process_slot(self, t: int, eager: bool):
        """Resolve slot t: arrivals, then transmissions. Returns
        (gradient_key | None, delivered worker | None, enqueue_slot, colliders).

        Event recording forces eager arrival folding so the queue lengths
        attached to tx/collision events match the per-slot reference."""
        if eager or self.events is not None:
            for j in range(self.num_workers):
                self._materialize(j, t)
        else:
            for j in range(self.num_workers):
                if self._sched[j] is None:
                    self._materialize(j, t)
        transmitters = [j for j in range(self.num_workers) if self._sched[j] == t]
        if self.events is not None:
            for j in transmitters:
                self.events.append(SlotEvent(t, j + 1, EVENT_TX, self._qlen[j]))
        if len(transmitters) == 1:
            j = transmitters[0]
            key, enq = self._deliver(j, t)
            return key, j, enq, ()
        if len(transmitters) > 1:
            for j in transmitters:
                self._coll[j] += 1
                self._window[j] = self._base << min(self._coll[j], self._cap)
                delay = 1 + int(self._next_uniform(j) * self._window[j])
                self._sched[j] = t + delay
                if self.events is not None:
                    self.events.append(SlotEvent(t, j + 1, EVENT_COLLISION, self._qlen[j]))
            return None, None, 0, tuple(j + 1 for j in transmitters)
        return None, None, 0, ()

    def _next_event_slot(self) -> int:
        """Earliest slot at which anything can happen: a scheduled
        transmission, or the wake-up of an idle queue by its next arrival."""
        nxt = INFINITE_SLOT
        for j in range(self.num_workers):
            s = self._sched[j]
            if s is not None:
                if s < nxt:
                    nxt = s
            else:
                a = self._peek_arrival(j)
                if a != INFINITE_SLOT and a + 1 < nxt:
                    nxt = a + 1
        return nxt

    # -- public advancement ----------------------------------------------------------

    def step_slot(self) -> SlotOutcome:
        """Advance exactly one slot and report its outcome."""
        t = self.clock.current_slot + 1
        used_before = list(self._arr_used)
        key, j, enq, colliders = self._process_slot(t, eager=True)
        self.clock.current_slot = t
        delivered = None
        if j is not None:
            if key is None:
                delivered = QueuedPacket(KIND_BACKGROUND, j + 1, enq)
            else:
                delivered = QueuedPacket(KIND_GRADIENT, j + 1, enq, gradient_ref=key)
        arrivals = tuple(
            self._arr_used[i] - used_before[i] for i in range(self.num_workers)
        )
        return SlotOutcome(t, delivered, colliders, arrivals, tuple(self._qlen))

    def run_until_all_delivered(self, keys, max_slots: int) -> DeliveryReport:
        """Advance until every key in `keys` has been delivered, or abort
        after max_slots (the report is then flagged)."""
        key_list = list(keys)
        fast = _fastpath() if self._use_fastpath and self.events is None else None
        if fast is not None and self._fast_eligible(key_list):
            return self._fast_drain(fast, key_list, max_slots)
        start = self.clock.current_slot
        end = start + max_slots
        pending = set(key_list)
        delivery_slots = {}
        while pending:
            t = self._next_event_slot()
            if t > end:
                break
            key, j, _, _ = self._process_slot(t, eager=False)
            self.clock.current_slot = t
            if key is not None and key in pending:
                pending.discard(key)
                delivery_slots[key] = t
        aborted = bool(pending)
        if aborted:
            self.clock.current_slot = end
        return self._delivery_report(start, delivery_slots, aborted)

    def _delivery_report(self, start, delivery_slots, aborted) -> DeliveryReport:
        for j in range(self.num_workers):
            self._materialize(j, self.clock.current_slot)
        qlens = tuple(self._qlen)
        return DeliveryReport(
            slots_elapsed=self.clock.current_slot - start,
            delivery_slots=delivery_slots,
            aborted=aborted,
            queue_lengths=qlens,
            mean_queue_len=sum(qlens) / self.num_workers,
        )

    def _fast_eligible(self, key_list) -> bool:
        """The kernel handles at most one queued gradient per worker, and
        only when the pending set is exactly the queued set."""
        queued = set()
        for entries in self._grad_entries:
            if len(entries) > 1:
                return False
            if entries:
                queued.add(entries[0][0])
        return queued == set(key_list) and len(key_list) > 0

    def _fast_drain(self, fast, key_list, max_slots: int) -> DeliveryReport:
        m = self.num_workers
        start = self.clock.current_slot
        end = start + max_slots
        pb_zero = self._p_b == 0.0

        key_of = {}
        grad_pos = np.full(m, -1, dtype=np.int64)
        for j in range(m):
            entries = self._grad_entries[j]
            if entries:
                key_of[j] = entries[0][0]
                grad_pos[j] = entries[0][1]
        sched = np.array(
            [-1 if s is None else s for s in self._sched], dtype=np.int64
        )
        coll = np.array(self._coll, dtype=np.int64)
        qlen = np.array(self._qlen, dtype=np.int64)
        bg_served = np.array(self._bg_served, dtype=np.int64)
        delivered_slot = np.full(m, -1, dtype=np.int64)
        cur = np.array(self._arr_used, dtype=np.int64)
        uidx = np.array(self._bo_idx, dtype=np.int64)
        state = np.array([start, len(key_list)], dtype=np.int64)

        if not pb_zero:
            for j in range(m):
                if self._arr_len[j] == 0:
                    self._extend_arrivals(j)
        for j in range(m):
            if self._bo_idx[j] >= len(self._bo_chunk[j]):
                self._bo_chunk[j] = self._bo_rng[j].random(_UNIFORM_CHUNK)
                self._bo_idx[j] = 0
                uidx[j] = 0

        while True:
            arr_list = fast.make_arrival_list(self._arr_slots)
            arr_last = np.array(self._arr_last, dtype=np.int64)
            alen = np.array(self._arr_len, dtype=np.int64)
            uni = np.stack(self._bo_chunk)
            code, j, t = fast.drain_until(
                end, self._base, self._cap, pb_zero,
                sched, coll, qlen, grad_pos, bg_served, delivered_slot,
                arr_list, arr_last, alen, cur, uni, uidx, _UNIFORM_CHUNK, state,
            )
            if code == fast.NEED_ARRIVALS:
                target = min(end, t + _ARRIVAL_LOOKAHEAD)
                while self._arr_last[j] <= target:
                    self._extend_arrivals(j)
                continue
            if code == fast.NEED_UNIFORMS:
                self._bo_chunk[j] = self._bo_rng[j].random(_UNIFORM_CHUNK)
                uidx[j] = 0
                continue
            break

        # fold the kernel's flat state back into the queue structures
        for j in range(m):
            s = int(sched[j])
            self._sched[j] = None if s == -1 else s
            self._coll[j] = int(coll[j])
            self._window[j] = self._base << min(int(coll[j]), self._cap)
            self._qlen[j] = int(qlen[j])
            self._arr_used[j] = int(cur[j])
            self._bg_served[j] = int(bg_served[j])
            self._bo_idx[j] = int(uidx[j])
            entries = self._grad_entries[j]
            if entries:
                if int(delivered_slot[j]) >= 0:
                    entries.popleft()
                    self._bg_tail[j] = int(qlen[j])
                else:
                    entries[0][1] = int(grad_pos[j])
                    self._bg_tail[j] = int(qlen[j]) - int(grad_pos[j]) - 1
            else:
                self._bg_tail[j] = int(qlen[j])

        aborted = code == fast.REACHED_END
        self.clock.current_slot = end if aborted else int(state[0])
        delivery_slots = {
            key_of[j]: int(delivered_slot[j]) for j in key_of if delivered_slot[j] >= 0
        }
        return self._delivery_report(start, delivery_slots, aborted)

    def run_window(self, window_slots: int) -> WindowReport:
        """Advance exactly window_slots slots; report every gradient packet
        delivered inside the window (stale ones included, the master filters)."""
        if window_slots < 1:
            raise ConfigurationError("window_slots must be >= 1")
        start = self.clock.current_slot
        end = start + window_slots
        delivered = {}
        while True:
            t = self._next_event_slot()
            if t > end:
                break
            key, j, _, _ = self._process_slot(t, eager=False)
            self.clock.current_slot = t
            if key is not None:
                delivered[key] = t
        self.clock.current_slot = end
        for j in range(self.num_workers):
            self._materialize(j, end)
        qlens = tuple(self._qlen)
        return WindowReport(
            delivered=delivered,
            queue_lengths=qlens,
            mean_queue_len=sum(qlens) / self.num_workers,
        )

    # -- inspection ----------------------------------------------------------------

    @property
    def current_slot(self) -> int:
        return self.clock.current_slot

    def queue_lengths(self) -> tuple[int, ...]:
        for j in range(self.num_workers):
            self._materialize(j, self.clock.current_slot)
        return tuple(self._qlen)

    def backoff_window(self, worker_id: int) -> int:
        return self._window[worker_id - 1]

    def collision_count(self, worker_id: int) -> int:
        return self._coll[worker_id - 1]

    def scheduled_slot(self, worker_id: int) -> Optional[int]:
        return self._sched[worker_id - 1]
