"""JIT-compiled drain loop for the batch uplink phase.

The generic event loop in aloha.py is the reference implementation; this
kernel replays exactly the same semantics (same per-worker draw consumption,
same slot arithmetic) over flat int64 state, which matters when saturated
queues push a single iteration into millions of slots. It is only engaged
when no event trace is requested and each worker holds at most one queued
gradient (the batch pattern); anything else falls back to the generic loop.

The kernel owns no RNG: arrival slots and backoff uniforms are consumed from
pre-drawn per-worker buffers, and the kernel returns a request code whenever
a buffer runs dry so the caller can extend it from the worker's stream. That
keeps the consumed value sequence identical to the pure-Python path.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numba.typed import List as NumbaList

DONE = 0
NEED_ARRIVALS = 1
NEED_UNIFORMS = 2
REACHED_END = 3

_INF = 1 << 62


@njit(cache=True)
def drain_until(
    end_slot,
    base,
    cap_exp,
    pb_zero,
    sched,
    coll,
    qlen,
    grad_pos,
    bg_served,
    delivered_slot,
    arr_list,
    arr_last,
    alen,
    cur,
    uni,
    uidx,
    ulen,
    state,
):
    """Advance slots until every pending gradient is delivered, the horizon
    end_slot is passed, or a buffer needs refilling.

    state[0] = current slot, state[1] = pending gradient count. Returns
    (code, worker, slot): worker/slot identify what a refill must cover.
    arr_last mirrors the last drawn arrival value per worker so the hot loop
    never touches the typed list except on wake-ups and deliveries.
    """
    m = sched.shape[0]
    while state[1] > 0:
        # next event: a scheduled transmission or an idle queue's wake-up
        nxt = _INF
        for j in range(m):
            s = sched[j]
            if s != -1:
                if s < nxt:
                    nxt = s
            elif not pb_zero:
                c = cur[j]
                if c >= alen[j]:
                    return NEED_ARRIVALS, j, state[0] + 1
                a = arr_list[j][c] + 1
                if a < nxt:
                    nxt = a
        if nxt > end_slot:
            return REACHED_END, -1, end_slot
        t = nxt
        # refills must happen before any state mutation for slot t
        for j in range(m):
            if not pb_zero and arr_last[j] <= t:
                return NEED_ARRIVALS, j, t
            if uidx[j] >= ulen:
                return NEED_UNIFORMS, j, t
        # arrivals wake idle queues (head transmits the slot after arrival)
        for j in range(m):
            if sched[j] == -1 and not pb_zero:
                a = arr_list[j]
                c = cur[j]
                if c < alen[j] and a[c] <= t:
                    first = a[c]
                    n = 0
                    while c < alen[j] and a[c] <= t:
                        c += 1
                        n += 1
                    cur[j] = c
                    qlen[j] += n
                    sched[j] = first + 1
        ntx = 0
        lone = -1
        for j in range(m):
            if sched[j] == t:
                ntx += 1
                lone = j
        if ntx == 1:
            j = lone
            if not pb_zero:
                a = arr_list[j]
                c = cur[j]
                n = 0
                while c < alen[j] and a[c] <= t:
                    c += 1
                    n += 1
                cur[j] = c
                qlen[j] += n
            g = grad_pos[j]
            if g == 0:
                grad_pos[j] = -1
                delivered_slot[j] = t
                state[1] -= 1
            else:
                if g > 0:
                    grad_pos[j] = g - 1
                bg_served[j] += 1
            qlen[j] -= 1
            coll[j] = 0
            sched[j] = t + 1 if qlen[j] > 0 else -1
        elif ntx > 1:
            for j in range(m):
                if sched[j] == t:
                    coll[j] += 1
                    cc = coll[j]
                    if cc > cap_exp:
                        cc = cap_exp
                    w = base << cc
                    u = uni[j, uidx[j]]
                    uidx[j] += 1
                    sched[j] = t + 1 + int(u * w)
        state[0] = t
    return DONE, -1, state[0]


def make_arrival_list(buffers) -> NumbaList:
    lst = NumbaList()
    for buf in buffers:
        lst.append(buf)
    return lst
