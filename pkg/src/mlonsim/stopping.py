"""Stopping rules over recorded (loss, cost) traces.

Index convention: a trace of K iterations yields an objective sequence
G(0..K), where G(0) = (1 - beta) * f(w_0) covers "stop before iterating".
The causal rule only ever sees G(1) onward, so it never returns 0; the
exhaustive search does consider 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def combined_objective(f_values, normalized_cum_costs, beta: float) -> np.ndarray:
    """G(0..K) from f(w_0..w_K) and normalized cumulative costs (k=1..K)."""
    f_values = np.asarray(f_values, dtype=float)
    costs = np.asarray(normalized_cum_costs, dtype=float)
    if len(f_values) != len(costs) + 1:
        raise ConfigurationError("need one more loss value than cumulative costs")
    g = (1.0 - beta) * f_values
    g[1:] += beta * costs
    return g


def noncausal_stop_index(g: np.ndarray) -> int:
    """Exhaustive search: smallest minimizer of G over {0, ..., K}."""
    if len(g) == 0:
        raise ConfigurationError("empty objective sequence")
    return int(np.argmin(g))


def causal_should_stop(g_prev: float, g_next: float) -> bool:
    """Online decision after observing G(k+1): stop iff it did not improve."""
    return g_next >= g_prev


def causal_stop_index(g: np.ndarray) -> int:
    """First k >= 1 with G(k+1) >= G(k), else the horizon K."""
    if len(g) < 2:
        raise ConfigurationError("need at least G(0..1)")
    for k in range(1, len(g) - 1):
        if causal_should_stop(g[k], g[k + 1]):
            return k
    return len(g) - 1


def threshold_stop_index(grad_norms, eps: float) -> int:
    """First iteration whose average-gradient norm reaches eps (inclusive
    comparison, so eps taken from an iteration's own norm selects it);
    falls back to the horizon when the threshold is never reached."""
    norms = np.asarray(grad_norms, dtype=float)
    hits = np.nonzero(norms <= eps)[0]
    return int(hits[0]) + 1 if len(hits) else len(norms)


def is_discretely_convex(seq, rel_tol: float = 1e-12) -> bool:
    """2 s(k) <= s(k-1) + s(k+1) for every interior k, up to relative slack."""
    s = np.asarray(seq, dtype=float)
    if len(s) < 3:
        return True
    mid, lo, hi = s[1:-1], s[:-2], s[2:]
    scale = np.maximum.reduce([np.abs(lo), np.abs(mid), np.abs(hi), np.ones_like(mid)])
    return bool(np.all(2.0 * mid <= lo + hi + rel_tol * scale))


@dataclass(frozen=True)
class StoppingComparison:
    """Non-causal optimum vs causal stop on the same trace."""

    k_star: int
    k_star_c: int
    bounds_hold: bool  # k* <= k_c <= k*+1 and f(k_c) >= f(k*)
    g_gap: float  # G(k_c) - G(k*), nonnegative when k* is the minimizer
    convex_g: bool  # sandwich only guaranteed when this holds


def compare_stops(f_values, normalized_cum_costs, beta: float) -> StoppingComparison:
    g = combined_objective(f_values, normalized_cum_costs, beta)
    k_star = noncausal_stop_index(g)
    k_star_c = causal_stop_index(g)
    f_values = np.asarray(f_values, dtype=float)
    sandwich = k_star <= k_star_c <= k_star + 1
    f_ok = f_values[k_star_c] >= f_values[k_star]
    return StoppingComparison(
        k_star=k_star,
        k_star_c=k_star_c,
        bounds_hold=bool(sandwich and f_ok),
        g_gap=float(g[k_star_c] - g[k_star]),
        convex_g=is_discretely_convex(g),
    )
