"""CSV serialization of runs: per-run traces, per-run stopping summaries,
per-iteration aggregates, and mode comparisons.

All files are RFC-4180 style, UTF-8, LF line endings, '.' decimal separator.
Floats are written with repr (shortest round-trip), so identical runs yield
byte-identical files.
"""

from __future__ import annotations

import csv
import os
import tempfile
from typing import Iterable

import numpy as np

from .config import MODE_BATCH, SimConfig
from .solver import RunResult

TRACE_HEADER = [
    "run_id", "k", "f", "l1", "l2", "l3", "l4", "c_k",
    "cum_cost", "G", "grads_received", "mean_queue_len",
]

SUMMARY_HEADER = [
    "run_id", "k_star", "k_star_c", "G_at_kstar", "G_at_kstarc",
    "f_at_kstar", "f_at_kstarc", "prop2_holds", "convex_G",
]

AGG_METRICS = ["f", "cum_cost", "G", "grads_received", "mean_queue_len"]
AGG_STATS = ["mean", "median", "q1", "q3"]

EVENTS_HEADER = ["slot", "worker", "event", "queue_len"]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _atomic_write_rows(path: str, header: list[str], rows: Iterable[list]) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(x) for x in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_rows(run_id: int, result: RunResult) -> list[list]:
    rows = []
    for r in result.records:
        rows.append([
            run_id, r.k, r.loss, r.cost.broadcast, r.cost.compute,
            r.cost.uplink, r.cost.update, r.cost.total,
            r.cum_cost, r.objective, r.grads_received, r.mean_queue_len,
        ])
    return rows


def write_trace_csv(path: str, run_id: int, result: RunResult) -> None:
    _atomic_write_rows(path, TRACE_HEADER, trace_rows(run_id, result))


def read_trace_csv(path: str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
        rows = []
        for raw in reader:
            row = {key: float(raw[key]) for key in TRACE_HEADER}
            row["run_id"] = int(raw["run_id"])
            row["k"] = int(raw["k"])
            row["grads_received"] = int(raw["grads_received"])
            rows.append(row)
    return rows


def summary_row(run_id: int, result: RunResult, comparison) -> list:
    s = result.stopping
    prop2 = bool(comparison.bounds_hold and comparison.g_gap >= 0.0)
    return [
        run_id, s.k_star, s.k_star_c, s.g_at_k_star, s.g_at_k_star_c,
        s.f_at_k_star, s.f_at_k_star_c, prop2, comparison.convex_g,
    ]


def write_summary_csv(path: str, rows: list[list]) -> None:
    _atomic_write_rows(path, SUMMARY_HEADER, rows)


def _agg_header() -> list[str]:
    cols = ["M", "p_b", "mode", "T_s", "k", "n_runs"]
    for metric in AGG_METRICS:
        cols.extend(f"{metric}_{stat}" for stat in AGG_STATS)
    return cols


AGGREGATE_HEADER = _agg_header()


def _stat_block(values: list[float]) -> list[float]:
    arr = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    return [float(np.mean(arr)), float(med), float(q1), float(q3)]


def aggregate_rows(config: SimConfig, per_run_rows: list[list[dict]]) -> list[list]:
    """Per-k stats over runs; runs shorter than k simply drop out (n_runs
    records how many contributed)."""
    window = config.resolved_window() if config.mode != MODE_BATCH else 0
    max_k = max((len(rows) for rows in per_run_rows), default=0)
    out = []
    for k in range(1, max_k + 1):
        at_k = [rows[k - 1] for rows in per_run_rows if len(rows) >= k]
        row = [config.workers, config.background_prob, config.mode, window, k, len(at_k)]
        for metric in AGG_METRICS:
            row.extend(_stat_block([r[metric] for r in at_k]))
        out.append(row)
    return out


def result_metric_rows(result: RunResult) -> list[dict]:
    return [
        {
            "k": r.k,
            "f": r.loss,
            "cum_cost": r.cum_cost,
            "G": r.objective,
            "grads_received": r.grads_received,
            "mean_queue_len": r.mean_queue_len,
        }
        for r in result.records
    ]


def write_aggregate_csv(path: str, config: SimConfig, results: list[RunResult]) -> None:
    per_run = [result_metric_rows(res) for res in results]
    _atomic_write_rows(path, AGGREGATE_HEADER, aggregate_rows(config, per_run))


def aggregate_from_trace_files(config: SimConfig, paths: list[str]) -> list[list]:
    """Recompute the aggregate offline from archived trace CSVs."""
    per_run = [read_trace_csv(p) for p in paths]
    return aggregate_rows(config, per_run)


def _compare_header() -> list[str]:
    cols = ["M", "p_b", "T_s", "k", "n_batch", "n_minibatch"]
    for mode in ("batch", "minibatch"):
        for metric in ("G", "cum_cost"):
            cols.extend(f"{metric}_{mode}_{stat}" for stat in AGG_STATS)
    return cols


COMPARE_HEADER = _compare_header()


def compare_rows(
    config_batch: SimConfig,
    config_mini: SimConfig,
    batch_results: list[RunResult],
    mini_results: list[RunResult],
) -> list[list]:
    batch = [result_metric_rows(r) for r in batch_results]
    mini = [result_metric_rows(r) for r in mini_results]
    max_k = max(
        max((len(r) for r in batch), default=0),
        max((len(r) for r in mini), default=0),
    )
    out = []
    for k in range(1, max_k + 1):
        b_at = [rows[k - 1] for rows in batch if len(rows) >= k]
        m_at = [rows[k - 1] for rows in mini if len(rows) >= k]
        row = [
            config_batch.workers,
            config_batch.background_prob,
            config_mini.resolved_window(),
            k,
            len(b_at),
            len(m_at),
        ]
        for at in (b_at, m_at):
            for metric in ("G", "cum_cost"):
                if at:
                    row.extend(_stat_block([r[metric] for r in at]))
                else:
                    row.extend([float("nan")] * len(AGG_STATS))
        out.append(row)
    return out


def write_compare_csv(
    path: str,
    config_batch: SimConfig,
    config_mini: SimConfig,
    batch_results: list[RunResult],
    mini_results: list[RunResult],
) -> None:
    rows = compare_rows(config_batch, config_mini, batch_results, mini_results)
    _atomic_write_rows(path, COMPARE_HEADER, rows)


def write_events_csv(path: str, events) -> None:
    ordered = sorted(events, key=lambda e: e.slot)  # stable: intra-slot order kept
    rows = [[e.slot, e.worker, e.kind, e.queue_len] for e in ordered]
    _atomic_write_rows(path, EVENTS_HEADER, rows)
