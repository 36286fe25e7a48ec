"""Command-line front end: single experiments and batch-vs-minibatch sweeps.

Precedence for every knob: built-in defaults < --config JSON file < explicit
command-line flags. Runs are seeded as seed + run_id, execute independently
(optionally in a process pool), and each writes its trace atomically, so
reruns with the same config and seed produce byte-identical files.

Exit codes: 0 success, 2 invalid configuration, 3 missing dataset files.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import multiprocessing
import os
import sys

from . import traces
from .config import MODE_BATCH, MODE_MINIBATCH, MnistSpec, SimConfig, SynthSpec
from .data import load_dataset
from .errors import ConfigurationError, DatasetNotFoundError
from .model import partition_dataset
from .solver import check_prop_bounds, run_simulation

_CONFIG_KEYS = {
    "workers": int,
    "pb": float,
    "mode": str,
    "ts": int,
    "beta": float,
    "alpha": float,
    "max_iters": int,
    "runs": int,
    "seed": int,
    "slot_us": float,
    "payload_bits": int,
    "rate": float,
    "backoff_base": int,
    "l2_us": float,
    "l4_us": float,
    "mnist_dir": str,
    "mnist_count": int,
    "synth": str,
    "stop": str,
    "normalizer": str,
    "out_dir": str,
    "jobs": int,
    "trace_slots": bool,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlonsim",
        description="Distributed gradient descent over a simulated slotted-ALOHA uplink.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file with any of the flag values")
        p.add_argument("--workers", type=int, help="number of worker nodes M")
        p.add_argument("--pb", type=float, help="per-slot background packet probability")
        p.add_argument("--mode", choices=[MODE_BATCH, MODE_MINIBATCH])
        p.add_argument("--ts", type=int, help="minibatch collection window in slots (default 4*M)")
        p.add_argument("--beta", type=float, help="cost/loss tradeoff weight in [0,1]")
        p.add_argument("--alpha", type=float, help="step size override (default 1/L)")
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--runs", type=int, help="number of independent seeded runs")
        p.add_argument("--seed", type=int, help="base seed; run r uses seed+r")
        p.add_argument("--slot-us", type=float, dest="slot_us", help="slot duration in microseconds")
        p.add_argument("--payload-bits", type=int, dest="payload_bits",
                       help="parameter payload in bits (assumed: 784 entries x 32 bit)")
        p.add_argument("--rate", type=float, help="downlink rate in bit/s (assumed: 1e6)")
        p.add_argument("--backoff-base", type=int, dest="backoff_base",
                       help="initial contention window (assumed: 2)")
        p.add_argument("--l2-us", type=float, dest="l2_us",
                       help="worker compute latency in microseconds (assumed: 50)")
        p.add_argument("--l4-us", type=float, dest="l4_us",
                       help="master update latency in microseconds (assumed: 10)")
        p.add_argument("--mnist-dir", dest="mnist_dir",
                       help="directory holding the MNIST train IDX files (optionally .gz)")
        p.add_argument("--mnist-count", type=int, dest="mnist_count",
                       help="seeded truncation target for the 0/1 subset (default 12600)")
        p.add_argument("--synth", help="synthetic dataset, e.g. d=2,n=100,margin=2")
        p.add_argument("--stop", choices=["causal", "none"],
                       help="stop at the first objective increase, or run the full horizon")
        p.add_argument("--normalizer",
                       help="'uncontended' (default), 'none', or a cost scale in seconds")
        p.add_argument("--out-dir", dest="out_dir",
                       help="output directory (default $MLONSIM_OUT or ./mlonsim_out)")
        p.add_argument("--jobs", type=int, help="parallel run workers (default 1)")
        p.add_argument("--trace-slots", dest="trace_slots",
                       action=argparse.BooleanOptionalAction,
                       help="also write per-slot channel event CSVs")

    run_p = sub.add_parser("run", help="execute one experiment (many seeded runs)")
    add_common(run_p)
    cmp_p = sub.add_parser(
        "compare", help="paired-seed batch vs minibatch comparison (same other knobs)"
    )
    add_common(cmp_p)
    return parser


def _parse_synth(text: str) -> SynthSpec:
    params = {"d": 2, "n": 100, "margin": 2.0}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigurationError(f"bad --synth entry {part!r} (want key=value)")
        key, value = part.split("=", 1)
        key = key.strip()
        if key not in params:
            raise ConfigurationError(f"unknown --synth key {key!r} (want d, n, margin)")
        params[key] = float(value) if key == "margin" else int(value)
    return SynthSpec(dim=params["d"], count=params["n"], margin=params["margin"])


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown config file keys: {sorted(unknown)}")
    return raw


def assemble(args: argparse.Namespace) -> tuple[SimConfig, dict]:
    """Merge defaults, config file, and explicit flags; returns the sim
    config plus CLI-level extras (out_dir, jobs, trace_slots)."""
    merged: dict = {}
    if args.config:
        merged.update(_load_config_file(args.config))
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value

    if merged.get("mnist_dir") and merged.get("synth"):
        raise ConfigurationError("choose one of --mnist-dir and --synth")
    if merged.get("mnist_dir"):
        dataset = MnistSpec(
            directory=merged["mnist_dir"], count=merged.get("mnist_count", 12600)
        )
    else:
        dataset = _parse_synth(merged.get("synth", ""))

    normalizer = merged.get("normalizer", "uncontended")
    if isinstance(normalizer, str) and normalizer not in ("uncontended", "none"):
        try:
            normalizer = float(normalizer)
        except ValueError as exc:
            raise ConfigurationError(f"bad normalizer {normalizer!r}") from exc

    config = SimConfig(
        workers=merged.get("workers", 5),
        background_prob=merged.get("pb", 0.02),
        mode=merged.get("mode", MODE_BATCH),
        window_slots=merged.get("ts"),
        beta=merged.get("beta", 0.5),
        alpha=merged.get("alpha"),
        max_iters=merged.get("max_iters", 30),
        seed=merged.get("seed", 0),
        runs=merged.get("runs", 1),
        slot_seconds=merged.get("slot_us", 1.0) * 1e-6,
        payload_bits=merged.get("payload_bits", 25088),
        downlink_bps=merged.get("rate", 1e6),
        backoff_base=merged.get("backoff_base", 2),
        compute_seconds=merged.get("l2_us", 50.0) * 1e-6,
        update_seconds=merged.get("l4_us", 10.0) * 1e-6,
        dataset=dataset,
        stop_rule=merged.get("stop", "causal"),
        normalizer=normalizer,
    )
    config.validate()
    extras = {
        "out_dir": merged.get("out_dir")
        or os.environ.get("MLONSIM_OUT")
        or "mlonsim_out",
        "jobs": merged.get("jobs", 1),
        "trace_slots": bool(merged.get("trace_slots", False)),
    }
    if extras["jobs"] < 1:
        raise ConfigurationError("jobs must be >= 1")
    return config, extras


# dataset shared with forked pool workers
_DATASET = None


def _execute_run(task) -> tuple[int, list[dict], list]:
    config, run_id, out_dir, trace_slots = task
    features, labels = _DATASET
    run_seed = config.seed + run_id
    shards = partition_dataset(features, labels, config.workers, run_seed)
    result = run_simulation(config, shards, seed=run_seed, record_events=trace_slots)
    traces.write_trace_csv(
        os.path.join(out_dir, "traces", f"run-{run_id:05d}.csv"), run_id, result
    )
    if trace_slots:
        traces.write_events_csv(
            os.path.join(out_dir, "events", f"run-{run_id:05d}.csv"), result.events or []
        )
    comparison = check_prop_bounds(result)
    return (
        run_id,
        traces.result_metric_rows(result),
        traces.summary_row(run_id, result, comparison),
    )


def _run_all(config: SimConfig, out_dir: str, jobs: int, trace_slots: bool):
    global _DATASET
    _DATASET = load_dataset(config.dataset, config.seed)
    tasks = [(config, run_id, out_dir, trace_slots) for run_id in range(config.runs)]
    if jobs == 1:
        outcomes = [_execute_run(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context("fork")
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=min(jobs, config.runs), mp_context=ctx
        ) as pool:
            outcomes = list(pool.map(_execute_run, tasks))
    outcomes.sort(key=lambda item: item[0])
    metric_rows = [rows for _, rows, _ in outcomes]
    summary_rows = [row for _, _, row in outcomes]
    return metric_rows, summary_rows


def run_experiment(config: SimConfig, out_dir: str, jobs: int = 1, trace_slots: bool = False):
    """Execute config.runs seeded runs; write traces/, summary.csv,
    aggregate.csv, and config.json under out_dir."""
    config.validate()
    os.makedirs(out_dir, exist_ok=True)
    metric_rows, summary_rows = _run_all(config, out_dir, jobs, trace_slots)
    traces.write_summary_csv(os.path.join(out_dir, "summary.csv"), summary_rows)
    traces._atomic_write_rows(
        os.path.join(out_dir, "aggregate.csv"),
        traces.AGGREGATE_HEADER,
        traces.aggregate_rows(config, metric_rows),
    )
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(config_to_json(config), f, indent=2, sort_keys=True)
        f.write("\n")
    return out_dir


def config_to_json(config: SimConfig) -> dict:
    d = dataclasses.asdict(config)
    d["dataset"] = {"type": type(config.dataset).__name__, **dataclasses.asdict(config.dataset)}
    return d


def compare_modes(
    config_batch: SimConfig,
    config_mini: SimConfig,
    out_dir: str,
    jobs: int = 1,
):
    """Paired-seed runs of both modes; emits compare.csv with aligned per-k
    objective and cumulative-cost columns."""
    if config_batch.mode == config_mini.mode:
        raise ConfigurationError("compare needs one batch and one minibatch config")
    a = dataclasses.asdict(config_batch)
    b = dataclasses.asdict(config_mini)
    for skip in ("mode", "window_slots"):
        a.pop(skip)
        b.pop(skip)
    if a != b:
        differing = sorted(key for key in a if a[key] != b[key])
        raise ConfigurationError(f"compare configs differ beyond mode/window: {differing}")
    config_batch.validate()
    config_mini.validate()

    global _DATASET
    _DATASET = load_dataset(config_batch.dataset, config_batch.seed)
    features, labels = _DATASET

    def run_side(config):
        results = []
        for run_id in range(config.runs):
            run_seed = config.seed + run_id
            shards = partition_dataset(features, labels, config.workers, run_seed)
            results.append(run_simulation(config, shards, seed=run_seed))
        return results

    batch_results = run_side(config_batch)
    mini_results = run_side(config_mini)
    os.makedirs(out_dir, exist_ok=True)
    traces.write_compare_csv(
        os.path.join(out_dir, "compare.csv"),
        config_batch,
        config_mini,
        batch_results,
        mini_results,
    )
    return out_dir


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config, extras = assemble(args)
        if args.command == "run":
            out = run_experiment(
                config, extras["out_dir"], extras["jobs"], extras["trace_slots"]
            )
            print(f"wrote {config.runs} run(s) to {out}")
        else:
            base = config.replace(mode=MODE_BATCH, window_slots=None)
            mini = config.replace(mode=MODE_MINIBATCH, window_slots=config.window_slots)
            out = compare_modes(base, mini, extras["out_dir"], extras["jobs"])
            print(f"wrote comparison to {out}")
        return 0
    except DatasetNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
