"""Run orchestration: configs in, metric files and summaries out.

The CLI delegates here.  Every artifact a run writes is deterministic
given the configuration: the effective config echo, the line-delimited
metrics, and the summary document.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, render_config
from .engine import LatentRateEngine
from .metrics import (
    SCHEMA_VERSION,
    MetricsRecord,
    clock_report,
    records_to_jsonl,
    time_to_target,
)
from .population import make_policy_population, make_population
from .rng import make_rng
from .scheduler import Budget, EpochLoader, SchedulerState, run_loop
from .trainer import TrainResult, train_baseline, train_speed
from .verify import run_suites


def thread_budget() -> int:
    """Worker cap from SPEEDLAB_THREADS; at least one."""
    raw = os.environ.get("SPEEDLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _derived_seeds(seed: int, n: int) -> list[int]:
    """Stable child seeds for the independent stages of a run."""
    return [int(s.generate_state(1)[0]) for s in
            np.random.SeedSequence(seed).spawn(n)]


@dataclass
class RunArtifacts:
    records: list[MetricsRecord]
    summary: dict
    baseline_records: list[MetricsRecord] | None = None


def _totals(records: list[MetricsRecord]) -> dict:
    report = clock_report(records)
    counters = records[-1].counters if records else {}
    return {
        "inference_seconds": report.inference_seconds,
        "training_seconds": report.training_seconds,
        "total_seconds": report.total_seconds,
        "engine_calls": report.engine_calls,
        "updates": report.updates,
        "counters": dict(counters),
    }


def _targets_block(records: list[MetricsRecord], targets: list[float]) -> dict:
    return {str(t): time_to_target(records, t) for t in targets}


def execute_learning_run(config: RunConfig) -> RunArtifacts:
    """Baseline or screened training on a policy-backed population."""
    pop_seed, speed_seed, base_seed = _derived_seeds(config.seed, 3)
    params, tasks = make_policy_population(
        config.policy_population_spec(), make_rng(pop_seed))
    latency = config.latency_model()
    targets = config["train"]["targets"]

    if config.mode == "baseline":
        result = train_baseline(params, tasks, config.train_config(seed=base_seed),
                                latency)
        summary = {
            "schema_version": SCHEMA_VERSION,
            "mode": config.mode,
            "seed": config.seed,
            "totals": _totals(result.records),
            "time_to_target": _targets_block(result.records, targets),
        }
        return RunArtifacts(result.records, summary)

    result = train_speed(params, tasks, config.curriculum_config(),
                         config.train_config(seed=speed_seed), latency)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "mode": config.mode,
        "seed": config.seed,
        "totals": _totals(result.records),
        "time_to_target": _targets_block(result.records, targets),
    }
    baseline_records = None
    if config["train"]["paired_baseline"]:
        base = train_baseline(params, tasks, config.train_config(seed=base_seed),
                              latency)
        baseline_records = base.records
        speedup = {}
        for target in targets:
            ts = time_to_target(result.records, target)
            tb = time_to_target(base.records, target)
            speedup[str(target)] = (tb / ts) if ts and tb else None
        summary["baseline"] = {
            "totals": _totals(base.records),
            "time_to_target": _targets_block(base.records, targets),
        }
        summary["speedup"] = speedup
    return RunArtifacts(result.records, summary, baseline_records)


def execute_scheduling_run(config: RunConfig) -> RunArtifacts:
    """Screened scheduling over a latent population; no parameter updates."""
    pop_seed, loader_seed, run_seed = _derived_seeds(config.seed, 3)
    tasks = make_population(config.latent_population_spec(), make_rng(pop_seed))
    latency = config.latency_model()
    engine = LatentRateEngine(tasks, latency)
    loader = EpochLoader(tasks, make_rng(loader_seed))
    state = SchedulerState()
    train = config["train"]
    budget = Budget(
        max_updates=train["total_updates"],
        max_sim_seconds=train["max_sim_seconds"] or None,
        max_engine_calls=train["max_engine_calls"],
    )
    rate = float(np.mean([t.latent_pass_rate for t in tasks]))
    records = run_loop(
        state, engine, loader, config.curriculum_config(), budget,
        make_rng(run_seed),
        population_rate_fn=lambda: rate,
        train_seconds_per_update=latency.train_seconds_per_update,
        eval_interval=train["eval_interval"],
    )
    summary = {
        "schema_version": SCHEMA_VERSION,
        "mode": "speed",
        "seed": config.seed,
        "totals": _totals(records),
        "time_to_target": {},
    }
    return RunArtifacts(records, summary)


def execute_run(config: RunConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.echo.ini").write_text(render_config(config))
    if config.mode == "baseline" or config.uses_policy_population:
        artifacts = execute_learning_run(config)
    else:
        artifacts = execute_scheduling_run(config)
    (out_dir / "metrics.jsonl").write_text(records_to_jsonl(artifacts.records))
    if artifacts.baseline_records is not None:
        (out_dir / "baseline_metrics.jsonl").write_text(
            records_to_jsonl(artifacts.baseline_records))
    (out_dir / "summary.json").write_text(
        json.dumps(artifacts.summary, indent=2, sort_keys=True) + "\n")
    return artifacts.summary


def execute_verify(suite: str, seed: int, out_dir: Path | None) -> tuple[int, dict]:
    reports = run_suites(suite, seed)
    document = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "suites": [r.to_dict() for r in reports],
    }
    failed = [r.suite for r in reports if not r.passed]
    discrepancies = [
        {"suite": r.suite, "check": c.name, "details": c.details}
        for r in reports for c in r.discrepancies
    ]
    document["status"] = "pass" if not failed else "fail"
    document["bound_discrepancies"] = discrepancies
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"verify_{suite}.json").write_text(
            json.dumps(document, indent=2, sort_keys=True) + "\n")
    return (0 if not failed else 1), document


def _sweep_cell(config: RunConfig, axis: str, value: float) -> dict:
    """One sweep run; fully seeded, independent of every other cell."""
    pop_seed, speed_seed, _ = _derived_seeds(config.seed, 3)
    per_gen = None
    spec = config.policy_population_spec()
    n_init = None
    if axis == "n_init":
        n_init = int(value)
    elif axis == "latency":
        per_gen = float(value)
    else:  # population: vary the hardest-class mass
        spec = type(spec)(
            size=spec.size, n_responses=spec.n_responses,
            zero_mass=float(value), one_mass=spec.one_mass,
            beta_alpha=spec.beta_alpha, beta_beta=spec.beta_beta,
            hard_pass_rate=spec.hard_pass_rate, easy_pass_rate=spec.easy_pass_rate,
        )
    params, tasks = make_policy_population(spec, make_rng(pop_seed))
    latency = config.latency_model(per_generation_cost=per_gen)
    result = train_speed(params, tasks, config.curriculum_config(n_init=n_init),
                         config.train_config(seed=speed_seed), latency)
    updates = [r for r in result.records if r.kind == "update"]
    acc_dev = (float(np.mean([abs(r.train_pass_rate - 0.5) for r in updates]))
               if updates else None)
    grad_norm = (float(np.mean([r.grad_norm for r in updates]))
                 if updates else None)
    targets = config["train"]["targets"]
    return {
        "axis": axis,
        "value": value,
        "time_to_target": _targets_block(result.records, targets),
        "mean_abs_acc_dev": acc_dev,
        "mean_grad_norm": grad_norm,
        "records": result.records,
    }


def execute_sweep(config: RunConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.echo.ini").write_text(render_config(config))
    axis = config["sweep"]["axis"]
    values = config["sweep"]["values"]
    workers = min(thread_budget(), len(values))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(
                lambda v: _sweep_cell(config, axis, v), values))
    else:
        cells = [_sweep_cell(config, axis, v) for v in values]

    targets = config["train"]["targets"]
    rows = []
    first = cells[0]
    for cell in cells:
        for target in targets:
            key = str(target)
            own = cell["time_to_target"][key]
            ref = first["time_to_target"][key]
            speedup = (ref / own) if own and ref else None
            rows.append({
                "axis": axis,
                "value": cell["value"],
                "target": target,
                "time_to_target_s": own,
                "speedup_vs_first": speedup,
            })
    with (out_dir / "sweep_table.csv").open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    for cell in cells:
        label = f"{cell['value']:g}"
        (out_dir / f"series_{axis}_{label}.jsonl").write_text(
            records_to_jsonl(cell["records"]))

    summary = {
        "schema_version": SCHEMA_VERSION,
        "axis": axis,
        "seed": config.seed,
        "cells": [
            {k: v for k, v in cell.items() if k != "records"}
            for cell in cells
        ],
        "table": rows,
    }
    (out_dir / "sweep_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
