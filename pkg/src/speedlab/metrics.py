"""Run metrics: per-iteration records, line-delimited serialization, clocks.

Each loop iteration (inference call or training update) emits one
``MetricsRecord``.  Serialized rows carry a fixed key set so downstream
tooling can rely on the schema; ``SCHEMA_VERSION`` guards breaking changes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

SCHEMA_VERSION = 1

#: Fixed serialization keys, in row order.
ROW_KEYS = (
    "kind",
    "t",
    "sim_elapsed_s",
    "train_pass_rate",
    "grad_norm",
    "accepted_fraction",
    "population_pass_rate",
    "engine_calls",
)


@dataclass(frozen=True)
class MetricsRecord:
    """One loop iteration: either an inference call or a training update.

    ``sim_elapsed_s`` is this record's own simulated duration; cumulative
    clocks are sums over records.  Fields that do not apply to the record
    kind are ``None``.
    """

    kind: str  # "inference" | "update"
    t: int
    sim_elapsed_s: float
    train_pass_rate: float | None = None
    grad_norm: float | None = None
    accepted_fraction: float | None = None
    population_pass_rate: float | None = None
    counters: dict[str, int] = field(default_factory=dict)

    def to_row(self) -> dict:
        return {
            "kind": self.kind,
            "t": self.t,
            "sim_elapsed_s": self.sim_elapsed_s,
            "train_pass_rate": self.train_pass_rate,
            "grad_norm": self.grad_norm,
            "accepted_fraction": self.accepted_fraction,
            "population_pass_rate": self.population_pass_rate,
            "engine_calls": self.counters.get("engine_calls", 0),
        }


def records_to_jsonl(records: list[MetricsRecord]) -> str:
    """Serialize records one JSON object per line, keys in fixed order."""
    return "".join(json.dumps(r.to_row()) + "\n" for r in records)


@dataclass(frozen=True)
class ClockReport:
    """Cumulative simulated seconds split by iteration kind."""

    inference_seconds: float
    training_seconds: float
    total_seconds: float
    engine_calls: int
    updates: int


def clock_report(records: list[MetricsRecord]) -> ClockReport:
    """Total simulated time; additive over records by construction."""
    inference = sum(r.sim_elapsed_s for r in records if r.kind == "inference")
    training = sum(r.sim_elapsed_s for r in records if r.kind == "update")
    calls = sum(1 for r in records if r.kind == "inference")
    updates = sum(1 for r in records if r.kind == "update")
    return ClockReport(inference, training, inference + training, calls, updates)


def time_to_target(records: list[MetricsRecord], target: float) -> float | None:
    """Simulated seconds until the population pass rate first reaches ``target``.

    Interpolates linearly between consecutive evaluated records; ``None``
    when the target is never reached.
    """
    clock = 0.0
    prev_time: float | None = None
    prev_rate: float | None = None
    for r in records:
        clock += r.sim_elapsed_s
        rate = r.population_pass_rate
        if rate is None:
            continue
        if rate >= target:
            if prev_rate is None or prev_rate >= target or math.isclose(rate, prev_rate):
                return clock
            frac = (target - prev_rate) / (rate - prev_rate)
            return prev_time + frac * (clock - prev_time)
        prev_time, prev_rate = clock, rate
    return None
