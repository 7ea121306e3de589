"""Pluggable inference engines and the batched latency model.

An engine turns one :class:`InferenceRequest` into per-item samples plus a
simulated wall-clock duration.  Two backings exist: sampling from the live
tabular policy, and fixed-rate Bernoulli draws for latent populations.
Responses always come back in request order, and a single ``generate`` call
is one logical engine invocation regardless of how many items it batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .policy import PolicyParams, TaskInstance, policy_probs, sample_responses

Phase = Literal["screening", "continuation", "full"]


@dataclass(frozen=True)
class RequestItem:
    task_id: str
    phase: Phase
    n_generations: int

    def __post_init__(self) -> None:
        if self.n_generations < 1:
            raise ValueError("n_generations must be >= 1")


@dataclass(frozen=True)
class InferenceRequest:
    items: tuple[RequestItem, ...]

    @property
    def total_generations(self) -> int:
        return sum(item.n_generations for item in self.items)


@dataclass(frozen=True)
class LatencyModel:
    """Linear batched latency: overhead plus cost per parallel wave.

    A call serves ``concurrency_width`` generations at a time, so elapsed
    time is ``call_overhead + per_generation_cost * ceil(total / width)``.
    ``train_seconds_per_update`` is the flat cost charged per training step.
    Defaults put baseline per-update inference at twice the training cost.
    """

    call_overhead: float = 1.0
    per_generation_cost: float = 2.5
    concurrency_width: int = 64
    train_seconds_per_update: float = 8.0

    def __post_init__(self) -> None:
        if self.call_overhead < 0 or self.per_generation_cost < 0:
            raise ValueError("latency costs must be nonnegative")
        if self.concurrency_width < 1:
            raise ValueError("concurrency_width must be >= 1")
        if self.train_seconds_per_update < 0:
            raise ValueError("train_seconds_per_update must be nonnegative")

    def call_seconds(self, total_generations: int) -> float:
        waves = math.ceil(total_generations / self.concurrency_width)
        return self.call_overhead + self.per_generation_cost * waves


@dataclass(frozen=True)
class SampleRecord:
    """One generated response with its reward and generation-time probability row.

    The probability row is snapshotted when the response is drawn and never
    recomputed, so score vectors built from it reflect the policy that
    produced the sample.  Latent draws carry no row.
    """

    response: int
    reward: int
    probs: np.ndarray | None


@dataclass(frozen=True)
class ItemResult:
    task_id: str
    phase: Phase
    samples: tuple[SampleRecord, ...]


@dataclass(frozen=True)
class EngineResult:
    items: tuple[ItemResult, ...]
    elapsed: float


class SoftmaxPolicyEngine:
    """Engine that samples from the current tabular policy.

    ``params`` is reassigned by the trainer after each update; samples drawn
    earlier keep their own probability snapshots.
    """

    def __init__(self, params: PolicyParams, tasks: list[TaskInstance],
                 latency: LatencyModel):
        self.params = params
        self.latency = latency
        self._tasks = {task.id: task for task in tasks}

    def generate(self, request: InferenceRequest, rng: np.random.Generator) -> EngineResult:
        items = []
        for item in request.items:
            task = self._lookup(item.task_id)
            probs = policy_probs(self.params, task.context_id)
            probs.setflags(write=False)
            pairs = sample_responses(self.params, task, item.n_generations, rng)
            samples = tuple(SampleRecord(y, r, probs) for y, r in pairs)
            items.append(ItemResult(item.task_id, item.phase, samples))
        elapsed = self.latency.call_seconds(request.total_generations)
        return EngineResult(tuple(items), elapsed)

    def _lookup(self, task_id: str) -> TaskInstance:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise KeyError(f"unknown task_id {task_id!r}") from None


class LatentRateEngine:
    """Engine backed by fixed per-task pass rates; no policy, no gradients."""

    def __init__(self, tasks: list[TaskInstance], latency: LatencyModel):
        self.latency = latency
        self._tasks = {task.id: task for task in tasks}

    def generate(self, request: InferenceRequest, rng: np.random.Generator) -> EngineResult:
        items = []
        for item in request.items:
            task = self._lookup(item.task_id)
            pairs = sample_responses(None, task, item.n_generations, rng)
            samples = tuple(SampleRecord(y, r, None) for y, r in pairs)
            items.append(ItemResult(item.task_id, item.phase, samples))
        elapsed = self.latency.call_seconds(request.total_generations)
        return EngineResult(tuple(items), elapsed)

    def _lookup(self, task_id: str) -> TaskInstance:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise KeyError(f"unknown task_id {task_id!r}") from None
