"""Two-phase screening scheduler: screen, prefetch, buffer, train.

The loop alternates two iteration kinds.  While the buffer holds fewer than
one training batch, an inference iteration issues a single engine call that
combines continuation draws for previously accepted prompts with screening
draws for a fresh batch; completed prompts join the buffer and the freshly
qualified ones become the next continuation set.  Otherwise a training
iteration consumes exactly one batch from the buffer.

The buffer is what keeps the training batch size constant while the
acceptance rate fluctuates; prefetching is what keeps the engine-call count
equal to the inference-iteration count.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal

import numpy as np

from .engine import EngineResult, InferenceRequest, RequestItem, SampleRecord
from .estimators import CurriculumShape
from .metrics import MetricsRecord
from .policy import TaskInstance

BufferPolicy = Literal["fifo", "uniform-random"]


@dataclass(frozen=True)
class CurriculumConfig:
    """Screening thresholds, generation split, and batch sizes."""

    shape: CurriculumShape
    p_low: float = 0.0
    p_high: float = 1.0
    train_batch_size: int = 16
    generation_batch_size: int = 64
    buffer_policy: BufferPolicy = "fifo"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_low < self.p_high <= 1.0:
            raise ValueError("need 0 <= p_low < p_high <= 1")
        if self.train_batch_size < 1 or self.generation_batch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.buffer_policy not in ("fifo", "uniform-random"):
            raise ValueError(f"unknown buffer policy {self.buffer_policy!r}")


@dataclass(frozen=True)
class ScreeningResult:
    """Outcome of a prompt's screening draws, with the samples retained.

    The retained samples are reused in the eventual training update, so a
    trained prompt consumes screening plus continuation draws with nothing
    regenerated.
    """

    task_id: str
    rewards: tuple[int, ...]
    samples: tuple[SampleRecord, ...]

    def __post_init__(self) -> None:
        if any(r not in (0, 1) for r in self.rewards):
            raise ValueError("rewards must be 0/1 bits")
        if len(self.samples) != len(self.rewards):
            raise ValueError("one retained sample per screening reward")

    @property
    def success_count(self) -> int:
        return sum(self.rewards)

    @property
    def estimate(self) -> float:
        return self.success_count / len(self.rewards)


@dataclass(frozen=True)
class BufferEntry:
    """A fully generated prompt awaiting its training slot."""

    task_id: str
    samples: tuple[SampleRecord, ...]
    enqueue_call: int
    screen_estimate: float


@dataclass
class Counters:
    engine_calls: int = 0
    prompts_screened: int = 0
    prompts_accepted: int = 0
    prompts_rejected: int = 0
    buffer_high_water: int = 0
    dropped_at_shutdown: int = 0

    def snapshot(self) -> dict[str, int]:
        return {
            "engine_calls": self.engine_calls,
            "prompts_screened": self.prompts_screened,
            "prompts_accepted": self.prompts_accepted,
            "prompts_rejected": self.prompts_rejected,
            "buffer_high_water": self.buffer_high_water,
            "dropped_at_shutdown": self.dropped_at_shutdown,
        }


@dataclass
class SchedulerState:
    """Buffer, in-flight accepted cache, step counter, and counters.

    ``accepted`` holds only prompts whose continuation draws are pending;
    once those arrive the prompt moves to the buffer and leaves the cache.
    """

    buffer: deque[BufferEntry] = field(default_factory=deque)
    accepted: dict[str, ScreeningResult] = field(default_factory=dict)
    t: int = 0
    counters: Counters = field(default_factory=Counters)


def screen(result: ScreeningResult, cfg: CurriculumConfig) -> bool:
    """Accept iff the screening estimate lies strictly inside (p_low, p_high)."""
    return cfg.p_low < result.estimate < cfg.p_high


def assemble_inference_request(
    state: SchedulerState,
    new_tasks: list[TaskInstance],
    cfg: CurriculumConfig,
) -> InferenceRequest:
    """One unified request: continuations for the accepted cache, then screenings.

    With an empty accepted cache (first iteration) the request degenerates to
    screening items only.
    """
    if len(new_tasks) > cfg.generation_batch_size:
        raise ValueError("new_tasks exceeds the generation batch size")
    items = [
        RequestItem(task_id, "continuation", cfg.shape.n_cont)
        for task_id in state.accepted
    ]
    items += [
        RequestItem(task.id, "screening", cfg.shape.n_init)
        for task in new_tasks
    ]
    return InferenceRequest(tuple(items))


def ingest_responses(
    state: SchedulerState,
    request: InferenceRequest,
    result: EngineResult,
    cfg: CurriculumConfig,
) -> list[str]:
    """Fold one engine call's responses into the state.

    Continuation items complete their prompt: retained screening samples and
    fresh continuation samples form a buffer entry, appended in request
    order.  Screening items are tested against the thresholds; the accepted
    cache is replaced by the newly qualified prompts.  Returns the ids of
    the newly buffered prompts.
    """
    if len(result.items) != len(request.items):
        raise ValueError("engine result does not cover the request")
    buffered: list[str] = []
    qualified: dict[str, ScreeningResult] = {}
    for want, got in zip(request.items, result.items):
        if got.task_id != want.task_id or got.phase != want.phase:
            raise ValueError("engine result misaligned with the request")
        if len(got.samples) != want.n_generations:
            raise ValueError(
                f"task {want.task_id!r}: expected {want.n_generations} "
                f"generations, got {len(got.samples)}"
            )
        if want.phase == "continuation":
            screening = state.accepted.pop(want.task_id)
            entry = BufferEntry(
                task_id=want.task_id,
                samples=screening.samples + got.samples,
                enqueue_call=state.counters.engine_calls,
                screen_estimate=screening.estimate,
            )
            state.buffer.append(entry)
            buffered.append(want.task_id)
        elif want.phase == "screening":
            screening = ScreeningResult(
                task_id=want.task_id,
                rewards=tuple(s.reward for s in got.samples),
                samples=got.samples,
            )
            state.counters.prompts_screened += 1
            if screen(screening, cfg):
                state.counters.prompts_accepted += 1
                qualified[want.task_id] = screening
            else:
                state.counters.prompts_rejected += 1
        else:
            raise ValueError(f"unexpected phase {want.phase!r} in scheduler request")
    if state.accepted:
        raise RuntimeError("continuation responses missing for accepted prompts")
    state.accepted = qualified
    state.counters.buffer_high_water = max(
        state.counters.buffer_high_water, len(state.buffer)
    )
    return buffered


def draw_training_batch(
    state: SchedulerState,
    cfg: CurriculumConfig,
    rng: np.random.Generator,
) -> list[BufferEntry]:
    """Remove exactly one training batch from the buffer.

    ``fifo`` takes the oldest entries (bounding staleness); ``uniform-random``
    removes a uniform subset, preserving buffer order within the batch.
    """
    b = cfg.train_batch_size
    if len(state.buffer) < b:
        raise ValueError(f"buffer holds {len(state.buffer)} < {b} entries")
    if cfg.buffer_policy == "fifo":
        return [state.buffer.popleft() for _ in range(b)]
    chosen = sorted(rng.choice(len(state.buffer), size=b, replace=False).tolist())
    picked = set(chosen)
    batch = [state.buffer[i] for i in chosen]
    state.buffer = deque(e for i, e in enumerate(state.buffer) if i not in picked)
    return batch


@dataclass(frozen=True)
class Budget:
    """Stop conditions; the loop halts when any configured limit is reached."""

    max_updates: int | None = None
    max_sim_seconds: float | None = None
    max_engine_calls: int | None = None

    def __post_init__(self) -> None:
        if (self.max_updates is None and self.max_sim_seconds is None
                and self.max_engine_calls is None):
            raise ValueError("at least one budget limit must be set")

    def exhausted(self, t: int, sim_seconds: float, engine_calls: int) -> bool:
        if self.max_updates is not None and t >= self.max_updates:
            return True
        if self.max_sim_seconds is not None and sim_seconds >= self.max_sim_seconds:
            return True
        if self.max_engine_calls is not None and engine_calls >= self.max_engine_calls:
            return True
        return False


class EpochLoader:
    """Cycles a task list in shuffled epochs.

    Rejected prompts come back around on the next pass, so difficulty is
    reassessed every epoch.  ``exclude`` lets the caller skip prompts whose
    continuation draws are still in flight.
    """

    def __init__(self, tasks: list[TaskInstance], rng: np.random.Generator,
                 shuffle: bool = True):
        if not tasks:
            raise ValueError("loader needs at least one task")
        self._tasks = list(tasks)
        self._rng = rng
        self._shuffle = shuffle
        self._order: list[int] = []
        self._pos = 0
        self.epochs = 0

    def _refill(self) -> None:
        order = np.arange(len(self._tasks))
        if self._shuffle:
            self._rng.shuffle(order)
        self._order = order.tolist()
        self._pos = 0
        self.epochs += 1

    def take(self, n: int, exclude: Iterable[str] = ()) -> list[TaskInstance]:
        """Next ``n`` tasks in epoch order, skipping excluded ids.

        May return fewer than ``n`` if exclusions exhaust a full cycle.
        """
        excluded = set(exclude)
        out: list[TaskInstance] = []
        scanned = 0
        while len(out) < n and scanned < len(self._tasks):
            if self._pos >= len(self._order):
                self._refill()
            task = self._tasks[self._order[self._pos]]
            self._pos += 1
            if task.id in excluded:
                scanned += 1
                continue
            out.append(task)
        return out


class LoopError(RuntimeError):
    """Engine failure annotated with the loop position where it occurred."""


TrainFn = Callable[[list[BufferEntry]], tuple[float, float]]


def run_loop(
    state: SchedulerState,
    engine,
    loader: EpochLoader,
    cfg: CurriculumConfig,
    budget: Budget,
    rng: np.random.Generator,
    train_fn: TrainFn | None = None,
    population_rate_fn: Callable[[], float] | None = None,
    train_seconds_per_update: float = 8.0,
    eval_interval: int = 1,
) -> list[MetricsRecord]:
    """Drive the scheduler until a budget limit is hit; one record per iteration.

    ``train_fn`` consumes a drawn batch and returns ``(grad_norm,
    train_pass_rate)``; when omitted, updates still tick and cost time but
    apply nothing (pure throughput simulation).  In-flight accepted prompts
    remaining at shutdown are counted as dropped.
    """
    records: list[MetricsRecord] = []
    sim_seconds = 0.0
    while not budget.exhausted(state.t, sim_seconds, state.counters.engine_calls):
        if len(state.buffer) < cfg.train_batch_size:
            new_tasks = loader.take(cfg.generation_batch_size,
                                    exclude=state.accepted.keys())
            request = assemble_inference_request(state, new_tasks, cfg)
            try:
                result = engine.generate(request, rng)
            except Exception as exc:
                raise LoopError(
                    f"engine call {state.counters.engine_calls + 1} failed "
                    f"at t={state.t}"
                ) from exc
            state.counters.engine_calls += 1
            screened = len(new_tasks)
            accepted_before = state.counters.prompts_accepted
            ingest_responses(state, request, result, cfg)
            accepted_now = state.counters.prompts_accepted - accepted_before
            sim_seconds += result.elapsed
            records.append(MetricsRecord(
                kind="inference",
                t=state.t,
                sim_elapsed_s=result.elapsed,
                accepted_fraction=(accepted_now / screened) if screened else None,
                counters=state.counters.snapshot(),
            ))
        else:
            batch = draw_training_batch(state, cfg, rng)
            if train_fn is not None:
                grad_norm, train_rate = train_fn(batch)
            else:
                rewards = [s.reward for e in batch for s in e.samples]
                grad_norm, train_rate = 0.0, sum(rewards) / len(rewards)
            state.t += 1
            sim_seconds += train_seconds_per_update
            rate = None
            if population_rate_fn is not None and state.t % eval_interval == 0:
                rate = population_rate_fn()
            records.append(MetricsRecord(
                kind="update",
                t=state.t,
                sim_elapsed_s=train_seconds_per_update,
                train_pass_rate=train_rate,
                grad_norm=grad_norm,
                population_pass_rate=rate,
                counters=state.counters.snapshot(),
            ))
    state.counters.dropped_at_shutdown += len(state.accepted)
    return records
