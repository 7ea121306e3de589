"""Gradient-ascent training loops on the tabular policy, plus analysis harnesses.

Two drivers share the same update rule (plain ascent with a constant
learning rate on the leave-one-out policy gradient): the baseline generates
a full set of responses for every prompt in every batch, while the screened
driver runs the two-phase scheduler and trains only on buffered prompts.
Both emit the same metrics stream.

The quadratic harness checks the one-step improvement guarantee for
unbiased stochastic gradients on a 1-smooth objective, where every quantity
has a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import LatencyModel, InferenceRequest, RequestItem, SampleRecord, SoftmaxPolicyEngine
from .estimators import rloo_advantages
from .metrics import MetricsRecord
from .policy import PolicyParams, TaskInstance
from .population import mean_exact_pass_rate
from .rng import make_rng
from .scheduler import (
    Budget,
    BufferEntry,
    CurriculumConfig,
    EpochLoader,
    SchedulerState,
    run_loop,
)


@dataclass(frozen=True)
class TrainConfig:
    """Shared training knobs; ``n_total`` is the baseline's per-prompt draw count."""

    learning_rate: float = 0.1
    total_updates: int = 100
    n_total: int = 24
    batch_size: int = 16
    eval_interval: int = 1
    seed: int = 0
    max_engine_calls: int = 100_000
    max_sim_seconds: float | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.total_updates < 1:
            raise ValueError("total_updates must be >= 1")
        if self.n_total < 2:
            raise ValueError("n_total must be >= 2 for leave-one-out advantages")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be >= 1")


def prompt_row_gradient(samples: tuple[SampleRecord, ...]) -> np.ndarray:
    """Leave-one-out policy gradient of one prompt, in its context row.

    Uses each sample's generation-time probability snapshot, so samples
    drawn before earlier updates contribute the scores they were drawn
    under.
    """
    rewards = np.array([s.reward for s in samples], dtype=float)
    adv = rloo_advantages(rewards)
    m = samples[0].probs.shape[0]
    row = np.zeros(m)
    if np.all(adv == 0.0):
        return row
    for a, sample in zip(adv, samples):
        score = -sample.probs
        score[sample.response] += 1.0
        row += a * score
    return row / len(samples)


@dataclass
class TrainResult:
    records: list[MetricsRecord]
    params: PolicyParams
    trained_entries: list[tuple[str, float, int]] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)


def train_baseline(
    params: PolicyParams,
    tasks: list[TaskInstance],
    cfg: TrainConfig,
    latency: LatencyModel | None = None,
) -> TrainResult:
    """Uniform-sampling training: every batch prompt gets ``n_total`` draws.

    Each update emits an inference record (the single engine call that
    generated the batch) and an update record.
    """
    if any(task.kind != "policy" for task in tasks):
        raise ValueError("baseline training needs policy-backed tasks")
    latency = latency or LatencyModel()
    root = make_rng(cfg.seed)
    loader_rng, engine_rng = root.spawn(2)
    engine = SoftmaxPolicyEngine(params, tasks, latency)
    loader = EpochLoader(tasks, loader_rng)
    by_id = {task.id: task for task in tasks}

    records: list[MetricsRecord] = []
    for step in range(cfg.total_updates):
        batch = loader.take(cfg.batch_size)
        request = InferenceRequest(tuple(
            RequestItem(task.id, "full", cfg.n_total) for task in batch
        ))
        result = engine.generate(request, engine_rng)
        records.append(MetricsRecord(
            kind="inference",
            t=step,
            sim_elapsed_s=result.elapsed,
            counters={"engine_calls": step + 1},
        ))

        update = np.zeros_like(engine.params.logits)
        reward_sum = 0
        reward_count = 0
        for item in result.items:
            row = prompt_row_gradient(item.samples)
            update[by_id[item.task_id].context_id] += row
            reward_sum += sum(s.reward for s in item.samples)
            reward_count += len(item.samples)
        update /= len(result.items)
        grad_norm = float(np.linalg.norm(update))
        engine.params = PolicyParams(engine.params.logits + cfg.learning_rate * update)

        t = step + 1
        rate = None
        if t % cfg.eval_interval == 0:
            rate = mean_exact_pass_rate(engine.params, tasks)
        records.append(MetricsRecord(
            kind="update",
            t=t,
            sim_elapsed_s=latency.train_seconds_per_update,
            train_pass_rate=reward_sum / reward_count,
            grad_norm=grad_norm,
            population_pass_rate=rate,
            counters={"engine_calls": step + 1},
        ))
    return TrainResult(records, engine.params,
                       counters={"engine_calls": cfg.total_updates})


def train_speed(
    params: PolicyParams,
    tasks: list[TaskInstance],
    curriculum: CurriculumConfig,
    cfg: TrainConfig,
    latency: LatencyModel | None = None,
) -> TrainResult:
    """Screened training: drives the scheduler loop with RL updates.

    Every consumed buffer entry contributes all of its retained screening
    samples plus its continuation samples to the update.
    """
    if any(task.kind != "policy" for task in tasks):
        raise ValueError("screened training needs policy-backed tasks")
    latency = latency or LatencyModel()
    root = make_rng(cfg.seed)
    loader_rng, engine_rng = root.spawn(2)
    engine = SoftmaxPolicyEngine(params, tasks, latency)
    loader = EpochLoader(tasks, loader_rng)
    by_id = {task.id: task for task in tasks}
    state = SchedulerState()
    trained_entries: list[tuple[str, float, int]] = []

    def train_fn(batch: list[BufferEntry]) -> tuple[float, float]:
        update = np.zeros_like(engine.params.logits)
        reward_sum = 0
        reward_count = 0
        for entry in batch:
            trained_entries.append(
                (entry.task_id, entry.screen_estimate, len(entry.samples))
            )
            row = prompt_row_gradient(entry.samples)
            update[by_id[entry.task_id].context_id] += row
            reward_sum += sum(s.reward for s in entry.samples)
            reward_count += len(entry.samples)
        update /= len(batch)
        grad_norm = float(np.linalg.norm(update))
        engine.params = PolicyParams(engine.params.logits + cfg.learning_rate * update)
        return grad_norm, reward_sum / reward_count

    budget = Budget(
        max_updates=cfg.total_updates,
        max_sim_seconds=cfg.max_sim_seconds,
        max_engine_calls=cfg.max_engine_calls,
    )
    records = run_loop(
        state, engine, loader, curriculum, budget, engine_rng,
        train_fn=train_fn,
        population_rate_fn=lambda: mean_exact_pass_rate(engine.params, tasks),
        train_seconds_per_update=latency.train_seconds_per_update,
        eval_interval=cfg.eval_interval,
    )
    return TrainResult(records, engine.params, trained_entries,
                       counters=state.counters.snapshot())


@dataclass(frozen=True)
class QuadraticHarness:
    """Noisy-gradient step on ``J(x) = -||x - target||^2 / 2`` from the origin.

    The objective is 1-smooth with gradient ``target`` at the origin, and
    the added noise is isotropic Gaussian with known trace, so the
    signal-to-noise ratio and the expected one-step improvement both have
    closed forms.
    """

    dimension: int
    noise_scale: float
    trials: int
    target: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.trials < 1000:
            raise ValueError("need trials >= 1000")
        if self.dimension < 1 or len(self.target) != self.dimension:
            raise ValueError("target must match the dimension")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")

    @property
    def grad_sq(self) -> float:
        return float(sum(v * v for v in self.target))

    @property
    def noise_trace(self) -> float:
        return self.dimension * self.noise_scale

    @property
    def snr(self) -> float:
        if self.noise_trace == 0.0:
            return math.inf
        return self.grad_sq / self.noise_trace


@dataclass(frozen=True)
class ImprovementReport:
    empirical_improvement: float
    bound_rhs: float
    margin: float
    stderr: float
    snr: float
    closed_form: float


def improvement_bound_check(
    harness: QuadraticHarness, rng: np.random.Generator
) -> ImprovementReport:
    """Monte Carlo check of the one-step improvement lower bound.

    ``bound_rhs`` is ``grad_sq/2 * (1 - 1/snr)``; on this quadratic the
    expected improvement equals ``closed_form = grad_sq/2 - noise_trace/2``
    exactly, so the bound holds with equality up to sampling error.
    """
    target = np.array(harness.target)
    if harness.noise_scale == 0.0:
        improvements = np.full(harness.trials, 0.5 * harness.grad_sq)
    else:
        noise = rng.normal(
            0.0, math.sqrt(harness.noise_scale),
            size=(harness.trials, harness.dimension),
        )
        # One step from the origin lands at g_hat = target + noise, and
        # J(target + noise) - J(0) = ||target||^2/2 - ||noise||^2/2.
        improvements = 0.5 * harness.grad_sq - 0.5 * (noise * noise).sum(axis=1)
    empirical = float(improvements.mean())
    stderr = float(improvements.std(ddof=1) / math.sqrt(harness.trials))
    inv_snr = 0.0 if math.isinf(harness.snr) else 1.0 / harness.snr
    bound_rhs = 0.5 * harness.grad_sq * (1.0 - inv_snr)
    closed_form = 0.5 * harness.grad_sq - 0.5 * harness.noise_trace
    return ImprovementReport(
        empirical_improvement=empirical,
        bound_rhs=bound_rhs,
        margin=empirical - bound_rhs,
        stderr=stderr,
        snr=harness.snr,
        closed_form=closed_form,
    )


@dataclass(frozen=True)
class NInitCell:
    """One screening-size sweep cell with its run-averaged selection metrics."""

    n_init: int
    mean_abs_acc_dev: float
    mean_grad_norm: float
    records: list[MetricsRecord]


def ninit_sweep(
    params: PolicyParams,
    tasks: list[TaskInstance],
    curriculum: CurriculumConfig,
    cfg: TrainConfig,
    n_init_values: list[int],
    latency: LatencyModel | None = None,
) -> list[NInitCell]:
    """Screened runs across screening sizes with the total draw count fixed.

    Each cell starts from the same parameters and seed, differing only in
    the screening/continuation split.  Reports the run mean of
    ``|train_pass_rate - 0.5|`` and of the gradient norm per cell.
    """
    if len(n_init_values) < 2:
        raise ValueError("need at least two screening sizes to compare")
    n_total = curriculum.shape.n_total
    cells = []
    for n_init in n_init_values:
        if not 1 <= n_init <= n_total - 1:
            raise ValueError(f"n_init {n_init} incompatible with n_total {n_total}")
        shape = type(curriculum.shape)(n_init=n_init, n_cont=n_total - n_init)
        cell_curriculum = CurriculumConfig(
            shape=shape,
            p_low=curriculum.p_low,
            p_high=curriculum.p_high,
            train_batch_size=curriculum.train_batch_size,
            generation_batch_size=curriculum.generation_batch_size,
            buffer_policy=curriculum.buffer_policy,
        )
        result = train_speed(params, tasks, cell_curriculum, cfg, latency)
        updates = [r for r in result.records if r.kind == "update"]
        if updates:
            acc_dev = float(np.mean([abs(r.train_pass_rate - 0.5) for r in updates]))
            grad_norm = float(np.mean([r.grad_norm for r in updates]))
        else:
            acc_dev = math.nan
            grad_norm = math.nan
        cells.append(NInitCell(n_init, acc_dev, grad_norm, result.records))
    return cells
