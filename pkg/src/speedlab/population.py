"""Synthetic prompt populations with a heavy-tailed difficulty profile.

Real prompt sets concentrate mass at the extremes: a large fraction the
model never solves, a spike it always solves, and a spread in between.
Builders here reproduce that profile either as latent tasks (frozen rates,
for pure scheduling runs) or as a tabular policy whose initial per-context
pass rates follow the profile (for learning runs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .policy import PolicyParams, TaskInstance, pass_rate_exact


@dataclass(frozen=True)
class PopulationSpec:
    """Mixture of exact-zero, exact-one, and Beta-distributed pass rates."""

    size: int
    zero_mass: float = 0.34
    one_mass: float = 0.10
    beta_alpha: float = 1.0
    beta_beta: float = 1.0

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if not (0.0 <= self.zero_mass and 0.0 <= self.one_mass
                and self.zero_mass + self.one_mass <= 1.0):
            raise ValueError("zero_mass and one_mass must be fractions summing to <= 1")
        if self.beta_alpha <= 0 or self.beta_beta <= 0:
            raise ValueError("Beta parameters must be positive")


def make_population(spec: PopulationSpec, rng: np.random.Generator) -> list[TaskInstance]:
    """Draw a latent task population; deterministic given the stream."""
    tasks = []
    for i in range(spec.size):
        u = rng.random()
        if u < spec.zero_mass:
            rate = 0.0
        elif u < spec.zero_mass + spec.one_mass:
            rate = 1.0
        else:
            rate = float(rng.beta(spec.beta_alpha, spec.beta_beta))
        tasks.append(TaskInstance.latent(f"task-{i:05d}", rate))
    return tasks


@dataclass(frozen=True)
class PolicyPopulationSpec:
    """Like :class:`PopulationSpec`, realized through a tabular policy.

    Each task gets its own context with one correct response; the correct
    response's logit is set so the initial pass rate hits the drawn target
    exactly.  The "zero" and "one" classes use small positive / near-one
    floors rather than exact 0/1 so that every prompt stays reachable by
    gradient ascent; the mid body is a Beta draw rescaled into
    ``(hard_pass_rate, easy_pass_rate)``.
    """

    size: int
    n_responses: int = 8
    zero_mass: float = 0.34
    one_mass: float = 0.12
    beta_alpha: float = 2.0
    beta_beta: float = 2.0
    hard_pass_rate: float = 0.05
    easy_pass_rate: float = 0.96

    def __post_init__(self) -> None:
        if self.size < 1 or self.n_responses < 2:
            raise ValueError("need size >= 1 and n_responses >= 2")
        if not (0.0 <= self.zero_mass and 0.0 <= self.one_mass
                and self.zero_mass + self.one_mass <= 1.0):
            raise ValueError("zero_mass and one_mass must be fractions summing to <= 1")
        if self.beta_alpha <= 0 or self.beta_beta <= 0:
            raise ValueError("Beta parameters must be positive")
        if not 0.0 < self.hard_pass_rate < self.easy_pass_rate < 1.0:
            raise ValueError("need 0 < hard_pass_rate < easy_pass_rate < 1")


def logit_for_pass_rate(p: float, n_responses: int) -> float:
    """Logit of the single correct response that yields pass rate ``p``.

    The remaining ``n_responses - 1`` responses sit at logit 0.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly inside (0, 1)")
    return math.log(p * (n_responses - 1) / (1.0 - p))


def make_policy_population(
    spec: PolicyPopulationSpec, rng: np.random.Generator
) -> tuple[PolicyParams, list[TaskInstance]]:
    """Build a policy and one policy-backed task per context.

    Initial pass rates follow the spec's mixture; deterministic given the
    stream.
    """
    m = spec.n_responses
    logits = np.zeros((spec.size, m))
    tasks = []
    for k in range(spec.size):
        u = rng.random()
        if u < spec.zero_mass:
            rate = spec.hard_pass_rate
        elif u < spec.zero_mass + spec.one_mass:
            rate = spec.easy_pass_rate
        else:
            body = float(rng.beta(spec.beta_alpha, spec.beta_beta))
            rate = spec.hard_pass_rate + body * (spec.easy_pass_rate - spec.hard_pass_rate)
        correct = int(rng.integers(m))
        logits[k, correct] = logit_for_pass_rate(rate, m)
        tasks.append(TaskInstance.policy_backed(f"task-{k:05d}", k, {correct}))
    return PolicyParams(logits), tasks


def mean_exact_pass_rate(params: PolicyParams, tasks: list[TaskInstance]) -> float:
    """Population mean of exact pass rates; latent tasks use their frozen rate."""
    total = 0.0
    for task in tasks:
        if task.kind == "latent":
            total += task.latent_pass_rate
        else:
            total += pass_rate_exact(params, task)
    return total / len(tasks)
