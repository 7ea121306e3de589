"""Tabular softmax policy with exact probabilities, pass rates, and gradients.

A policy is a logit table over ``(context, response)`` pairs; a response is a
single categorical draw from the context's softmax row.  Because every
quantity (probabilities, pass rates, gradients) has a closed form here, this
module is the ground truth that the estimator and scheduler layers are
checked against.

Gradients are returned as flat vectors of length ``n_contexts * n_responses``
laid out row-major by context, so they are directly comparable and addable
across modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

TaskKind = Literal["policy", "latent"]

#: Response id reported for draws from latent tasks, which have no response space.
LATENT_RESPONSE = -1


@dataclass(frozen=True)
class PolicyParams:
    """Immutable logit table; shape ``(n_contexts, n_responses)``."""

    logits: np.ndarray

    def __post_init__(self) -> None:
        logits = np.array(self.logits, dtype=float)
        if logits.ndim != 2:
            raise ValueError("logits must be a 2-d (context, response) table")
        k, m = logits.shape
        if k < 1 or m < 2:
            raise ValueError(f"need >= 1 context and >= 2 responses, got {k}x{m}")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @property
    def n_contexts(self) -> int:
        return self.logits.shape[0]

    @property
    def n_responses(self) -> int:
        return self.logits.shape[1]

    @property
    def n_params(self) -> int:
        return self.logits.size


@dataclass(frozen=True)
class TaskInstance:
    """A prompt: policy-backed (context + correct responses) or latent (fixed rate).

    Latent tasks carry a frozen true pass rate and exist for pure
    scheduling/throughput simulation; they have no gradients.
    """

    id: str
    kind: TaskKind
    context_id: int = 0
    correct_set: frozenset[int] = field(default_factory=frozenset)
    latent_pass_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "policy":
            if self.context_id < 0:
                raise ValueError("context_id must be nonnegative")
            if any(r < 0 for r in self.correct_set):
                raise ValueError("correct_set entries must be nonnegative response ids")
        elif self.kind == "latent":
            if not 0.0 <= self.latent_pass_rate <= 1.0:
                raise ValueError("latent_pass_rate must lie in [0, 1]")
        else:
            raise ValueError(f"unknown task kind {self.kind!r}")

    @classmethod
    def policy_backed(cls, task_id: str, context_id: int, correct_set) -> "TaskInstance":
        return cls(id=task_id, kind="policy", context_id=context_id,
                   correct_set=frozenset(correct_set))

    @classmethod
    def latent(cls, task_id: str, pass_rate: float) -> "TaskInstance":
        return cls(id=task_id, kind="latent", latent_pass_rate=pass_rate)


def _check_context(params: PolicyParams, context: int) -> None:
    if not 0 <= context < params.n_contexts:
        raise IndexError(f"context {context} out of range [0, {params.n_contexts})")


def _check_policy_task(params: PolicyParams, task: TaskInstance) -> None:
    if task.kind != "policy":
        raise ValueError(f"task {task.id!r} is latent; its pass rate is not policy-defined")
    _check_context(params, task.context_id)
    if task.correct_set and max(task.correct_set) >= params.n_responses:
        raise ValueError(
            f"task {task.id!r} correct_set exceeds response range "
            f"[0, {params.n_responses})"
        )


def policy_probs(params: PolicyParams, context: int) -> np.ndarray:
    """Softmax probabilities over responses for one context row."""
    _check_context(params, context)
    row = params.logits[context]
    shifted = row - row.max()
    e = np.exp(shifted)
    return e / e.sum()


def pass_rate_exact(params: PolicyParams, task: TaskInstance) -> float:
    """Probability that a draw from the task's context lands in its correct set."""
    _check_policy_task(params, task)
    if not task.correct_set:
        return 0.0
    probs = policy_probs(params, task.context_id)
    return min(1.0, float(probs[sorted(task.correct_set)].sum()))


def pass_rate_grad_exact(params: PolicyParams, task: TaskInstance) -> np.ndarray:
    """Exact gradient of the pass rate with respect to the flattened logits.

    Entry ``(x, y)`` is ``pi(y) * (1[y in correct] - P)`` on the task's
    context row and zero elsewhere.  When the correct set is empty or covers
    every response the pass rate is constant, so the gradient is exactly the
    zero vector.
    """
    _check_policy_task(params, task)
    grad = np.zeros(params.n_params)
    m = params.n_responses
    if not task.correct_set or len(task.correct_set) == m:
        return grad
    probs = policy_probs(params, task.context_id)
    indicator = np.zeros(m)
    indicator[sorted(task.correct_set)] = 1.0
    p = probs @ indicator
    row = probs * (indicator - p)
    grad[task.context_id * m:(task.context_id + 1) * m] = row
    return grad


def logprob_grad(params: PolicyParams, context: int, response: int) -> np.ndarray:
    """Score vector: gradient of ``log pi(response | context)`` in flat layout.

    The context row holds ``1[y = response] - pi(y)``; all other rows are
    zero, so the row always sums to zero.
    """
    _check_context(params, context)
    m = params.n_responses
    if not 0 <= response < m:
        raise IndexError(f"response {response} out of range [0, {m})")
    probs = policy_probs(params, context)
    grad = np.zeros(params.n_params)
    row = -probs
    row[response] += 1.0
    grad[context * m:(context + 1) * m] = row
    return grad


def score_row(probs: np.ndarray, response: int) -> np.ndarray:
    """Context-row slice of the score vector, from a saved probability row."""
    row = -np.asarray(probs, dtype=float)
    row[response] += 1.0
    return row


def sample_responses(
    params: PolicyParams | None,
    task: TaskInstance,
    n: int,
    rng: np.random.Generator,
) -> list[tuple[int, int]]:
    """Draw ``n`` independent ``(response_id, reward)`` pairs for a task.

    Policy-backed tasks draw responses from the context's softmax row and
    score them by correct-set membership; latent tasks draw Bernoulli rewards
    at the frozen rate with ``LATENT_RESPONSE`` as the response id.
    """
    if n < 1:
        raise ValueError("need n >= 1 draws")
    if task.kind == "latent":
        rewards = rng.random(n) < task.latent_pass_rate
        return [(LATENT_RESPONSE, int(r)) for r in rewards]
    if params is None:
        raise ValueError("policy-backed sampling needs policy parameters")
    _check_policy_task(params, task)
    probs = policy_probs(params, task.context_id)
    # Inverse-CDF sampling; the final cumulative weight is forced to 1 so a
    # uniform draw at the top edge cannot index past the last response.
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    draws = np.searchsorted(cdf, rng.random(n), side="right")
    correct = task.correct_set
    return [(int(y), int(y in correct)) for y in draws]
