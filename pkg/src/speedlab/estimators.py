"""Policy-gradient estimators, their exact moments, SNR measures, and bounds.

Three layers live here:

* the estimators themselves (leave-one-out advantages and the Monte Carlo
  policy gradient built from them);
* brute-force enumeration oracles that compute the estimator's exact mean
  and covariance trace on a tabular policy, and from them the exact
  signal-to-noise ratio;
* closed forms: two SNR upper bounds as functions of ``(pass rate, n)``, and
  the weight function that two-phase screening applies to a prompt's exact
  gradient, together with its antiderivative.

The enumeration oracles are deliberately independent of the closed forms so
that each certifies the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .policy import PolicyParams, TaskInstance, pass_rate_grad_exact, policy_probs

#: Default ceiling on the number of response tuples a raw enumeration may visit.
ENUMERATION_CAP = 10_000_000

_ENUM_CHUNK = 1 << 15


@dataclass(frozen=True)
class CurriculumShape:
    """Generation split: screening draws, continuation draws, and their total."""

    n_init: int
    n_cont: int

    def __post_init__(self) -> None:
        if self.n_init < 1 or self.n_cont < 1:
            raise ValueError("n_init and n_cont must both be >= 1")

    @property
    def n_total(self) -> int:
        return self.n_init + self.n_cont


@dataclass(frozen=True)
class SNRReport:
    """Signal-to-noise ratio of a gradient estimator.

    ``signal`` is the squared norm of the estimator's mean, ``noise`` the
    trace of its covariance.  When both vanish (pass rate exactly 0 or 1)
    the ratio carries no information and ``undefined`` is set; when only the
    noise vanishes the ratio is ``inf``.
    """

    signal: float
    noise: float
    ratio: float
    method: str
    undefined: bool = False
    mc_stderr: float | None = None

    def __post_init__(self) -> None:
        if self.signal < 0 or self.noise < 0:
            raise ValueError("signal and noise must be nonnegative")


def _snr_report(signal: float, noise: float, method: str,
                mc_stderr: float | None = None) -> SNRReport:
    if noise > 0.0:
        return SNRReport(signal, noise, signal / noise, method, mc_stderr=mc_stderr)
    if signal > 0.0:
        return SNRReport(signal, noise, math.inf, method, mc_stderr=mc_stderr)
    return SNRReport(signal, noise, math.nan, method, undefined=True,
                     mc_stderr=mc_stderr)


class BoundValue(NamedTuple):
    """An SNR upper bound plus the flag for its certified validity region."""

    value: float
    valid: bool


class SharpBoundValue(NamedTuple):
    """Sharp SNR bound; ``boundary`` marks the continuous limit at p in {0, 1}."""

    value: float
    boundary: bool


def rloo_advantages(rewards) -> np.ndarray:
    """Leave-one-out advantages: each reward minus the mean of the others.

    Requires at least two rewards (the baseline averages the remaining
    ``n - 1``).  All-equal rewards yield exactly zero advantages.
    """
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need a 1-d reward vector with n >= 2")
    if not np.all((r == 0.0) | (r == 1.0)):
        raise ValueError("rewards must be 0/1 bits")
    n = r.size
    total = r.sum()
    return r - (total - r) / (n - 1)


def policy_gradient_estimate(samples: list[tuple[np.ndarray, int]]) -> np.ndarray:
    """Monte Carlo policy gradient with leave-one-out advantages.

    ``samples`` holds ``(score_vector, reward)`` pairs; the result is
    ``(1/n) * sum_i advantage_i * score_i`` with a fixed summation order.
    All-equal rewards produce the exact zero vector.
    """
    if len(samples) < 2:
        raise ValueError("need >= 2 samples for a leave-one-out baseline")
    dim = samples[0][0].shape
    for grad, _ in samples:
        if grad.shape != dim:
            raise ValueError("score vectors disagree in dimension")
    rewards = np.array([reward for _, reward in samples], dtype=float)
    adv = rloo_advantages(rewards)
    if np.all(adv == 0.0):
        return np.zeros(dim)
    out = np.zeros(dim)
    for a, (grad, _) in zip(adv, samples):
        out += a * grad
    return out / len(samples)


def _correct_indicator(params: PolicyParams, task: TaskInstance) -> np.ndarray:
    indicator = np.zeros(params.n_responses)
    if task.correct_set:
        indicator[sorted(task.correct_set)] = 1.0
    return indicator


def _embed_row(params: PolicyParams, context: int, row: np.ndarray) -> np.ndarray:
    full = np.zeros(params.n_params)
    m = params.n_responses
    full[context * m:(context + 1) * m] = row
    return full


def _tuple_chunks(m: int, n: int, total: int):
    """Yield ``(chunk, n)`` index arrays decoding 0..total-1 in base ``m``."""
    place = m ** np.arange(n, dtype=np.int64)
    for lo in range(0, total, _ENUM_CHUNK):
        codes = np.arange(lo, min(lo + _ENUM_CHUNK, total), dtype=np.int64)
        yield (codes[:, None] // place[None, :]) % m


def _enumerated_estimates(params: PolicyParams, task: TaskInstance, n: int):
    """Yield ``(weights, per-tuple row gradients)`` over all response tuples."""
    probs = policy_probs(params, task.context_id)
    indicator = _correct_indicator(params, task)
    m = params.n_responses
    total = m ** n
    for tuples in _tuple_chunks(m, n, total):
        t = tuples.shape[0]
        w = probs[tuples].prod(axis=1)
        r = indicator[tuples]
        adv = r - (r.sum(axis=1, keepdims=True) - r) / (n - 1)
        g = np.zeros((t, m))
        rows = np.repeat(np.arange(t), n)
        np.add.at(g, (rows, tuples.ravel()), adv.ravel())
        g -= adv.sum(axis=1, keepdims=True) * probs[None, :]
        g /= n
        yield w, g


def gradient_estimator_moments_exact(
    params: PolicyParams,
    task: TaskInstance,
    n: int,
    cap: int = ENUMERATION_CAP,
) -> tuple[np.ndarray, float]:
    """Exact mean and covariance trace of the policy-gradient estimator.

    Enumerates every response tuple ``(y_1, ..., y_n)`` weighted by its
    sampling probability and evaluates the estimator on each, so the result
    makes no appeal to any closed form.  ``(mean, covariance_trace)`` is
    returned with the mean in flat layout.
    """
    if n < 2:
        raise ValueError("the estimator needs n >= 2 draws")
    if task.kind != "policy":
        raise ValueError("enumeration needs a policy-backed task")
    m = params.n_responses
    if m ** n > cap:
        raise ValueError(f"enumeration of {m}^{n} tuples exceeds cap {cap}")
    mean_row = np.zeros(m)
    for w, g in _enumerated_estimates(params, task, n):
        mean_row += w @ g
    trace = 0.0
    for w, g in _enumerated_estimates(params, task, n):
        diff = g - mean_row[None, :]
        trace += float(w @ (diff * diff).sum(axis=1))
    return _embed_row(params, task.context_id, mean_row), trace


def snr_exact(
    params: PolicyParams,
    task: TaskInstance,
    n: int,
    cap: int = ENUMERATION_CAP,
) -> SNRReport:
    """Exact SNR of the estimator, from the enumeration oracle's moments."""
    mean, trace = gradient_estimator_moments_exact(params, task, n, cap=cap)
    signal = float(mean @ mean)
    return _snr_report(signal, trace, "enumeration")


def snr_monte_carlo(
    params: PolicyParams,
    task: TaskInstance,
    n: int,
    trials: int,
    rng: np.random.Generator,
    blocks: int = 8,
) -> SNRReport:
    """Sample-based SNR estimate with a delta-method standard error.

    Trials are grouped into blocks; within each block the squared-mean
    signal is estimated by the inner product of two independent halves'
    means (unbiased, unlike the squared norm of a single mean, which noise
    inflates), and the noise by the unbiased covariance trace.  Block
    spreads give the standard error of the ratio.
    """
    if trials < 100:
        raise ValueError("need trials >= 100")
    if task.kind != "policy":
        raise ValueError("needs a policy-backed task")
    probs = policy_probs(params, task.context_id)
    indicator = _correct_indicator(params, task)
    m = params.n_responses

    per_block = trials // blocks
    half = per_block // 2
    signal_blocks = np.empty(blocks)
    noise_blocks = np.empty(blocks)
    for b in range(blocks):
        draws = rng.choice(m, size=(per_block, n), p=probs)
        r = indicator[draws]
        adv = r - (r.sum(axis=1, keepdims=True) - r) / (n - 1)
        g = np.zeros((per_block, m))
        rows = np.repeat(np.arange(per_block), n)
        np.add.at(g, (rows, draws.ravel()), adv.ravel())
        g -= adv.sum(axis=1, keepdims=True) * probs[None, :]
        g /= n
        mean_a = g[:half].mean(axis=0)
        mean_b = g[half:].mean(axis=0)
        signal_blocks[b] = mean_a @ mean_b
        centered = g - g.mean(axis=0, keepdims=True)
        noise_blocks[b] = (centered * centered).sum() / (per_block - 1)

    signal = float(signal_blocks.mean())
    noise = float(noise_blocks.mean())
    stderr = _ratio_stderr(signal_blocks, noise_blocks)
    return _snr_report(max(signal, 0.0), max(noise, 0.0), "monte-carlo",
                       mc_stderr=stderr)


def _ratio_stderr(signal_blocks: np.ndarray, noise_blocks: np.ndarray) -> float:
    """Delta-method standard error of mean(signal)/mean(noise) over blocks."""
    k = signal_blocks.size
    s, v = signal_blocks.mean(), noise_blocks.mean()
    if v <= 0.0:
        return 0.0
    var_s = signal_blocks.var(ddof=1) / k
    var_v = noise_blocks.var(ddof=1) / k
    cov = np.cov(signal_blocks, noise_blocks, ddof=1)[0, 1] / k
    var_ratio = (var_s / v**2) + (s**2 * var_v / v**4) - (2 * s * cov / v**3)
    return float(math.sqrt(max(var_ratio, 0.0)))


def snr_bound_simple(p: float, n: int) -> BoundValue:
    """Quadratic SNR upper bound ``4 * n * p * (1 - p)``.

    The bound is certified only for ``n >= 3`` with ``p < 1/4`` or
    ``p > 3/4``; the flag reports whether ``(p, n)`` lies in that region.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    valid = n >= 3 and (p < 0.25 or p > 0.75)
    return BoundValue(4.0 * n * p * (1.0 - p), valid)


def snr_bound_sharp(p: float, n: int) -> SharpBoundValue:
    """Sharp SNR upper bound from the conditional-mean variance of the estimator.

    Returns ``1 / (1/(n p (1-p)) + (n-2)(n-3)/(n(n-1)) - 1)``.  At
    ``p in {0, 1}`` the closed form divides by zero but its limit is 0,
    which is returned with the boundary flag set.  The bracket is provably
    at least ``2/(n(n-1))``; a nonpositive bracket would be a numerical
    impossibility and raises.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n < 2:
        raise ValueError("n must be >= 2")
    if p == 0.0 or p == 1.0:
        return SharpBoundValue(0.0, True)
    bracket = 1.0 / (n * p * (1.0 - p)) + (n - 2) * (n - 3) / (n * (n - 1)) - 1.0
    if bracket <= 0.0:
        raise ArithmeticError(f"bracket {bracket} <= 0 at p={p}, n={n}")
    return SharpBoundValue(1.0 / bracket, False)


def screened_gradient_weight(p: float, shape: CurriculumShape) -> float:
    """Weight that strict two-phase screening applies to a prompt's gradient.

    A prompt whose screening rewards are all 0 or all 1 is dropped, so in
    expectation the full-batch gradient is this factor times the exact
    pass-rate gradient.  ``0 ** 0`` is taken as 1 in the trailing terms so
    the ``n_init = 1`` case matches the enumeration limit.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    ni, n = shape.n_init, shape.n_total
    nc = shape.n_cont
    q = 1.0 - p
    lead = 1.0 - (nc / n) * (p**ni + q**ni)
    cross = (ni * nc / (n * (n - 1))) * (p * q ** (ni - 1) + q * p ** (ni - 1))
    return lead - cross


def screened_objective(p: float, shape: CurriculumShape) -> float:
    """Antiderivative of :func:`screened_gradient_weight`, pinned to 0 at p=0.

    This is the per-prompt objective that screened training implicitly
    ascends as a function of the pass rate; it is monotone nondecreasing on
    [0, 1] for every valid shape.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    ni, n = shape.n_init, shape.n_total
    nc = shape.n_cont

    def raw(q: float) -> float:
        u = 1.0 - q
        a = q - (nc / (n * (ni + 1))) * (q ** (ni + 1) - u ** (ni + 1))
        b = (nc / (n * (n - 1) * (ni + 1))) * (
            (1.0 + ni * q) * u**ni - q**ni * (ni * u + 1.0)
        )
        return a + b

    return raw(p) - raw(0.0)


def screened_gradient_exact(
    params: PolicyParams,
    task: TaskInstance,
    shape: CurriculumShape,
    max_patterns: int = 1 << 22,
) -> np.ndarray:
    """Exact expectation of the screened policy-gradient estimator.

    Enumerates reward-count classes rather than raw response tuples: the
    estimator's conditional mean depends on a tuple only through its reward
    pattern, and symmetric patterns share one advantage profile, so summing
    over ``(screening successes, continuation successes)`` with binomial
    multiplicities is exact at cost O(n_init * n_cont).

    Class-conditional score means are computed by direct summation over the
    response space, keeping this oracle independent of the closed-form
    weight it certifies.
    """
    if task.kind != "policy":
        raise ValueError("enumeration needs a policy-backed task")
    ni, nc, n = shape.n_init, shape.n_cont, shape.n_total
    if (ni + 1) * (nc + 1) > max_patterns:
        raise ValueError("reward-class enumeration exceeds cap")
    probs = policy_probs(params, task.context_id)
    indicator = _correct_indicator(params, task)
    p = float(probs @ indicator)
    m = params.n_responses

    out = np.zeros(m)
    if p <= 0.0 or p >= 1.0:
        return _embed_row(params, task.context_id, out)

    # Mean score over a correct draw and over an incorrect draw.
    mean_correct = (probs * indicator - p * probs) / p
    mean_incorrect = (probs * (1.0 - indicator) - (1.0 - p) * probs) / (1.0 - p)

    for w_init in range(1, ni):  # all-0 and all-ni screening patterns are dropped
        for w_cont in range(nc + 1):
            w = w_init + w_cont
            patterns = math.comb(ni, w_init) * math.comb(nc, w_cont)
            prob = patterns * p**w * (1.0 - p) ** (n - w)
            if prob == 0.0:
                continue
            adv_correct = 1.0 - (w - 1) / (n - 1)
            adv_incorrect = -w / (n - 1)
            contribution = (
                w * adv_correct * mean_correct
                + (n - w) * adv_incorrect * mean_incorrect
            ) / n
            out += prob * contribution
    return _embed_row(params, task.context_id, out)
