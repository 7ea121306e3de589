"""Tests for advantages, the gradient estimator, SNR measures, and bounds."""

import itertools
import math

import numpy as np
import pytest

from speedlab import (
    CurriculumShape,
    PolicyParams,
    TaskInstance,
    gradient_estimator_moments_exact,
    logit_for_pass_rate,
    logprob_grad,
    make_rng,
    pass_rate_exact,
    pass_rate_grad_exact,
    policy_gradient_estimate,
    policy_probs,
    rloo_advantages,
    screened_gradient_exact,
    screened_gradient_weight,
    screened_objective,
    snr_bound_sharp,
    snr_bound_simple,
    snr_exact,
    snr_monte_carlo,
)
from tests.test_policy import random_instance


def instance_with_pass_rate(p, n_responses=2):
    """Single-context instance whose exact pass rate equals ``p``."""
    logits = np.zeros((1, n_responses))
    logits[0, 0] = logit_for_pass_rate(p, n_responses)
    return PolicyParams(logits), TaskInstance.policy_backed("t", 0, {0})


class TestRlooAdvantages:
    def test_all_equal_rewards_vanish(self):
        assert np.all(rloo_advantages([1, 1, 1]) == 0.0)
        assert np.all(rloo_advantages([0, 0, 0, 0]) == 0.0)

    def test_hand_evaluated_mixed_case(self):
        np.testing.assert_allclose(
            rloo_advantages([1, 0, 0, 1]),
            [2 / 3, -2 / 3, -2 / 3, 2 / 3],
            atol=1e-15,
        )

    def test_rejects_short_and_nonbinary(self):
        with pytest.raises(ValueError):
            rloo_advantages([1])
        with pytest.raises(ValueError):
            rloo_advantages([0.5, 0.5])


class TestPolicyGradientEstimate:
    def test_all_equal_rewards_give_exact_zero(self):
        rng = make_rng(0)
        params, task = random_instance(rng)
        grads = [
            logprob_grad(params, task.context_id, y)
            for y in range(params.n_responses)
        ]
        estimate = policy_gradient_estimate([(grads[0], 1), (grads[1 % len(grads)], 1)])
        assert np.all(estimate == 0.0)

    def test_hand_computed_two_sample_case(self):
        # Uniform two-response policy, correct response 0, samples (0, 1):
        # advantages (+1, -1), scores (+-0.5), estimate (0.5, -0.5).
        params = PolicyParams(np.zeros((1, 2)))
        samples = [(logprob_grad(params, 0, 0), 1), (logprob_grad(params, 0, 1), 0)]
        np.testing.assert_allclose(
            policy_gradient_estimate(samples), [0.5, -0.5], atol=1e-15
        )

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            policy_gradient_estimate([(np.zeros(2), 1), (np.zeros(3), 0)])

    def test_expectation_matches_exact_gradient(self):
        # Weighted enumeration of the estimator over all sample tuples.
        params = PolicyParams(np.array([[0.3, -0.2]]))
        task = TaskInstance.policy_backed("t", 0, {0})
        probs = policy_probs(params, 0)
        n = 3
        total = np.zeros(params.n_params)
        for tup in itertools.product(range(2), repeat=n):
            weight = np.prod([probs[y] for y in tup])
            samples = [
                (logprob_grad(params, 0, y), int(y in task.correct_set)) for y in tup
            ]
            total += weight * policy_gradient_estimate(samples)
        np.testing.assert_allclose(
            total, pass_rate_grad_exact(params, task), atol=1e-12
        )


class TestMomentsExact:
    def test_degenerate_sets_give_zero_moments(self):
        rng = make_rng(1)
        params = PolicyParams(rng.normal(size=(1, 3)))
        for correct in (set(), {0, 1, 2}):
            task = TaskInstance.policy_backed("t", 0, correct)
            mean, trace = gradient_estimator_moments_exact(params, task, 3)
            assert np.all(mean == 0.0)
            assert trace == 0.0

    def test_mean_is_unbiased_on_random_instances(self):
        rng = make_rng(2)
        for _ in range(60):
            params, task = random_instance(rng, allow_degenerate=True)
            n = int(rng.integers(2, 5))
            mean, trace = gradient_estimator_moments_exact(params, task, n)
            exact = pass_rate_grad_exact(params, task)
            assert np.abs(mean - exact).max() <= 1e-10
            assert trace >= 0.0

    def test_enumeration_cap(self):
        params = PolicyParams(np.zeros((1, 4)))
        task = TaskInstance.policy_backed("t", 0, {0})
        with pytest.raises(ValueError):
            gradient_estimator_moments_exact(params, task, 4, cap=100)


class TestSnrExact:
    def test_degenerate_pass_rate_is_undefined(self):
        params = PolicyParams(np.zeros((1, 3)))
        for correct in (set(), {0, 1, 2}):
            task = TaskInstance.policy_backed("t", 0, correct)
            report = snr_exact(params, task, 3)
            assert report.undefined
            assert report.signal == 0.0
            assert report.noise == 0.0

    def test_snr_vanishes_as_pass_rate_saturates(self):
        task = TaskInstance.policy_backed("t", 0, {0})
        ratios = []
        for shift in np.linspace(0.0, 12.0, 13):
            params = PolicyParams(np.array([[shift, 0.0, 0.0]]))
            ratios.append(snr_exact(params, task, 4).ratio)
        peak = max(ratios)
        assert ratios[-1] < 1e-3 * peak

    def test_exact_below_sharp_bound(self):
        for n in (3, 4):
            for p in np.linspace(0.05, 0.95, 19):
                params, task = instance_with_pass_rate(float(p))
                exact = snr_exact(params, task, n).ratio
                bound = snr_bound_sharp(pass_rate_exact(params, task), n).value
                assert exact <= bound + 1e-9, (p, n, exact, bound)


class TestSnrMonteCarlo:
    def test_agrees_with_exact_within_stderr(self):
        params = PolicyParams(np.array([[0.4, -0.3, 0.1]]))
        task = TaskInstance.policy_backed("t", 0, {0, 2})
        exact = snr_exact(params, task, 4)
        mc = snr_monte_carlo(params, task, 4, trials=4000, rng=make_rng(3))
        assert mc.mc_stderr is not None and mc.mc_stderr > 0
        assert abs(mc.ratio - exact.ratio) <= 4 * mc.mc_stderr

    def test_zero_pass_rate_gives_zero_signal(self):
        params = PolicyParams(np.zeros((1, 2)))
        task = TaskInstance.policy_backed("t", 0, set())
        mc = snr_monte_carlo(params, task, 4, trials=400, rng=make_rng(4))
        assert mc.signal == 0.0
        assert mc.undefined

    def test_deterministic_given_seed(self):
        params = PolicyParams(np.array([[0.4, -0.3, 0.1]]))
        task = TaskInstance.policy_backed("t", 0, {0})
        a = snr_monte_carlo(params, task, 4, trials=800, rng=make_rng(5))
        b = snr_monte_carlo(params, task, 4, trials=800, rng=make_rng(5))
        assert a == b

    def test_rejects_few_trials(self):
        params = PolicyParams(np.zeros((1, 2)))
        task = TaskInstance.policy_backed("t", 0, {0})
        with pytest.raises(ValueError):
            snr_monte_carlo(params, task, 4, trials=50, rng=make_rng(6))


class TestSnrBounds:
    def test_simple_bound_vanishes_at_extremes(self):
        assert snr_bound_simple(0.0, 8).value == 0.0
        assert snr_bound_simple(1.0, 8).value == 0.0

    def test_simple_bound_arithmetic(self):
        value, valid = snr_bound_simple(0.1, 8)
        assert value == pytest.approx(2.88, abs=1e-12)
        assert valid

    def test_simple_bound_flags_midrange(self):
        value, valid = snr_bound_simple(0.5, 8)
        assert value == pytest.approx(8.0, abs=1e-12)
        assert not valid

    def test_sharp_bound_boundary_limit(self):
        assert snr_bound_sharp(0.0, 5) == (0.0, True)
        assert snr_bound_sharp(1.0, 5) == (0.0, True)

    def test_sharp_bound_arithmetic(self):
        value, boundary = snr_bound_sharp(0.1, 3)
        # bracket = 1/(3 * 0.09) - 1
        expected = 1.0 / (1.0 / 0.27 - 1.0)
        assert value == pytest.approx(expected, rel=1e-12)
        assert value == pytest.approx(0.3699, abs=1e-4)
        assert not boundary

    def test_sharp_below_simple_in_validity_region(self):
        for n in (3, 4, 8):
            for p in np.concatenate([np.linspace(0.01, 0.24, 20),
                                     np.linspace(0.76, 0.99, 20)]):
                simple = snr_bound_simple(float(p), n)
                assert simple.valid
                sharp = snr_bound_sharp(float(p), n).value
                assert sharp <= simple.value + 1e-9


ALL_SHAPES = [
    CurriculumShape(ni, nc) for ni in range(1, 9) for nc in range(1, 24)
]


class TestScreeningWeight:
    def test_boundary_value_for_larger_screens(self):
        for ni in (2, 3, 5):
            shape = CurriculumShape(ni, 7)
            assert screened_gradient_weight(0.0, shape) == pytest.approx(
                ni / shape.n_total, abs=1e-12
            )

    def test_single_draw_screen_rejects_everything(self):
        shape = CurriculumShape(1, 23)
        for p in (0.0, 0.25, 0.5, 0.9, 1.0):
            assert screened_gradient_weight(p, shape) == pytest.approx(0.0, abs=1e-12)

    def test_pinned_value(self):
        # 1 - (20/24)*2*(1/16) - (80/552)*2*(1/16) = 969/1104, confirmed by
        # the enumeration oracle in TestScreenedGradientExact.
        shape = CurriculumShape(4, 20)
        assert screened_gradient_weight(0.5, shape) == pytest.approx(
            969 / 1104, rel=1e-12
        )

    def test_symmetry(self):
        rng = make_rng(7)
        for shape in ALL_SHAPES[::13]:
            for p in rng.random(20):
                a = screened_gradient_weight(float(p), shape)
                b = screened_gradient_weight(float(1 - p), shape)
                assert a == pytest.approx(b, abs=1e-12)

    def test_nonnegative_on_grid_all_shapes(self):
        grid = np.linspace(0.0, 1.0, 1001)
        for shape in ALL_SHAPES:
            values = np.array([screened_gradient_weight(float(p), shape) for p in grid])
            assert values.min() >= -1e-12, (shape, values.min())


class TestScreenedObjective:
    def test_pinned_at_zero(self):
        for shape in ALL_SHAPES[::17]:
            assert screened_objective(0.0, shape) == 0.0

    def test_derivative_matches_weight(self):
        step = 1e-5
        for shape in ALL_SHAPES[::11]:
            for p in np.linspace(0.02, 0.98, 11):
                fd = (
                    screened_objective(float(p + step), shape)
                    - screened_objective(float(p - step), shape)
                ) / (2 * step)
                assert fd == pytest.approx(
                    screened_gradient_weight(float(p), shape), abs=1e-8
                )

    def test_monotone_on_grid(self):
        grid = np.linspace(0.0, 1.0, 1001)
        for shape in ALL_SHAPES[::23]:
            values = np.array([screened_objective(float(p), shape) for p in grid])
            assert np.all(np.diff(values) >= -1e-12)


class TestScreenedGradientExact:
    def test_degenerate_pass_rates_give_zero(self):
        shape = CurriculumShape(2, 3)
        params = PolicyParams(np.zeros((1, 3)))
        for correct in (set(), {0, 1, 2}):
            task = TaskInstance.policy_backed("t", 0, correct)
            assert np.all(screened_gradient_exact(params, task, shape) == 0.0)

    def test_matches_weighted_exact_gradient(self):
        rng = make_rng(8)
        for _ in range(40):
            params, task = random_instance(rng)
            shape = CurriculumShape(
                int(rng.integers(1, 4)), int(rng.integers(1, 4))
            )
            enumerated = screened_gradient_exact(params, task, shape)
            p = pass_rate_exact(params, task)
            closed = screened_gradient_weight(p, shape) * pass_rate_grad_exact(params, task)
            assert np.abs(enumerated - closed).max() <= 1e-8

    def test_matches_raw_tuple_enumeration(self):
        # Independent cross-check of the reward-class grouping against a
        # brute-force walk over every response tuple.
        params = PolicyParams(np.array([[0.5, -0.2]]))
        task = TaskInstance.policy_backed("t", 0, {0})
        shape = CurriculumShape(2, 2)
        probs = policy_probs(params, 0)
        n = shape.n_total
        expected = np.zeros(2)
        for tup in itertools.product(range(2), repeat=n):
            weight = np.prod([probs[y] for y in tup])
            rewards = np.array([float(y in task.correct_set) for y in tup])
            w_init = rewards[: shape.n_init].sum()
            if w_init == 0 or w_init == shape.n_init:
                continue
            adv = rewards - (rewards.sum() - rewards) / (n - 1)
            ghat = np.zeros(2)
            for a, y in zip(adv, tup):
                ghat[y] += a
                ghat -= a * probs
            expected += weight * ghat / n
        np.testing.assert_allclose(
            screened_gradient_exact(params, task, shape), expected, atol=1e-12
        )

    def test_finite_differences_of_objective_composition(self):
        # d/dtheta of objective(pass_rate(theta)) equals the screened gradient.
        rng = make_rng(9)
        step = 1e-5
        for _ in range(10):
            params, task = random_instance(rng)
            shape = CurriculumShape(int(rng.integers(1, 4)), int(rng.integers(1, 4)))
            grad = screened_gradient_exact(params, task, shape)
            for idx in range(params.n_params):
                plus = params.logits.flatten()
                minus = plus.copy()
                plus[idx] += step
                minus[idx] -= step
                kshape = params.logits.shape
                fd = (
                    screened_objective(
                        pass_rate_exact(PolicyParams(plus.reshape(kshape)), task), shape
                    )
                    - screened_objective(
                        pass_rate_exact(PolicyParams(minus.reshape(kshape)), task), shape
                    )
                ) / (2 * step)
                assert abs(fd - grad[idx]) <= 1e-5


class TestCurriculumShape:
    def test_rejects_empty_phases(self):
        with pytest.raises(ValueError):
            CurriculumShape(0, 5)
        with pytest.raises(ValueError):
            CurriculumShape(5, 0)

    def test_total(self):
        assert CurriculumShape(4, 20).n_total == 24
