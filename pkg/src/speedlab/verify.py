"""Machine-checkable verification suites over the library's invariants.

Each suite runs a set of named checks and returns a structured report.
Checks normally pass or fail; the SNR bound-chain comparison additionally
reports a ``discrepancy`` status with the offending grid points attached,
so a counterexample to the bound is surfaced verbatim rather than folded
into a bare failure (or worse, silently tolerated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    CurriculumShape,
    gradient_estimator_moments_exact,
    screened_gradient_exact,
    screened_gradient_weight,
    screened_objective,
    snr_bound_sharp,
    snr_bound_simple,
    snr_exact,
)
from .metrics import records_to_jsonl
from .policy import (
    PolicyParams,
    TaskInstance,
    pass_rate_exact,
    pass_rate_grad_exact,
)
from .population import PopulationSpec, logit_for_pass_rate, make_population
from .rng import make_rng
from .trainer import QuadraticHarness, improvement_bound_check

SUITES = ("snr", "phi", "scheduler", "fact1")


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str  # "pass" | "fail" | "discrepancy"
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.status == "pass" for c in self.checks)

    @property
    def discrepancies(self) -> list[CheckResult]:
        return [c for c in self.checks if c.status == "discrepancy"]

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "status": "pass" if self.passed else "fail",
            "checks": [
                {"name": c.name, "status": c.status, "details": c.details}
                for c in self.checks
            ],
        }


def _random_instance(rng, max_contexts=2, max_responses=4):
    k = int(rng.integers(1, max_contexts + 1))
    m = int(rng.integers(2, max_responses + 1))
    params = PolicyParams(rng.normal(size=(k, m)))
    n_correct = int(rng.integers(0, m + 1))
    correct = set(rng.choice(m, size=n_correct, replace=False).tolist())
    task = TaskInstance.policy_backed("t", int(rng.integers(k)), correct)
    return params, task


def _engineered_instance(p: float):
    logits = np.zeros((1, 2))
    logits[0, 0] = logit_for_pass_rate(p, 2)
    return PolicyParams(logits), TaskInstance.policy_backed("t", 0, {0})


def check_unbiasedness(rng, instances: int = 200, tol: float = 1e-10) -> CheckResult:
    """Enumeration mean of the estimator equals the exact pass-rate gradient."""
    worst = 0.0
    for _ in range(instances):
        params, task = _random_instance(rng)
        n = int(rng.integers(2, 5))
        mean, _ = gradient_estimator_moments_exact(params, task, n)
        dev = float(np.abs(mean - pass_rate_grad_exact(params, task)).max())
        worst = max(worst, dev)
    status = "pass" if worst <= tol else "fail"
    return CheckResult("unbiasedness", status,
                       {"instances": instances, "max_abs_deviation": worst,
                        "tolerance": tol})


def check_snr_limits(rng, paths: int = 20, n: int = 4) -> CheckResult:
    """SNR collapses below 1e-3 of its peak as the pass rate saturates.

    Half the paths drive the pass rate toward 1, half toward 0; each must
    also decrease strictly once the pass rate leaves [0.05, 0.95].
    """
    failures = []
    for path in range(paths):
        toward_one = path % 2 == 0
        m = int(rng.integers(2, 5))
        logits = rng.normal(scale=0.5, size=(1, m))
        n_correct = int(rng.integers(1, m))
        correct = sorted(rng.choice(m, size=n_correct, replace=False).tolist())
        sign = 1.0 if toward_one else -1.0
        ratios, rates = [], []
        for shift in np.linspace(0.0, 14.0, 29):
            shifted = logits.copy()
            shifted[0, correct] += sign * shift
            params = PolicyParams(shifted)
            task = TaskInstance.policy_backed("t", 0, set(correct))
            ratios.append(snr_exact(params, task, n).ratio)
            rates.append(pass_rate_exact(params, task))
        peak = max(ratios)
        tail = ratios[-1]
        if not tail < 1e-3 * peak:
            failures.append({"path": path, "tail": tail, "peak": peak})
        for i in range(1, len(ratios)):
            outside = rates[i] > 0.95 if toward_one else rates[i] < 0.05
            if outside and rates[i - 1] != rates[i] and not ratios[i] < ratios[i - 1]:
                failures.append({"path": path, "not_decreasing_at": rates[i]})
    status = "pass" if not failures else "fail"
    return CheckResult("snr_limits", status, {"paths": paths, "failures": failures})


def check_bound_chain(tol: float = 1e-9) -> CheckResult:
    """exact <= sharp bound <= simple bound on the engineered validity grid.

    Violations beyond tolerance are emitted as structured discrepancies,
    each carrying the grid point and both sides of the failed comparison.
    """
    discrepancies = []
    points = 0
    for n in (3, 4):
        for i in range(1, 100):
            p = i / 100.0
            params, task = _engineered_instance(p)
            exact_p = pass_rate_exact(params, task)
            exact = snr_exact(params, task, n)
            sharp = snr_bound_sharp(exact_p, n)
            simple = snr_bound_simple(exact_p, n)
            points += 1
            if exact.ratio > sharp.value + tol:
                discrepancies.append({
                    "comparison": "snr_exact <= snr_bound_sharp",
                    "p": exact_p, "n": n,
                    "snr_exact": exact.ratio, "snr_bound_sharp": sharp.value,
                })
            if simple.valid and sharp.value > simple.value + tol:
                discrepancies.append({
                    "comparison": "snr_bound_sharp <= snr_bound_simple",
                    "p": exact_p, "n": n,
                    "snr_bound_sharp": sharp.value,
                    "snr_bound_simple": simple.value,
                })
    status = "pass" if not discrepancies else "discrepancy"
    return CheckResult("bound_chain", status,
                       {"grid_points": points, "tolerance": tol,
                        "discrepancies": discrepancies})


def snr_suite(seed: int = 0) -> SuiteReport:
    rng = make_rng(seed)
    return SuiteReport("snr", [
        check_unbiasedness(rng),
        check_snr_limits(rng),
        check_bound_chain(),
    ])


def check_weight_monotonicity() -> CheckResult:
    """Screening weight nonnegative on a 1001-point grid for every shape."""
    grid = np.linspace(0.0, 1.0, 1001)
    worst = (0.0, None)
    for ni in range(1, 9):
        for nc in range(1, 24):
            shape = CurriculumShape(ni, nc)
            values = [screened_gradient_weight(float(p), shape) for p in grid]
            low = min(values)
            if low < worst[0]:
                worst = (low, {"n_init": ni, "n_cont": nc})
    status = "pass" if worst[0] >= -1e-12 else "fail"
    return CheckResult("weight_monotonicity", status,
                       {"min_weight": worst[0], "at": worst[1],
                        "shapes": 8 * 23, "grid_points": 1001})


def check_objective_derivative(tol: float = 1e-8) -> CheckResult:
    """Central differences of the objective match the weight function."""
    step = 1e-5
    worst = 0.0
    for ni in range(1, 9):
        for nc in (1, 5, 12, 23):
            shape = CurriculumShape(ni, nc)
            for p in np.linspace(0.02, 0.98, 25):
                fd = (screened_objective(float(p + step), shape)
                      - screened_objective(float(p - step), shape)) / (2 * step)
                worst = max(worst, abs(fd - screened_gradient_weight(float(p), shape)))
    status = "pass" if worst <= tol else "fail"
    return CheckResult("objective_derivative", status,
                       {"max_abs_deviation": worst, "tolerance": tol})


def check_screened_equivalence(rng, instances: int = 100,
                               tol_identity: float = 1e-8,
                               tol_fd: float = 1e-5) -> CheckResult:
    """Screened-gradient enumeration equals weight * exact gradient, and
    matches finite differences of the composed objective."""
    worst_identity = 0.0
    worst_fd = 0.0
    shapes = [(ni, nc) for ni in (1, 2, 3) for nc in (1, 2, 3)]
    step = 1e-5
    for i in range(instances):
        params, task = _random_instance(rng)
        ni, nc = shapes[i % len(shapes)]
        shape = CurriculumShape(ni, nc)
        enumerated = screened_gradient_exact(params, task, shape)
        p = pass_rate_exact(params, task)
        closed = screened_gradient_weight(p, shape) * pass_rate_grad_exact(params, task)
        worst_identity = max(worst_identity,
                             float(np.abs(enumerated - closed).max()))
        flat = params.logits.flatten()
        for idx in range(flat.size):
            plus, minus = flat.copy(), flat.copy()
            plus[idx] += step
            minus[idx] -= step
            kshape = params.logits.shape
            fd = (
                screened_objective(
                    pass_rate_exact(PolicyParams(plus.reshape(kshape)), task), shape)
                - screened_objective(
                    pass_rate_exact(PolicyParams(minus.reshape(kshape)), task), shape)
            ) / (2 * step)
            worst_fd = max(worst_fd, abs(fd - enumerated[idx]))
    status = ("pass" if worst_identity <= tol_identity and worst_fd <= tol_fd
              else "fail")
    return CheckResult("screened_equivalence", status,
                       {"instances": instances,
                        "max_identity_deviation": worst_identity,
                        "max_fd_deviation": worst_fd})


def phi_suite(seed: int = 0) -> SuiteReport:
    rng = make_rng(seed)
    return SuiteReport("phi", [
        check_weight_monotonicity(),
        check_objective_derivative(),
        check_screened_equivalence(rng),
    ])


def check_scheduler_contracts(seed: int = 0, updates: int = 300) -> CheckResult:
    """Double-run a seeded scheduling simulation and audit the loop contracts.

    Verifies byte-identical traces across two runs of the same seed, exactly
    one engine call per inference record, batch-size constancy, full sample
    sets per trained prompt, strict screening acceptance, and fifo staleness
    monotone within each batch.
    """
    from .engine import LatencyModel, LatentRateEngine
    from .scheduler import (
        Budget, CurriculumConfig, EpochLoader, SchedulerState, run_loop,
    )

    cfg = CurriculumConfig(shape=CurriculumShape(4, 8),
                           train_batch_size=8, generation_batch_size=16)

    def run():
        root = make_rng(seed)
        pop_rng, loader_rng, run_rng = root.spawn(3)
        tasks = make_population(
            PopulationSpec(size=96, zero_mass=0.25, one_mass=0.15), pop_rng)
        engine = LatentRateEngine(tasks, LatencyModel())
        loader = EpochLoader(tasks, loader_rng)
        state = SchedulerState()
        audits = []

        def train_fn(batch):
            audits.append([
                (len(batch),
                 len(entry.samples),
                 entry.screen_estimate,
                 state.counters.engine_calls - entry.enqueue_call)
                for entry in batch
            ])
            rewards = [s.reward for e in batch for s in e.samples]
            return 0.0, sum(rewards) / len(rewards)

        records = run_loop(state, engine, loader, cfg,
                           Budget(max_updates=updates), run_rng,
                           train_fn=train_fn)
        return records, audits, state

    records_a, audits_a, state_a = run()
    records_b, audits_b, state_b = run()

    failures = []
    if records_to_jsonl(records_a) != records_to_jsonl(records_b):
        failures.append("traces differ across identical seeds")
    inference_records = [r for r in records_a if r.kind == "inference"]
    calls = max((r.counters["engine_calls"] for r in records_a), default=0)
    if calls != len(inference_records):
        failures.append(
            f"engine calls {calls} != inference iterations {len(inference_records)}"
        )
    for batch in audits_a:
        for size, n_samples, estimate, age in batch:
            if size != cfg.train_batch_size:
                failures.append(f"batch size {size} != {cfg.train_batch_size}")
            if n_samples != cfg.shape.n_total:
                failures.append(f"sample count {n_samples} != {cfg.shape.n_total}")
            if not cfg.p_low < estimate < cfg.p_high:
                failures.append(f"screening estimate {estimate} outside thresholds")
        ages = [age for _, _, _, age in batch]
        if any(a < b for a, b in zip(ages, ages[1:])):
            failures.append("fifo staleness not monotone within a batch")
    status = "pass" if not failures else "fail"
    return CheckResult("scheduler_contracts", status,
                       {"iterations": len(records_a),
                        "updates": state_a.t,
                        "engine_calls": state_a.counters.engine_calls,
                        "failures": sorted(set(failures))})


def scheduler_suite(seed: int = 0) -> SuiteReport:
    return SuiteReport("scheduler", [check_scheduler_contracts(seed)])


def check_improvement_bound(seed: int = 0, trials: int = 100_000) -> CheckResult:
    """Quadratic-harness improvement respects the SNR lower bound at pinned SNRs."""
    failures = []
    dimension = 8
    for snr in (math.inf, 2.0, 1.0, 0.5):
        grad_sq = float(dimension)
        scale = 0.0 if math.isinf(snr) else grad_sq / (dimension * snr)
        harness = QuadraticHarness(dimension=dimension, noise_scale=scale,
                                   trials=trials, target=tuple([1.0] * dimension))
        report = improvement_bound_check(harness, make_rng(seed))
        if report.empirical_improvement < report.bound_rhs - 4 * report.stderr:
            failures.append({"snr": snr, "kind": "bound",
                             "empirical": report.empirical_improvement,
                             "bound_rhs": report.bound_rhs,
                             "stderr": report.stderr})
        closed_tol = 2 * report.stderr if report.stderr > 0 else 1e-12
        if abs(report.empirical_improvement - report.closed_form) > closed_tol:
            failures.append({"snr": snr, "kind": "closed_form",
                             "empirical": report.empirical_improvement,
                             "closed_form": report.closed_form,
                             "stderr": report.stderr})
    status = "pass" if not failures else "fail"
    return CheckResult("improvement_bound", status,
                       {"trials": trials, "failures": failures})


def fact1_suite(seed: int = 0) -> SuiteReport:
    return SuiteReport("fact1", [check_improvement_bound(seed)])


def run_suites(which: str = "all", seed: int = 0) -> list[SuiteReport]:
    """Run one named suite, or all of them."""
    runners = {
        "snr": snr_suite,
        "phi": phi_suite,
        "scheduler": scheduler_suite,
        "fact1": fact1_suite,
    }
    if which == "all":
        return [runners[name](seed) for name in SUITES]
    if which not in runners:
        raise ValueError(f"unknown suite {which!r}; choose from {('all',) + SUITES}")
    return [runners[which](seed)]
