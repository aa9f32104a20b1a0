"""Closed-loop scheme: synthesis, simulation, and the sandwich ledger."""

import dataclasses
import math

import numpy as np
import pytest

from ratecost import SystemSpec
from ratecost.coder import build_codebooks, expected_stage_lengths
from ratecost.instances import drive_to_zero, min_open_loop_cost, noisy_actuator
from ratecost.scheme import (
    SchemeOptions,
    eps_condition,
    log_gap_budget,
    per_coordinate_overhead,
    run_trials,
    synthesize,
    verify_sandwich,
)
from ratecost.solver import InfeasibleCostError, SolverOptions, min_expected_cost

FAST = SchemeOptions(
    cloud_size=80,
    num_proposals=512,
    solver=SolverOptions(restarts=4, max_iters=1200),
)


def mid_curve_budget(spec):
    dmin = min_expected_cost(spec)
    d0, _ = min_open_loop_cost(spec)
    return dmin + 0.5 * (d0 - dmin)


@pytest.fixture(scope="module")
def bundle():
    spec = drive_to_zero(2)
    return synthesize(spec, mid_curve_budget(spec), FAST)


@pytest.fixture(scope="module")
def big_report(bundle):
    return run_trials(bundle, 100_000, seed=1)


class TestSynthesize:
    def test_single_action_alphabet_zero_rate(self):
        spec = SystemSpec.from_markov(
            [0.5, 0.5], np.full((2, 1, 2), 0.5), [[0.0], [0.4]], horizon=2
        )
        b = synthesize(spec, 0.5, dataclasses.replace(FAST, cloud_size=10))
        assert b.exact_rate == 0.0
        for stage in b.codebooks.stages:
            for code in stage.values():
                assert set(code.words.values()) == {""}

    def test_cost_free_spec_rate_is_code_overhead_only(self):
        spec = SystemSpec.from_markov(
            [0.5, 0.5],
            np.full((2, 2, 2), 0.5),
            np.zeros((2, 2)),
            horizon=2,
        )
        b = synthesize(spec, 0.0, dataclasses.replace(FAST, cloud_size=20))
        assert b.info_rate == pytest.approx(0.0, abs=1e-9)
        assert b.exact_rate <= 1.0 + 1.0 / spec.horizon

    def test_budget_at_cost_floor(self):
        spec = drive_to_zero(2)
        dmin = min_expected_cost(spec)
        b = synthesize(spec, dmin, dataclasses.replace(FAST, cloud_size=30))
        assert b.exact_cost <= dmin + 1e-12

    def test_exact_cost_within_budget(self, bundle):
        assert bundle.exact_cost <= bundle.budget_cost

    def test_rate_budget_relation_recorded(self, bundle):
        f = bundle.info_rate
        want = f + math.log2(f + 3.4) + 2.0 + 0.5 + bundle.gamma
        assert bundle.rate_budget_value == pytest.approx(want, abs=1e-12)
        assert bundle.eps_ok

    def test_summed_code_lengths_bounded_by_total_entropy(self, bundle):
        from ratecost import entropy_bits

        total = sum(expected_stage_lengths(bundle.codebooks,
                                           bundle.mixture_action_law))
        h_total = entropy_bits(bundle.mixture_action_law)
        assert total <= h_total + bundle.spec.horizon + 1e-12

    def test_mixture_entropy_chain(self, bundle):
        lam = bundle.selector.weight
        n = bundle.spec.horizon
        cond = n * (lam * bundle.realization0.point.rate
                    + (1 - lam) * bundle.realization1.point.rate)
        assert bundle.cond_entropy_bits == pytest.approx(cond, abs=1e-9)
        assert bundle.uncond_entropy_bits <= bundle.cond_entropy_bits + 1.0

    def test_deterministic_given_seeds(self):
        spec = noisy_actuator(2)
        budget = mid_curve_budget(spec)
        opts = dataclasses.replace(FAST, cloud_size=40)
        a = synthesize(spec, budget, opts)
        b = synthesize(spec, budget, opts)
        assert a.exact_rate == b.exact_rate
        assert a.exact_cost == b.exact_cost
        assert a.selector == b.selector

    def test_infeasible_budget_propagates(self):
        spec = drive_to_zero(2)
        with pytest.raises(InfeasibleCostError):
            synthesize(spec, min_expected_cost(spec) / 2, FAST)


class TestRunTrials:
    def test_deterministic_loop_zero_variance(self):
        spec = drive_to_zero(2, flip=1.0, initial_one=1.0)
        b = synthesize(spec, mid_curve_budget(spec),
                       dataclasses.replace(FAST, cloud_size=20))
        report = run_trials(b, 200, seed=3)
        if b.selector.weight in (0.0, 1.0):
            assert report.empirical_rate_se == 0.0
            assert report.empirical_rate == pytest.approx(b.exact_rate, abs=1e-12)

    def test_monte_carlo_consistent_with_exact(self, big_report):
        report = big_report
        assert report.trials == 100_000
        assert report.mc_cost_consistent
        assert report.mc_rate_consistent
        assert abs(report.empirical_cost - report.exact_cost) \
            <= 3.0 * report.empirical_cost_se + 1e-12

    def test_empirical_rate_within_sandwich(self, big_report):
        report = big_report
        assert report.empirical_rate <= report.rate_budget_value
        assert report.empirical_rate >= report.info_rate - 3 * report.empirical_rate_se

    def test_per_trial_arrays_optional(self, bundle):
        report = run_trials(bundle, 50, seed=2, keep_per_trial=True)
        assert report.per_trial_bits.shape == (50,)
        assert report.per_trial_costs.shape == (50,)

    def test_manual_loop_matches_maps_and_mixture_law(self, bundle):
        # independent re-simulation: scalar selection instead of stage maps
        from ratecost.sfrl import select

        spec = bundle.spec
        n, X, U = spec.horizon, spec.num_states, spec.num_actions
        rng = np.random.default_rng(99)
        counts = np.zeros(U ** n)
        trials = 4000
        for _ in range(trials):
            re = bundle.realization0 if rng.random() < bundle.selector.weight \
                else bundle.realization1
            x_hist, u_hist = (), ()
            hidx = uctx = xkey = 0
            for t in range(1, n + 1):
                row = spec.stage_kernel(t)[hidx]
                x = int(rng.choice(X, p=row / row.sum()))
                x_hist += (x,)
                xkey = xkey * X + x
                u = select(re.stages[t - 1], x_hist, u_hist)
                assert u == int(re.maps[t - 1][uctx][xkey])
                u_hist += (u,)
                uctx = uctx * U + u
                hidx = (hidx * X + x) * U + u
            counts[uctx] += 1
        tv = 0.5 * np.abs(counts / trials
                          - bundle.mixture_action_law.reshape(-1)).sum()
        assert tv <= 0.05


class TestVerifySandwich:
    def test_ledger_passes_on_shipped_instance(self, bundle):
        report = run_trials(bundle, 5000, seed=5)
        ledger = verify_sandwich(report)
        assert ledger.passed
        assert ledger.converse_margin >= -1e-3
        assert ledger.achievability_margin >= 0.0
        d = ledger.as_dict()
        assert {type(v) for v in d.values()} <= {bool, float}

    def test_corrupted_codebooks_fail_achievability_only(self, bundle):
        # rebuild the codebooks against an inverted law: likely actions get
        # long words, inflating the exact rate past the logarithmic budget
        law = bundle.mixture_action_law
        tilted = np.where(law > 0, 1.0 / (law + 1e-9) ** 12, 0.0)
        tilted /= tilted.sum()
        bad_books = build_codebooks(tilted)
        bad_rate = sum(expected_stage_lengths(bad_books, law)) / bundle.spec.horizon
        corrupted = dataclasses.replace(
            bundle, codebooks=bad_books, exact_rate=bad_rate
        )
        report = run_trials(corrupted, 500, seed=7)
        ledger = verify_sandwich(report)
        assert not ledger.achievability_ok
        assert ledger.converse_ok
        assert not ledger.passed


class TestBoundArithmetic:
    def test_log_gap_budget_value(self):
        assert log_gap_budget(0.0, 2, 0.0) == pytest.approx(
            math.log2(3.4) + 2.5, abs=1e-12
        )

    def test_eps_condition_monotone(self):
        assert eps_condition(0.5, 0.1, 0.25)
        assert not eps_condition(0.5, 1.0, 0.25)

    def test_per_coordinate_overhead_decreasing(self):
        vals = [per_coordinate_overhead(0.25, k, 2) for k in (1, 2, 4, 8)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
