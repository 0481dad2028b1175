"""Cutting-set max-min solver: sampled WMMSE inner loop plus exact
pessimization.

The perfect-CSIT cross-check is a from-scratch WMMSE reference built on
cvxpy with direct quadratic constraints, sharing no code path with the
package's conic pipeline. Other expectations are closed-form bounds
(single-user matched filter) and structural invariants from the
algorithm's construction (monotone objective, growing sample sets,
certification against a fresh worst-case pass).
"""

import numpy as np
import pytest

from splitbeam import (
    ChannelEstimate,
    SampleSets,
    ao_optimize_sampled,
    initial_precoder,
    inner_product_extrema,
    pessimize_and_extend,
    solve_max_min_nors,
    solve_max_min_rs,
    verify_rate_constraints,
)
from splitbeam.defaults import DEFAULT_TOLERANCES

from helpers import ball_points, random_estimates


def perfect_csit_wmmse_nors(channels, p_t, noise_var=1.0, max_iter=80, eps=1e-8):
    """Independent max-min WMMSE reference for exact CSIT, private streams
    only: closed-form equalizer/weight updates, precoder step as a cvxpy
    quadratic program."""
    import cvxpy as cp

    K = len(channels)
    n_t = channels[0].shape[0]
    P = np.column_stack([h / np.linalg.norm(h) for h in channels]) * np.sqrt(p_t / K)
    best = -np.inf
    for _ in range(max_iter):
        g = np.zeros(K, dtype=complex)
        u = np.zeros(K)
        for k, h in enumerate(channels):
            y = h.conj() @ P
            T = float(np.sum(np.abs(y) ** 2) + noise_var)
            g[k] = np.conj(y[k]) / T
            u[k] = 1.0 / (1.0 - abs(y[k]) ** 2 / T)
        Pv = cp.Variable((n_t, K), complex=True)
        R = cp.Variable()
        cons = [cp.sum_squares(cp.vec(Pv, order="F")) <= p_t]
        for k, h in enumerate(channels):
            row = h.conj() @ Pv
            T = cp.sum_squares(row) + noise_var
            xi = u[k] * (abs(g[k]) ** 2 * T - 2.0 * cp.real(g[k] * row[k]) + 1.0) - np.log2(u[k])
            cons.append(1.0 - xi >= R)
        prob = cp.Problem(cp.Maximize(R), cons)
        prob.solve(solver=cp.CLARABEL)
        P = Pv.value
        if prob.value - best < eps:
            best = max(best, float(prob.value))
            break
        best = float(prob.value)
    return best


class TestSampleSets:
    def test_initial(self, rng):
        ests = random_estimates(rng, 3, 2, 0.1)
        s = SampleSets.initial(ests, include_common=True)
        assert s.counts() == (3, 3)
        s2 = SampleSets.initial(ests, include_common=False)
        assert s2.counts() == (3, 0)
        np.testing.assert_array_equal(s.private[0][0], ests[0].nominal)


class TestAoOptimizeSampled:
    def test_objective_never_decreases_on_restart(self, rng):
        ests = random_estimates(rng, 2, 2, 0.15)
        samples = SampleSets.initial(ests, include_common=True)
        P0 = initial_precoder([e.nominal for e in ests], 10.0, include_common=True)
        first = ao_optimize_sampled(samples, P0, 10.0, 1.0)
        again = ao_optimize_sampled(samples, first.precoder, 10.0, 1.0)
        assert again.objective >= first.objective - 1e-9

    def test_budget_respected(self, rng):
        ests = random_estimates(rng, 2, 3, 0.15)
        samples = SampleSets.initial(ests, include_common=True)
        P0 = initial_precoder([e.nominal for e in ests], 5.0, include_common=True)
        state = ao_optimize_sampled(samples, P0, 5.0, 1.0)
        assert state.precoder.total_power() <= 5.0 + 1e-8

    def test_stop_at_short_circuits(self, rng):
        ests = random_estimates(rng, 2, 2, 0.15)
        samples = SampleSets.initial(ests, include_common=False)
        P0 = initial_precoder([e.nominal for e in ests], 10.0, include_common=False)
        full = ao_optimize_sampled(samples, P0, 10.0, 1.0)
        stopped = ao_optimize_sampled(samples, P0, 10.0, 1.0, stop_at=full.objective / 2)
        assert stopped.objective >= full.objective / 2
        assert stopped.inner_iterations <= full.inner_iterations


class TestPessimizeAndExtend:
    def test_zero_radius_never_violates(self, rng):
        ests = random_estimates(rng, 2, 2, 0.0)
        samples = SampleSets.initial(ests, include_common=True)
        P0 = initial_precoder([e.nominal for e in ests], 10.0, include_common=True)
        state = ao_optimize_sampled(samples, P0, 10.0, 1.0)
        before = samples.counts()
        samples, report = pessimize_and_extend(state, samples, ests, 1.0)
        assert samples.counts() == before
        assert report.max_violation <= 1e-6

    def test_first_pass_violates_with_uncertainty(self, rng):
        # A design optimized for the nominal channels alone overshoots
        # what the ball can support; the first worst-case pass catches it.
        ests = random_estimates(rng, 2, 2, 0.15)
        samples = SampleSets.initial(ests, include_common=True)
        P0 = initial_precoder([e.nominal for e in ests], 100.0, include_common=True)
        state = ao_optimize_sampled(samples, P0, 100.0, 1.0)
        before = samples.counts()
        samples, report = pessimize_and_extend(state, samples, ests, 1.0)
        assert report.max_violation > DEFAULT_TOLERANCES.eps_violation
        assert sum(samples.counts()) > sum(before)

    def test_growth_bounded_by_one_per_stream(self, rng):
        ests = random_estimates(rng, 2, 2, 0.15)
        samples = SampleSets.initial(ests, include_common=True)
        P0 = initial_precoder([e.nominal for e in ests], 100.0, include_common=True)
        state = ao_optimize_sampled(samples, P0, 100.0, 1.0)
        p0, c0 = samples.counts()
        samples, _ = pessimize_and_extend(state, samples, ests, 1.0)
        p1, c1 = samples.counts()
        assert p1 - p0 <= 2
        assert c1 - c0 <= 2


class TestSolveMaxMin:
    def test_single_user_beats_matched_filter_bound(self, rng):
        # With one user the worst-case rate of the matched-filter design
        # log2(1 + ((|hhat^H p| - delta ||p||)+)^2 / sigma^2) is achievable,
        # so the solver must do at least as well.
        est = random_estimates(rng, 1, 3, 0.15)[0]
        p_t = 10.0
        p = est.nominal / np.linalg.norm(est.nominal) * np.sqrt(p_t)
        _, lo = inner_product_extrema(est, p)
        bound = np.log2(1.0 + lo**2)
        res = solve_max_min_nors([est], p_t)
        assert res.certified
        assert res.alloc.max_min_rate >= bound - 2e-3
        # and cannot beat the best channel in the ball
        hi = np.log2(1.0 + p_t * (np.linalg.norm(est.nominal) + est.radius) ** 2)
        assert res.alloc.max_min_rate <= hi

    def test_perfect_csit_matches_independent_wmmse(self, rng):
        channels = [e.nominal for e in random_estimates(rng, 2, 2, 0.0)]
        ests = [ChannelEstimate(nominal=h, radius=0.0) for h in channels]
        res = solve_max_min_nors(ests, 20.0)
        ref = perfect_csit_wmmse_nors(channels, 20.0)
        assert res.alloc.max_min_rate == pytest.approx(ref, abs=1e-3)

    def test_rs_upper_bounds_nors(self, rng):
        # The private-only design is feasible for the split formulation
        # at zero common rate, so the split optimum can only be higher.
        for _ in range(3):
            ests = random_estimates(rng, 2, 2, 0.15)
            rs = solve_max_min_rs(ests, 50.0)
            nors = solve_max_min_nors(ests, 50.0)
            assert rs.alloc.max_min_rate >= nors.alloc.max_min_rate - 1e-3

    def test_certification_is_reproducible(self, rng):
        # An independent worst-case pass at the returned design must agree
        # with the certificate.
        ests = random_estimates(rng, 2, 2, 0.15)
        res = solve_max_min_rs(ests, 50.0)
        assert res.certified
        violation = verify_rate_constraints(res.precoder, res.alloc, ests, 1.0)
        assert violation <= DEFAULT_TOLERANCES.eps_violation + 1e-6

    def test_sampled_rates_honour_allocation(self, rng):
        # Spot check with dense sampling: no channel in any ball pushes a
        # user's total rate below the certified max-min value minus the
        # violation tolerance.
        ests = random_estimates(rng, 2, 2, 0.15)
        res = solve_max_min_rs(ests, 50.0)
        R_t = res.alloc.max_min_rate
        split = res.alloc.common_split
        common_rate = res.alloc.common_rate
        for k, est in enumerate(ests):
            H = ball_points(rng, est, 20_000, boundary_fraction=0.5)
            Y = H.conj() @ res.precoder.private
            T = np.sum(np.abs(Y) ** 2, axis=1) + 1.0
            private = -np.log2(1.0 - np.abs(Y[:, k]) ** 2 / T)
            assert private.min() >= R_t - split[k] - 2e-3
            if common_rate > 0:
                S_c = np.abs(H.conj() @ res.precoder.common) ** 2
                common = np.log2(1.0 + S_c / T)
                assert common.min() >= common_rate - 2e-3

    def test_trace_is_monotone_in_samples(self, rng):
        ests = random_estimates(rng, 2, 2, 0.15)
        res = solve_max_min_rs(ests, 50.0)
        counts = [(row.private_samples, row.common_samples) for row in res.trace]
        for (p0, c0), (p1, c1) in zip(counts, counts[1:]):
            assert p1 >= p0 and c1 >= c0
        assert res.trace[-1].max_violation <= DEFAULT_TOLERANCES.eps_violation

    def test_appended_samples_are_distinct(self, rng):
        ests = random_estimates(rng, 2, 2, 0.15)
        res = solve_max_min_rs(ests, 50.0)
        for group in (res.samples.private, res.samples.common):
            for chans in group:
                for i in range(len(chans)):
                    for j in range(i + 1, len(chans)):
                        assert np.linalg.norm(chans[i] - chans[j]) > 0.9e-6

    def test_samples_stay_in_their_balls(self, rng):
        ests = random_estimates(rng, 2, 2, 0.15)
        res = solve_max_min_rs(ests, 20.0)
        for group in (res.samples.private, res.samples.common):
            for k, chans in enumerate(group):
                for h in chans:
                    assert np.linalg.norm(h - ests[k].nominal) <= 0.15 + 1e-8

    def test_power_feasibility(self, rng):
        ests = random_estimates(rng, 2, 2, 0.15)
        res = solve_max_min_rs(ests, 30.0)
        assert res.precoder.total_power() <= 30.0 + 1e-8

    def test_split_nonnegative(self, rng):
        ests = random_estimates(rng, 2, 2, 0.15)
        res = solve_max_min_rs(ests, 30.0)
        assert np.all(res.alloc.common_split >= 0.0)

    def test_nors_monotone_in_budget(self, rng):
        ests = random_estimates(rng, 2, 2, 0.15)
        rates = [solve_max_min_nors(ests, b).alloc.max_min_rate for b in (5.0, 20.0, 80.0)]
        assert rates[0] <= rates[1] + 1e-3
        assert rates[1] <= rates[2] + 1e-3

    def test_invalid_budget(self, rng):
        ests = random_estimates(rng, 1, 2, 0.1)
        with pytest.raises(ValueError):
            solve_max_min_rs(ests, 0.0)
        with pytest.raises(ValueError):
            solve_max_min_nors(ests, -1.0)
