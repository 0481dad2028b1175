"""End-to-end acceptance gate: one test per shipping criterion.

Each test prints a single pass/fail line with the measured numbers. The
heavyweight Monte-Carlo populations (max-min sweep, scaling sweep, QoS
study, pessimizer-vs-oracle runs) are module fixtures shared across
criteria, with the instance seeds frozen so reruns are deterministic.
"""

import dataclasses
import time

import numpy as np
import pytest

from splitbeam import (
    ChannelEstimate,
    DofProfile,
    Precoder,
    QosSpec,
    SampleSets,
    achievable_allocation,
    ao_optimize_sampled,
    dinkelbach_worst_case,
    initial_precoder,
    max_min_dof_nors,
    max_min_dof_rs,
    mmse_values,
    pessimize_and_extend,
    rate_target_from_sinr,
    sample_channel,
    sinr_and_rates,
    solve_conservative_rs,
    solve_max_min_nors,
    solve_max_min_rs,
    solve_qos,
    verify_rate_constraints,
    worst_case_equalizer,
)
from splitbeam.conservative import conservative_precoder_step
from splitbeam.cutting_set import _mmse_pairs, _sampled_precoder_program
from splitbeam.defaults import DEFAULT_TOLERANCES
from splitbeam.experiments import (
    draw_estimates,
    run_maxmin_sweep,
    snr_to_power,
    spec_from_delta,
    write_records_csv,
)

from helpers import dof_formulas_direct, random_estimates, random_precoder, worst_mmse_oracle

EPS_V = 1e-3
TARGET = rate_target_from_sinr(9.0)


def report(n: int, ok: bool, detail: str):
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {n}: {detail}"


def log2_pt(snr_db: float) -> float:
    return snr_db * np.log2(10.0) / 10.0


# ---------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def maxmin_sweep():
    """10 seeds, K=N_t=3, delta=0.15: RS-cs and NoRS-cs at 20/40/60 dB,
    RS-con at 20 dB. Shared by the ordering, saturation, and
    certification criteria."""
    spec = spec_from_delta(
        "maxmin", 0.15, K=3, n_t=3, trials=10, seed=0,
        snr_grid_db=(20.0, 40.0, 60.0), schemes=("NoRS-cs", "RS-cs"),
    )
    rates = {"RS": {s: [] for s in (20.0, 40.0, 60.0)},
             "NoRS": {s: [] for s in (20.0, 40.0, 60.0)},
             "con20": []}
    certified = []
    results = []
    start = time.perf_counter()
    for trial in range(10):
        for snr in (20.0, 40.0, 60.0):
            p_t = snr_to_power(snr)
            ests = draw_estimates(spec, trial, p_t)
            rs = solve_max_min_rs(ests, p_t)
            nors = solve_max_min_nors(ests, p_t)
            rates["RS"][snr].append(rs.alloc.max_min_rate)
            rates["NoRS"][snr].append(nors.alloc.max_min_rate)
            certified += [rs.certified, nors.certified]
            results.append((f"RS-cs@{snr:g}dB t{trial}", rs.precoder, rs.alloc, ests))
            results.append((f"NoRS-cs@{snr:g}dB t{trial}", nors.precoder, nors.alloc, ests))
            if snr == 20.0:
                con = solve_conservative_rs(ests, p_t)
                rates["con20"].append(con.alloc.max_min_rate)
                results.append((f"RS-con@20dB t{trial}", con.precoder, con.alloc, ests))
    return {
        "rates": rates,
        "all_certified": all(certified),
        "results": results,
        "elapsed": time.perf_counter() - start,
    }


@pytest.fixture(scope="module")
def scaling_sweep():
    """10 seeds with scaling CSIT alpha=(0, 0.5, 0.5) at 40/60 dB."""
    spec = spec_from_delta(
        "maxmin", 0.15, alpha=(0.0, 0.5, 0.5), K=3, n_t=3, trials=10, seed=0,
        snr_grid_db=(40.0, 60.0), schemes=("NoRS-cs", "RS-cs"),
    )
    rates = {"RS": {40.0: [], 60.0: []}, "NoRS": {40.0: [], 60.0: []}}
    certified = []
    results = []
    for trial in range(10):
        for snr in (40.0, 60.0):
            p_t = snr_to_power(snr)
            ests = draw_estimates(spec, trial, p_t)
            rs = solve_max_min_rs(ests, p_t)
            nors = solve_max_min_nors(ests, p_t)
            rates["RS"][snr].append(rs.alloc.max_min_rate)
            rates["NoRS"][snr].append(nors.alloc.max_min_rate)
            certified += [rs.certified, nors.certified]
            results.append((f"RS-cs(a)@{snr:g}dB t{trial}", rs.precoder, rs.alloc, ests))
            results.append((f"NoRS-cs(a)@{snr:g}dB t{trial}", nors.precoder, nors.alloc, ests))
    return {"rates": rates, "all_certified": all(certified), "results": results}


@pytest.fixture(scope="module")
def qos_study():
    """20 seeds, K=N_t=3, delta=0.15, target log2(10) bits: power
    minimization for RS-cs and NoRS-cs."""
    spec = spec_from_delta(
        "qos", 0.15, K=3, n_t=3, trials=20, seed=0,
        schemes=("NoRS-cs", "RS-cs"), snr_grid_db=(0.0, 60.0),
    )
    solved = {"RS": [], "NoRS": []}
    results = []
    for trial in range(spec.trials):
        ests = draw_estimates(spec, trial, p_t=1.0)
        for scheme in ("RS", "NoRS"):
            res = solve_qos(
                QosSpec(rate_target=spec.qos_target, p_max=spec.p_max, scheme=scheme),
                ests, spec.noise_var,
            )
            solved[scheme].append(res)
            if res.status == "feasible":
                results.append((f"qos-{scheme} t{trial}", res.precoder, res.alloc, ests))
    return {"spec": spec, "solved": solved, "results": results}


@pytest.fixture(scope="module")
def dinkelbach_runs():
    """20 frozen instances (K=N_t=2, delta=0.15): exact pessimization next
    to a boundary-heavy 1e5-sample random search over the ball."""
    runs = []
    start = time.perf_counter()
    for i in range(20):
        rng = np.random.default_rng((2026, i))
        ests = [ChannelEstimate(nominal=sample_channel(rng, 2), radius=0.15) for _ in range(2)]
        raw = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
        raw *= np.sqrt(100.0 / np.sum(np.abs(raw) ** 2))
        P = Precoder(private=raw[:, 1:], common=raw[:, 0])
        kind = "private" if i % 2 == 0 else "common"
        k = (i // 2) % 2
        nominal = mmse_values(ests[k].nominal, P, k, 1.0)[1 if kind == "private" else 0]
        res = dinkelbach_worst_case(P, k, kind, 0.9 * nominal, ests[k], 1.0)
        oracle = worst_mmse_oracle(P, k, kind, ests[k], 1.0, 100_000, np.random.default_rng((77, i)))
        runs.append({
            "value": res.worst_mmse,
            "oracle": oracle,
            "eigen_ratio": res.max_eigen_ratio,
        })
    return {"runs": runs, "elapsed": time.perf_counter() - start}


# ---------------------------------------------------------------- criteria


def test_criterion_01_dof_formula_exactness():
    rng = np.random.default_rng(12026)
    start = time.perf_counter()
    worst_total = 0.0
    for _ in range(1000):
        K = int(rng.integers(2, 7))
        alphas = rng.uniform(0.0, 1.0, K)
        prof = DofProfile(alphas=alphas)
        nors_ref, rs_ref, _ = dof_formulas_direct(alphas)
        assert max_min_dof_nors(prof) == nors_ref
        value, _ = max_min_dof_rs(prof)
        assert value == rs_ref
        alloc = achievable_allocation(prof)
        assert np.all(alloc.common_split >= 0.0)
        assert abs(alloc.common_split.sum() - alloc.common_dof) <= 1e-9
        worst_total = max(worst_total, float(np.max(np.abs(alloc.per_user_total() - value))))
        assert worst_total <= 1e-12
    elapsed = time.perf_counter() - start
    report(1, elapsed < 5.0,
           f"1000 profiles match plain-loop formulas exactly, allocation totals "
           f"off by <= {worst_total:.1e}, {elapsed:.2f}s")


def test_criterion_02_pessimization_matches_oracle(dinkelbach_runs):
    rel_errs = [abs(r["value"] - r["oracle"]) / r["oracle"] for r in dinkelbach_runs["runs"]]
    undershoots = [
        max(0.0, r["oracle"] - r["value"]) / r["oracle"] for r in dinkelbach_runs["runs"]
    ]
    elapsed = dinkelbach_runs["elapsed"]
    ok = max(rel_errs) <= 1e-3 and max(undershoots) <= 1e-3 and elapsed < 120.0
    report(2, ok,
           f"20 instances: max rel err {max(rel_errs):.2e}, max undershoot "
           f"{max(undershoots):.2e}, {elapsed:.1f}s")


def test_criterion_03_sdp_rank_one(dinkelbach_runs):
    worst = max(r["eigen_ratio"] for r in dinkelbach_runs["runs"])
    report(3, worst < 1e-5, f"max eigenvalue ratio across all pessimizations {worst:.2e}")


def test_criterion_04_rate_wmmse_identity():
    rng = np.random.default_rng(42026)
    worst = 0.0
    for _ in range(1000):
        n_t = int(rng.integers(2, 5))
        K = int(rng.integers(2, 4))
        h = (rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)) / np.sqrt(2.0)
        P = random_precoder(rng, n_t, K, 10.0 ** rng.uniform(-1.0, 2.0))
        k = int(rng.integers(K))
        eps_c, eps = mmse_values(h, P, k, 1.0)
        _, _, R_c, R = sinr_and_rates(h, P, k, 1.0)
        for eps_val, rate in ((eps_c, R_c), (eps, R)):
            u = 1.0 / eps_val
            xi = u * eps_val - np.log2(u)
            worst = max(worst, abs((1.0 - xi) - rate))
    report(4, worst <= 1e-8, f"1000 instances: max |(1 - xi) - R| = {worst:.2e}")


def _drive_sampled(ests, p_t, include_common, iters=8, tol=1e-10):
    samples = SampleSets.initial(ests, include_common)
    P = initial_precoder([e.nominal for e in ests], p_t, include_common)
    state = ao_optimize_sampled(samples, P, p_t, 1.0)
    samples, _ = pessimize_and_extend(state, samples, ests, 1.0)
    P = initial_precoder([e.nominal for e in ests], p_t, include_common)
    seq = []
    for _ in range(iters):
        pp, cp = _mmse_pairs(P, samples, 1.0, include_common)
        P, _, obj = _sampled_precoder_program(
            samples, pp, cp, 1.0, include_common, P.n_t, budget=p_t, tol=tol
        )
        seq.append(obj)
    return seq


def _drive_conservative(ests, p_t, include_common, iters=8, tol=1e-10):
    P = initial_precoder([e.nominal for e in ests], p_t, include_common)
    K = len(ests)
    seq = []
    for _ in range(iters):
        pg, pu = [], []
        for k in range(K):
            g, eps = worst_case_equalizer(P, ests[k], k, "private", 1.0, tol=tol)
            pg.append(g)
            pu.append(1.0 / max(eps, 1e-12))
        cg = cu = None
        if include_common:
            cg, cu = [], []
            for k in range(K):
                g, eps = worst_case_equalizer(P, ests[k], k, "common", 1.0, tol=tol)
                cg.append(g)
                cu.append(1.0 / max(eps, 1e-12))
        P, rate, _, _ = conservative_precoder_step(pg, pu, cg, cu, ests, 1.0, budget=p_t, tol=tol)
        seq.append(rate)
    return seq


def test_criterion_05_ao_monotonicity():
    worst_sampled = np.inf
    worst_conservative = np.inf
    for i in range(20):
        rng = np.random.default_rng((55, i))
        ests = [ChannelEstimate(nominal=sample_channel(rng, 2), radius=0.15) for _ in range(2)]
        p_t = snr_to_power(15.0)
        include_common = i % 2 == 0
        worst_sampled = min(worst_sampled, min(np.diff(_drive_sampled(ests, p_t, include_common))))
        worst_conservative = min(
            worst_conservative, min(np.diff(_drive_conservative(ests, p_t, include_common)))
        )
    ok = worst_sampled >= -1e-9 and worst_conservative >= -1e-9
    report(5, ok,
           f"20+20 objective sequences: min step {worst_sampled:.2e} (cutting-set), "
           f"{worst_conservative:.2e} (conservative AO)")


def test_criterion_06_feasible_results_certify(maxmin_sweep, scaling_sweep, qos_study):
    pool = maxmin_sweep["results"] + scaling_sweep["results"] + qos_study["results"]
    worst, worst_label = -np.inf, ""
    for label, P, alloc, ests in pool:
        violation = verify_rate_constraints(P, alloc, ests, 1.0)
        if violation > worst:
            worst, worst_label = violation, label
    ok = worst <= EPS_V
    report(6, ok,
           f"{len(pool)} feasible results re-pessimized independently: worst "
           f"violation {worst:.2e} bits ({worst_label})")


def test_criterion_07_scheme_ordering(maxmin_sweep):
    rates = maxmin_sweep["rates"]
    rs20, nors20, con20 = rates["RS"][20.0], rates["NoRS"][20.0], rates["con20"]
    per_seed_nors = all(r >= n - 1e-3 for r, n in zip(rs20, nors20))
    per_seed_con = all(r >= c - 1e-3 for r, c in zip(rs20, con20))
    ratio = float(np.mean(rates["RS"][60.0])) / float(np.mean(rates["NoRS"][60.0]))
    ok = per_seed_nors and per_seed_con and ratio >= 1.3
    report(7, ok,
           f"per-seed RS-cs >= NoRS-cs: {per_seed_nors}, RS-cs >= RS-con: "
           f"{per_seed_con}, 60 dB mean ratio {ratio:.2f} (need >= 1.3)")


def test_criterion_08_saturation_vs_growth(maxmin_sweep):
    rates = maxmin_sweep["rates"]
    den = log2_pt(60.0) - log2_pt(40.0)
    slope_rs = (np.mean(rates["RS"][60.0]) - np.mean(rates["RS"][40.0])) / den
    slope_nors = (np.mean(rates["NoRS"][60.0]) - np.mean(rates["NoRS"][40.0])) / den
    elapsed = maxmin_sweep["elapsed"]
    ok = (slope_nors < 0.1 and 0.23 <= slope_rs <= 0.43
          and maxmin_sweep["all_certified"] and elapsed < 1800.0)
    report(8, ok,
           f"40->60 dB slopes: NoRS-cs {slope_nors:.3f} (< 0.1), RS-cs {slope_rs:.3f} "
           f"(in [0.23, 0.43]), sweep {elapsed:.0f}s")


def test_criterion_09_scaling_csit_dof(scaling_sweep):
    rates = scaling_sweep["rates"]
    den = log2_pt(60.0) - log2_pt(40.0)
    slope_rs = (np.mean(rates["RS"][60.0]) - np.mean(rates["RS"][40.0])) / den
    slope_nors = (np.mean(rates["NoRS"][60.0]) - np.mean(rates["NoRS"][40.0])) / den
    ok = (0.37 <= slope_rs <= 0.6 and 0.15 <= slope_nors <= 0.35
          and scaling_sweep["all_certified"])
    report(9, ok,
           f"alpha=(0,0.5,0.5) slopes: RS-cs {slope_rs:.3f} (in [0.37, 0.6]), "
           f"NoRS-cs {slope_nors:.3f} (in [0.15, 0.35])")


def test_criterion_10_qos_feasibility_and_power(qos_study):
    rs, nors = qos_study["solved"]["RS"], qos_study["solved"]["NoRS"]
    n_rs = sum(r.status == "feasible" for r in rs)
    n_nors = sum(r.status == "feasible" for r in nors)
    both = [t for t in range(len(rs))
            if rs[t].status == "feasible" and nors[t].status == "feasible"]
    mean_rs = float(np.mean([rs[t].power for t in both]))
    mean_nors = float(np.mean([nors[t].power for t in both]))
    ok = n_rs == len(rs) and n_nors < n_rs and mean_rs <= mean_nors
    report(10, ok,
           f"feasible: RS-cs {n_rs}/20, NoRS-cs {n_nors}/20; intersection mean "
           f"power RS {mean_rs:.1f} <= NoRS {mean_nors:.1f}")


def test_criterion_11_inverse_duality(qos_study):
    spec = qos_study["spec"]
    rs = qos_study["solved"]["RS"]
    trials = [t for t in range(len(rs)) if rs[t].status == "feasible"][:5]
    # solve the rate problem at the minimized power to higher precision
    # than its reporting default so the AO termination gap stays well
    # inside the duality band
    tight = dataclasses.replace(DEFAULT_TOLERANCES, eps_rate=1e-5)
    worst = 0.0
    for t in trials:
        ests = draw_estimates(spec, t, p_t=1.0)
        back = solve_max_min_rs(ests, rs[t].power, tols=tight)
        assert back.certified
        worst = max(worst, abs(back.alloc.max_min_rate - TARGET))
    ok = len(trials) == 5 and worst <= 2.0 * EPS_V
    report(11, ok, f"5 instances: max |recovered - target| = {worst:.2e} (allow 2e-3)")


def test_criterion_12_deterministic_output(tmp_path):
    spec = spec_from_delta(
        "maxmin", 0.1, K=2, n_t=2, trials=2, seed=3,
        snr_grid_db=(10.0, 20.0), schemes=("RS-cs",),
    )
    paths = []
    for name in ("a.csv", "b.csv"):
        records = run_maxmin_sweep(spec)
        path = tmp_path / name
        write_records_csv(records, path)
        paths.append(path)
    same = paths[0].read_bytes() == paths[1].read_bytes()
    report(12, same, "identical spec + seed reruns produce byte-identical CSV")
