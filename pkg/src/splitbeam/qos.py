r"""Worst-case power minimization under per-user total-rate targets.

The inverse of the max-min problem: find the cheapest precoder whose
worst-case rates all reach a fixed target. Arbitrary starting points
are usually infeasible, so every variant first runs a rate-maximization
pass at increasing power until the target is met, then descends in
power. The cutting-set version repeats that restoration at the start of
each optimization step, since newly appended worst-case channels can
push the incumbent out of the sampled feasible set; power is capped so
schemes whose rates saturate below the target terminate with an honest
infeasible verdict.
"""

from dataclasses import dataclass

import numpy as np

from . import conic
from .channel import ChannelEstimate
from .conservative import _conservative_loop, solve_conservative_rs
from .cutting_set import (
    MaxMinResult,
    SampleSets,
    SampledWmmseState,
    TraceRow,
    ViolationReport,
    _mmse_pairs,
    _sampled_precoder_program,
    ao_optimize_sampled,
    pessimize_and_extend,
    solve_max_min_nors,
    solve_max_min_rs,
)
from .defaults import DEFAULT_TOLERANCES, Tolerances
from .pessimizer import dinkelbach_worst_case
from .rates import Precoder, RateAllocation, mmse_values

__all__ = [
    "QosSpec",
    "QosResult",
    "FeasibilityInit",
    "rate_target_from_sinr",
    "feasibility_init",
    "solve_qos",
    "solve_qos_conservative",
    "verify_rate_constraints",
]


def rate_target_from_sinr(sinr: float) -> float:
    """Rate target matching a worst-case SINR requirement (linear scale);
    a SINR of 9 gives the 3.3219 bits/channel-use target."""
    if sinr <= 0:
        raise ValueError("SINR must be positive")
    return float(np.log2(1.0 + sinr))


@dataclass(frozen=True)
class QosSpec:
    rate_target: float
    p_max: float = 1e6
    scheme: str = "RS"

    def __post_init__(self):
        if not self.rate_target > 0:
            raise ValueError("rate target must be positive")
        if not self.p_max > 0:
            raise ValueError("power cap must be positive")
        if self.scheme not in ("RS", "NoRS"):
            raise ValueError("scheme must be 'RS' or 'NoRS'")


@dataclass(frozen=True)
class QosResult:
    status: str
    power: float
    precoder: Precoder | None
    alloc: RateAllocation | None
    trace: tuple = ()
    max_violation: float = float("nan")

    def __post_init__(self):
        if self.status not in ("feasible", "infeasible", "not-certified"):
            raise ValueError(f"unknown status {self.status!r}")


@dataclass(frozen=True)
class FeasibilityInit:
    feasible: bool
    precoder: Precoder | None
    samples: SampleSets | None
    alloc: RateAllocation | None
    power_used: float
    capped: bool


def _initial_power(target: float, K: int, noise_var: float) -> float:
    # interference-free scaling: every user needs about 2^target in SNR
    return K * noise_var * 2.0**target


# rate gain per power doubling below which a scheme is treated as
# saturated during the infeasibility search (no-common-stream designs
# plateau, so waiting for the hard power cap wastes many solves)
_PLATEAU_GAIN = 1e-3
_PLATEAU_ROUNDS = 2


def feasibility_init(
    spec: QosSpec,
    ests: list,
    noise_var: float = 1.0,
    tols: Tolerances = DEFAULT_TOLERANCES,
    method: str = "cutting-set",
) -> FeasibilityInit:
    """Find a precoder meeting the rate target by solving the max-min
    problem at doubling power levels; stops at the cap, or earlier for
    schemes whose rate gain per doubling has flattened out."""
    rs = spec.scheme == "RS"
    K = len(ests)
    power = _initial_power(spec.rate_target, K, noise_var)
    prev_rate = -np.inf
    flat_rounds = 0
    capped = False
    while True:
        power = min(power, spec.p_max)
        if method == "cutting-set":
            solver = solve_max_min_rs if rs else solve_max_min_nors
            result = solver(ests, power, noise_var, tols)
            rate = result.alloc.max_min_rate
            precoder, samples, alloc = result.precoder, result.samples, result.alloc
        elif method == "conservative":
            result = _conservative_loop(ests, noise_var, rs, tols, budget=power)
            rate = result.alloc.max_min_rate
            precoder, samples, alloc = result.precoder, None, result.alloc
        else:
            raise ValueError("method must be 'cutting-set' or 'conservative'")
        if rate >= spec.rate_target:
            return FeasibilityInit(
                feasible=True,
                precoder=precoder,
                samples=samples,
                alloc=alloc,
                power_used=power,
                capped=False,
            )
        if power >= spec.p_max:
            capped = True
            break
        if not rs or method == "conservative":
            flat_rounds = flat_rounds + 1 if rate - prev_rate < _PLATEAU_GAIN else 0
            if flat_rounds >= _PLATEAU_ROUNDS:
                break
        prev_rate = rate
        power *= 2.0
    return FeasibilityInit(
        feasible=False,
        precoder=None,
        samples=None,
        alloc=None,
        power_used=power,
        capped=capped,
    )


def _sampled_support(
    P: Precoder, samples: SampleSets, target: float, noise_var: float
) -> tuple[np.ndarray, float]:
    """Exact sampled private rate floors and the deficit left after the
    common stream covers every user's shortfall against the target;
    deficit <= 0 means some nonnegative split reaches the target on all
    sampled channels."""
    include_common = P.common is not None
    rates = np.array(
        [
            min(-np.log2(mmse_values(h, P, k, noise_var)[1]) for h in samples.private[k])
            for k in range(P.K)
        ]
    )
    need = float(np.maximum(target - rates, 0.0).sum())
    if not include_common:
        return rates, need
    common_floor = min(
        min(-np.log2(mmse_values(h, P, k, noise_var)[0]) for h in samples.common[k])
        for k in range(P.K)
    )
    return rates, need - float(common_floor)


def _sampled_rates_meet_target(
    P: Precoder, samples: SampleSets, target: float, noise_var: float
) -> bool:
    _, deficit = _sampled_support(P, samples, target, noise_var)
    return deficit <= 0.0


def _restore_sampled_feasibility(
    samples: SampleSets,
    P: Precoder,
    target: float,
    noise_var: float,
    p_max: float,
    tols: Tolerances,
) -> Precoder | None:
    """Rate-maximization pass on the sampled problem at doubling budgets
    until the target is reachable; None when the cap is hit first."""
    if _sampled_rates_meet_target(P, samples, target, noise_var):
        return P
    budget = max(2.0 * P.total_power(), 1.0)
    # the returned objective is the exact sampled rate, which can sit a
    # convergence residual below the program's running claim; aim past the
    # target by a couple of violation tolerances so the early stop does
    # not strand us just under it
    stop_at = target + 2.0 * tols.eps_violation
    while True:
        budget = min(budget, p_max)
        state = ao_optimize_sampled(
            samples, P, budget, noise_var,
            eps_R=tols.eps_rate, max_iter=tols.max_ao_iter, stop_at=stop_at,
        )
        if state.objective >= target:
            return state.precoder
        if budget >= p_max:
            return None
        P = state.precoder
        budget *= 2.0


def _minimize_power_sampled(
    samples: SampleSets,
    P: Precoder,
    target: float,
    noise_var: float,
    tols: Tolerances,
) -> SampledWmmseState:
    """Fixed-target WMMSE descent on the sampled power problem. A step
    from a precoder whose exact sampled rates support the target never
    increases power (the refreshed pairs keep it feasible); steps from
    mid-descent iterates can bounce back up by the stale-weight residual,
    a decaying oscillation around the fixed point.

    Termination waits for the exact sampled rates to support the target,
    not just for the power to settle: the program rows hold stale-weight
    rate bounds that can overstate the final iterate by the convergence
    residual, and handing the pessimizer an unsupported claim would stall
    the outer loop on violations no new sample can remove. The returned
    split likewise covers each user's exact shortfall."""
    include_common = P.common is not None
    power = np.inf
    private_pairs = common_pairs = None
    iterations = 0
    for it in range(1, tols.max_ao_iter + 1):
        iterations = it
        private_pairs, common_pairs = _mmse_pairs(P, samples, noise_var, include_common)
        P, _, new_power = _sampled_precoder_program(
            samples, private_pairs, common_pairs, noise_var, include_common,
            P.n_t, target=target, power_scale=max(P.total_power(), 1.0),
        )
        settled = it > 1 and abs(new_power - power) < tols.eps_rate * max(1.0, abs(power))
        power = new_power
        if settled:
            _, deficit = _sampled_support(P, samples, target, noise_var)
            if deficit <= tols.eps_rate:
                break
    rates, _ = _sampled_support(P, samples, target, noise_var)
    split = np.maximum(target - rates, 0.0) if include_common else np.zeros(P.K)
    return SampledWmmseState(
        precoder=P,
        alloc=RateAllocation(max_min_rate=target, common_split=split),
        private_pairs=private_pairs,
        common_pairs=common_pairs,
        objective=power,
        inner_iterations=iterations,
    )


def verify_rate_constraints(
    P: Precoder,
    alloc: RateAllocation,
    ests: list,
    noise_var: float,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Independent pessimization pass: the largest worst-case total-rate
    violation of (P, alloc) across users and streams, in bits."""
    include_common = P.common is not None
    worst = -np.inf
    for k in range(len(ests)):
        requirement = alloc.max_min_rate - (alloc.common_split[k] if include_common else 0.0)
        res = dinkelbach_worst_case(
            P, k, "private", float(2.0 ** (-requirement)), ests[k], noise_var,
            eps_D=tols.eps_dinkelbach, m_max=tols.max_dinkelbach_iter,
        )
        worst = max(worst, requirement + float(np.log2(res.worst_mmse)))
        if include_common and alloc.common_rate > 0:
            res_c = dinkelbach_worst_case(
                P, k, "common", float(2.0 ** (-alloc.common_rate)), ests[k], noise_var,
                eps_D=tols.eps_dinkelbach, m_max=tols.max_dinkelbach_iter,
            )
            worst = max(worst, alloc.common_rate + float(np.log2(res_c.worst_mmse)))
    return float(worst)


def solve_qos(
    spec: QosSpec,
    ests: list,
    noise_var: float = 1.0,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> QosResult:
    """Cutting-set power minimization: rate-based feasibility init, then
    alternate sampled power descent (with feasibility restoration) and
    exact pessimization until the worst violation is within tolerance."""
    rs = spec.scheme == "RS"
    init = feasibility_init(spec, ests, noise_var, tols, method="cutting-set")
    if not init.feasible:
        status = "not-certified" if (rs and init.capped) else "infeasible"
        return QosResult(status=status, power=float("nan"), precoder=None, alloc=None)
    samples = init.samples
    P = init.precoder
    trace = []
    state = None
    report = None
    for outer in range(1, tols.max_outer_iter + 1):
        restored = _restore_sampled_feasibility(
            samples, P, spec.rate_target, noise_var, spec.p_max, tols
        )
        if restored is None:
            status = "not-certified" if rs else "infeasible"
            return QosResult(
                status=status,
                power=float("nan") if status == "infeasible" else P.total_power(),
                precoder=None if status == "infeasible" else P,
                alloc=None,
                trace=tuple(trace),
            )
        state = _minimize_power_sampled(samples, restored, spec.rate_target, noise_var, tols)
        samples, report = pessimize_and_extend(state, samples, ests, noise_var, tols)
        n_priv, n_comm = samples.counts()
        trace.append(
            TraceRow(
                iteration=outer,
                objective=state.objective,
                max_violation=report.max_violation,
                private_samples=n_priv,
                common_samples=n_comm,
                inner_iterations=state.inner_iterations,
            )
        )
        P = state.precoder
        if report.max_violation <= tols.eps_violation:
            return QosResult(
                status="feasible",
                power=P.total_power(),
                precoder=P,
                alloc=state.alloc,
                trace=tuple(trace),
                max_violation=report.max_violation,
            )
    return QosResult(
        status="not-certified",
        power=P.total_power(),
        precoder=P,
        alloc=state.alloc,
        trace=tuple(trace),
        max_violation=report.max_violation,
    )


def _nors_conservative_single_shot(
    spec: QosSpec,
    ests: list,
    noise_var: float,
    tol: float = DEFAULT_TOLERANCES.cone_tol,
) -> tuple[Precoder | None, float]:
    r"""Joint power minimization for the no-common-stream conservative
    design, solved in one shot.

    Substituting r_k = 1/g_k (real, by absorbing the equalizer phase into
    p_k) turns each robust MSE constraint into a ball-robust second-order
    cone constraint, whose S-lemma certificate is the LMI assembled here:
    with a_k = [P^H hhat_k - r_k e_k; sigma_n] and the error radius
    delta_k, feasibility for the whole ball is equivalent to existence of
    lambda_k >= 0 making the block matrix PSD.
    """
    K = len(ests)
    n_t = ests[0].n_t
    root_mse = float(np.sqrt(2.0 ** (-spec.rate_target)))
    sigma = float(np.sqrt(noise_var))
    b = conic.ProgramBuilder()
    cols = [(b.add_vars(n_t), b.add_vars(n_t)) for _ in range(K)]
    r_idx = b.add_vars(K)
    lam_idx = b.add_vars(K)
    s_idx = b.add_var()
    b.add_objective_term(s_idx, 1.0)
    vec_rows = []
    for re_idx, im_idx in cols:
        for t in range(n_t):
            vec_rows.append((0.0, [(int(re_idx[t]), 1.0)]))
            vec_rows.append((0.0, [(int(im_idx[t]), 1.0)]))
    b.add_squared_le(vec_rows, (0.0, [(s_idx, 1.0)]))
    from .conservative import _HermitianAffine

    for k in range(K):
        est = ests[k]
        hhat = est.nominal
        side = 1 + (K + 1) + n_t
        lmi = _HermitianAffine(side)
        # corner: sqrt(2^-target) * r_k - lambda_k
        lmi.add_term(int(r_idx[k]), 0, 0, root_mse)
        lmi.add_term(int(lam_idx[k]), 0, 0, -1.0)
        for i in range(K):
            # row entry (0, 1+i) = conj(a_i), a_i = (P^H hhat)_i - r_k [i==k]
            re_idx, im_idx = cols[i]
            for t in range(n_t):
                lmi.add_term(int(re_idx[t]), 0, 1 + i, np.conj(hhat[t]))
                lmi.add_term(int(im_idx[t]), 0, 1 + i, 1j * np.conj(hhat[t]))
            if i == k:
                lmi.add_term(int(r_idx[k]), 0, 1 + i, -1.0)
            # middle diagonal carries sqrt(2^-target) * r_k
            lmi.add_term(int(r_idx[k]), 1 + i, 1 + i, root_mse)
            # coupling block: delta * conj(P[t, i])
            for t in range(n_t):
                lmi.add_term(int(re_idx[t]), 1 + i, 1 + K + 1 + t, est.radius)
                lmi.add_term(int(im_idx[t]), 1 + i, 1 + K + 1 + t, -1j * est.radius)
        lmi.add_const(0, 1 + K, sigma)
        lmi.add_term(int(r_idx[k]), 1 + K, 1 + K, root_mse)
        for t in range(n_t):
            lmi.add_term(int(lam_idx[k]), 1 + K + 1 + t, 1 + K + 1 + t, 1.0)
        lmi.emit(b)
    sol = conic.solve_with_retries(b.build(), tol=tol)
    if sol.status != "optimal":
        return None, float("nan")
    x = sol.primal
    private = np.column_stack([x[c[0]] + 1j * x[c[1]] for c in cols])
    precoder = Precoder(private=private)
    return precoder, precoder.total_power()


def solve_qos_conservative(
    spec: QosSpec,
    ests: list,
    noise_var: float = 1.0,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> QosResult:
    """Conservative power minimization. The RS variant alternates the
    worst-case equalizer/weight steps with an LMI-constrained power
    descent from a rate-initialized feasible point; the no-common-stream
    variant is jointly convex and solved in a single SDP."""
    if spec.scheme == "NoRS":
        precoder, power = _nors_conservative_single_shot(spec, ests, noise_var)
        if precoder is None or power > spec.p_max:
            return QosResult(status="infeasible", power=float("nan"), precoder=None, alloc=None)
        alloc = RateAllocation(
            max_min_rate=spec.rate_target, common_split=np.zeros(len(ests))
        )
        violation = verify_rate_constraints(precoder, alloc, ests, noise_var, tols)
        status = "feasible" if violation <= tols.eps_violation else "not-certified"
        return QosResult(
            status=status, power=power, precoder=precoder, alloc=alloc,
            max_violation=violation,
        )
    init = feasibility_init(spec, ests, noise_var, tols, method="conservative")
    if not init.feasible:
        status = "not-certified" if init.capped else "infeasible"
        return QosResult(status=status, power=float("nan"), precoder=None, alloc=None)
    result = _conservative_loop(
        ests, noise_var, True, tols, target=spec.rate_target, P_init=init.precoder
    )
    alloc = result.alloc
    violation = verify_rate_constraints(result.precoder, alloc, ests, noise_var, tols)
    status = "feasible" if violation <= tols.eps_violation else "not-certified"
    return QosResult(
        status=status,
        power=result.precoder.total_power(),
        precoder=result.precoder,
        alloc=alloc,
        max_violation=violation,
    )
