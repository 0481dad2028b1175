r"""Cutting-set max-min precoder design under ball-bounded CSIT error.

The semi-infinite worst-case problem is solved by alternating two
phases. Optimization: run WMMSE alternating optimization on a sampled
version of the problem, where each sampled channel carries its own
equalizer and weight, so the precoder step is a plain conic program.
Pessimization: for every user and stream, find the exactly worst
channel in the ball via Dinkelbach; a channel violating the current
rates joins the sample set. The loop stops once the largest violation
drops below tolerance, which certifies the returned rates.
"""

from dataclasses import dataclass, field

import numpy as np

from . import conic
from .channel import ChannelEstimate
from .defaults import DEFAULT_TOLERANCES, Tolerances
from .pessimizer import dinkelbach_worst_case
from .rates import (
    EqualizerWeightPair,
    Precoder,
    RateAllocation,
    equalizing_split,
    initial_precoder,
    mmse_equalizers,
    mmse_values,
)

__all__ = [
    "SampleSets",
    "SampledWmmseState",
    "ViolationReport",
    "TraceRow",
    "MaxMinResult",
    "ao_optimize_sampled",
    "pessimize_and_extend",
    "solve_max_min_rs",
    "solve_max_min_nors",
]


@dataclass
class SampleSets:
    """Discretized uncertainty regions: one list of channels per user for
    the private stream and one for the common stream. Lists start at the
    nominal estimate and only ever grow."""

    private: list
    common: list

    @classmethod
    def initial(cls, ests: list, include_common: bool) -> "SampleSets":
        private = [[est.nominal.copy()] for est in ests]
        common = [[est.nominal.copy()] for est in ests] if include_common else [[] for _ in ests]
        return cls(private=private, common=common)

    def counts(self) -> tuple[int, int]:
        return (
            sum(len(s) for s in self.private),
            sum(len(s) for s in self.common),
        )


@dataclass(frozen=True)
class SampledWmmseState:
    precoder: Precoder
    alloc: RateAllocation
    private_pairs: list
    common_pairs: list
    objective: float
    inner_iterations: int


@dataclass(frozen=True)
class ViolationReport:
    """Worst-case rate shortfalls after one pessimization pass; negative
    entries mean slack."""

    private: np.ndarray
    common: np.ndarray

    @property
    def max_violation(self) -> float:
        entries = [self.private.max()]
        if self.common.size:
            entries.append(self.common.max())
        return float(max(entries))


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    objective: float
    max_violation: float
    private_samples: int
    common_samples: int
    inner_iterations: int


@dataclass(frozen=True)
class MaxMinResult:
    alloc: RateAllocation
    precoder: Precoder
    trace: tuple
    certified: bool
    max_violation: float
    samples: SampleSets = None


def _mmse_pairs(P: Precoder, samples: SampleSets, noise_var: float, include_common: bool):
    """Closed-form equalizer/weight pair for every sampled channel."""
    private_pairs = []
    common_pairs = []
    for k in range(P.K):
        row = []
        for h in samples.private[k]:
            _, g = mmse_equalizers(h, P, k, noise_var)
            _, eps = mmse_values(h, P, k, noise_var)
            row.append(EqualizerWeightPair(g=g, u=1.0 / eps))
        private_pairs.append(row)
        row_c = []
        if include_common:
            for h in samples.common[k]:
                g_c, _ = mmse_equalizers(h, P, k, noise_var)
                eps_c, _ = mmse_values(h, P, k, noise_var)
                row_c.append(EqualizerWeightPair(g=g_c, u=1.0 / eps_c))
        common_pairs.append(row_c)
    return private_pairs, common_pairs


def _inner_product_rows(h: np.ndarray, re_idx, im_idx, scale: float = 1.0):
    """Affine rows for Re and Im of h^H p with p's real/imag variables."""
    re_terms = []
    im_terms = []
    for t in range(h.shape[0]):
        hr, hi = h[t].real, h[t].imag
        re_terms.append((int(re_idx[t]), scale * hr))
        re_terms.append((int(im_idx[t]), scale * hi))
        im_terms.append((int(im_idx[t]), scale * hr))
        im_terms.append((int(re_idx[t]), -scale * hi))
    return (0.0, re_terms), (0.0, im_terms)


def _wmse_constraint(
    b: conic.ProgramBuilder,
    h: np.ndarray,
    pair: EqualizerWeightPair,
    signal_cols: list,
    own_col,
    noise_var: float,
    rhs_offset: float,
    rhs_terms: list,
):
    """One sampled WMSE rate constraint u*eps(h) <= rhs in the form
    ||g * h^H p_i stacked, own entry less one, g*sigma||^2 <= rhs/u.

    Two choices here carry the numerics at high power. The minus-one
    residual stays inside the norm, so a tiny MSE shows up as a small
    cone entry instead of a cancellation between O(1) terms on the right
    side. And the inequality is scaled by 1/u (the weight is fixed data),
    which keeps the right side O(1) however small the sampled MMSE."""
    g, u = pair.g, pair.u
    z_rows = []
    for col in signal_cols:
        re_row, im_row = _inner_product_rows(h, col[0], col[1])
        # z = g * h^H p: Re = g_r Re(y) - g_i Im(y), Im = g_r Im(y) + g_i Re(y)
        re_terms = [(i, g.real * c) for i, c in re_row[1]]
        re_terms += [(i, -g.imag * c) for i, c in im_row[1]]
        im_terms = [(i, g.real * c) for i, c in im_row[1]]
        im_terms += [(i, g.imag * c) for i, c in re_row[1]]
        z_rows.append((-1.0 if col is own_col else 0.0, re_terms))
        z_rows.append((0.0, im_terms))
    z_rows.append((abs(g) * float(np.sqrt(noise_var)), []))
    w_row = (rhs_offset / u, [(idx, c / u) for idx, c in rhs_terms])
    b.add_squared_le(z_rows, w_row)


def _sampled_precoder_program(
    samples: SampleSets,
    private_pairs: list,
    common_pairs: list,
    noise_var: float,
    include_common: bool,
    n_t: int,
    budget: float | None = None,
    target: float | None = None,
    power_scale: float = 1.0,
    tol: float = DEFAULT_TOLERANCES.cone_tol,
):
    """Fixed-(g, u) precoder step over the sampled constraints.

    budget set: maximize the max-min total rate under tr(PP^H) <= budget.
    target set: minimize tr(PP^H) under total-rate constraints at target;
    power_scale (roughly the incumbent power) normalizes the variables.

    The precoder is substituted as sqrt(scale) * variable so the solver
    sees unit-magnitude columns whatever the power level; equivalently
    the sampled channels are scaled up by sqrt(scale).
    """
    if (budget is None) == (target is None):
        raise ValueError("exactly one of budget/target must be given")
    scale = float(budget) if budget is not None else float(power_scale)
    if not scale > 0:
        raise ValueError("power scale must be positive")
    root_scale = np.sqrt(scale)
    K = len(samples.private)
    b = conic.ProgramBuilder()
    cols = []
    if include_common:
        common_col = (b.add_vars(n_t), b.add_vars(n_t))
        cols.append(common_col)
    private_cols = []
    for _ in range(K):
        col = (b.add_vars(n_t), b.add_vars(n_t))
        private_cols.append(col)
        cols.append(col)
    split_idx = b.add_vars(K) if include_common else None
    if budget is not None:
        rate_var = b.add_var()
        b.add_objective_term(rate_var, -1.0)
    else:
        power_var = b.add_var()
        b.add_objective_term(power_var, 1.0)

    for k in range(K):
        for h, pair in zip(samples.private[k], private_pairs[k]):
            # 1 - xi + C_k >= R_t: rhs = 1 + log2(u) + C_k - R_t
            rhs_offset = 1.0 + np.log2(pair.u)
            rhs_terms = []
            if include_common:
                rhs_terms.append((int(split_idx[k]), 1.0))
            if budget is not None:
                rhs_terms.append((rate_var, -1.0))
            else:
                rhs_offset -= target
            _wmse_constraint(
                b, root_scale * h, pair, private_cols, private_cols[k], noise_var,
                rhs_offset, rhs_terms,
            )
        if include_common:
            for h, pair in zip(samples.common[k], common_pairs[k]):
                # 1 - xi_c >= sum_l C_l
                rhs_offset = 1.0 + np.log2(pair.u)
                rhs_terms = [(int(split_idx[l]), -1.0) for l in range(K)]
                _wmse_constraint(
                    b, root_scale * h, pair, cols, common_col, noise_var,
                    rhs_offset, rhs_terms,
                )
    if include_common:
        b.add_nonnegative([(0.0, [(int(split_idx[k]), 1.0)]) for k in range(K)])

    vec_rows = []
    for re_idx, im_idx in cols:
        for t in range(n_t):
            vec_rows.append((0.0, [(int(re_idx[t]), 1.0)]))
            vec_rows.append((0.0, [(int(im_idx[t]), 1.0)]))
    if budget is not None:
        b.add_soc([(1.0, [])] + vec_rows)
    else:
        b.add_squared_le(vec_rows, (0.0, [(power_var, 1.0 / scale)]))

    sol = conic.solve_with_retries(b.build(), tol=tol)
    if sol.status != "optimal":
        raise RuntimeError(f"sampled precoder step failed with status {sol.status}")
    x = sol.primal

    def col_value(col):
        return root_scale * (x[col[0]] + 1j * x[col[1]])

    private = np.column_stack([col_value(c) for c in private_cols])
    common = col_value(common_col) if include_common else None
    precoder = Precoder(private=private, common=common)
    if budget is not None and precoder.total_power() > budget:
        # interior-point slack can leave the power a whisker over budget;
        # project back so every iterate is feasible in the strict sense
        shrink = np.sqrt(budget / precoder.total_power())
        precoder = Precoder(
            private=shrink * private, common=shrink * common if include_common else None
        )
    split = np.maximum(x[split_idx], 0.0) if include_common else np.zeros(K)
    if budget is not None:
        objective = float(x[rate_var])
        alloc = RateAllocation(max_min_rate=max(objective, 0.0), common_split=split)
    else:
        objective = precoder.total_power()
        alloc = RateAllocation(max_min_rate=target, common_split=split)
    return precoder, alloc, objective


def _exact_sampled_alloc(
    P: Precoder, samples: SampleSets, noise_var: float, include_common: bool
) -> tuple[RateAllocation, float]:
    """Allocation the final precoder actually supports on the sample sets,
    from exact MMSE rates rather than the program's stale-weight bounds.

    The weighted-MSE surrogate touches the true rate only at the fixed
    point (u*eps - log2(u) at u = 1/eps), so mid-run program claims can
    overshoot by the AO convergence residual; rebuilding the split from
    exact rates keeps every reported allocation honest at the samples."""
    K = len(samples.private)
    private_rates = np.array(
        [
            min(-np.log2(mmse_values(h, P, k, noise_var)[1]) for h in samples.private[k])
            for k in range(K)
        ]
    )
    if not include_common:
        value = float(private_rates.min())
        return (
            RateAllocation(max_min_rate=max(value, 0.0), common_split=np.zeros(K)),
            value,
        )
    common_rate = min(
        min(-np.log2(mmse_values(h, P, k, noise_var)[0]) for h in samples.common[k])
        for k in range(K)
    )
    split = equalizing_split(private_rates, max(float(common_rate), 0.0))
    value = float(np.min(private_rates + split))
    return RateAllocation(max_min_rate=max(value, 0.0), common_split=split), value


def ao_optimize_sampled(
    samples: SampleSets,
    P_init: Precoder,
    budget: float,
    noise_var: float,
    eps_R: float = DEFAULT_TOLERANCES.eps_rate,
    max_iter: int = DEFAULT_TOLERANCES.max_ao_iter,
    stop_at: float | None = None,
) -> SampledWmmseState:
    """WMMSE alternating optimization on the sampled max-min problem; the
    objective (sampled max-min total rate) never decreases. stop_at ends
    the loop early once the objective reaches that level, which is all a
    feasibility search needs."""
    include_common = P_init.common is not None
    P = P_init
    objective = -np.inf
    private_pairs = common_pairs = None
    alloc = None
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        private_pairs, common_pairs = _mmse_pairs(P, samples, noise_var, include_common)
        P, alloc, new_objective = _sampled_precoder_program(
            samples,
            private_pairs,
            common_pairs,
            noise_var,
            include_common,
            P.n_t,
            budget=budget,
        )
        if stop_at is not None and new_objective >= stop_at:
            objective = new_objective
            break
        if it > 1 and abs(new_objective - objective) < eps_R:
            objective = new_objective
            break
        objective = new_objective
    alloc, objective = _exact_sampled_alloc(P, samples, noise_var, include_common)
    return SampledWmmseState(
        precoder=P,
        alloc=alloc,
        private_pairs=private_pairs,
        common_pairs=common_pairs,
        objective=objective,
        inner_iterations=iterations,
    )


def _is_duplicate(h: np.ndarray, pool: list, tol: float) -> bool:
    return any(np.linalg.norm(h - other) <= tol for other in pool)


def pessimize_and_extend(
    state: SampledWmmseState,
    samples: SampleSets,
    ests: list,
    noise_var: float,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[SampleSets, ViolationReport]:
    """Exact worst-case pass at the current design: compute each stream's
    rate violation and append every violating channel to its sample set."""
    P = state.precoder
    include_common = P.common is not None
    R_t = state.alloc.max_min_rate
    split = state.alloc.common_split
    common_rate = state.alloc.common_rate
    K = len(ests)
    v_private = np.zeros(K)
    v_common = np.zeros(K if include_common else 0)
    new_private = [list(s) for s in samples.private]
    new_common = [list(s) for s in samples.common]
    for k in range(K):
        requirement = R_t - split[k] if include_common else R_t
        threshold = float(2.0 ** (-requirement))
        res = dinkelbach_worst_case(
            P, k, "private", threshold, ests[k], noise_var,
            eps_D=tols.eps_dinkelbach, m_max=tols.max_dinkelbach_iter,
        )
        v_private[k] = requirement + np.log2(res.worst_mmse)
        if res.violated and not _is_duplicate(res.worst_channel, new_private[k], tols.duplicate_tol):
            new_private[k].append(res.worst_channel)
        if include_common:
            thr_c = float(2.0 ** (-common_rate)) if common_rate > 0 else 1.0
            res_c = dinkelbach_worst_case(
                P, k, "common", thr_c, ests[k], noise_var,
                eps_D=tols.eps_dinkelbach, m_max=tols.max_dinkelbach_iter,
            )
            v_common[k] = common_rate + np.log2(res_c.worst_mmse)
            if res_c.violated and not _is_duplicate(res_c.worst_channel, new_common[k], tols.duplicate_tol):
                new_common[k].append(res_c.worst_channel)
    return (
        SampleSets(private=new_private, common=new_common),
        ViolationReport(private=v_private, common=v_common),
    )


def _cutting_set_loop(
    ests: list,
    budget: float,
    noise_var: float,
    include_common: bool,
    tols: Tolerances,
) -> MaxMinResult:
    samples = SampleSets.initial(ests, include_common)
    P = initial_precoder([e.nominal for e in ests], budget, include_common)
    trace = []
    state = None
    report = None
    certified = False
    for outer in range(1, tols.max_outer_iter + 1):
        state = ao_optimize_sampled(
            samples, P, budget, noise_var, eps_R=tols.eps_rate, max_iter=tols.max_ao_iter
        )
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
            certified = True
            break
    return MaxMinResult(
        alloc=state.alloc,
        precoder=state.precoder,
        trace=tuple(trace),
        certified=certified,
        max_violation=report.max_violation,
        samples=samples,
    )


def solve_max_min_rs(
    ests: list,
    budget: float,
    noise_var: float = 1.0,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> MaxMinResult:
    """Max-min worst-case total rate with a common stream and rate split."""
    if not budget > 0:
        raise ValueError("power budget must be positive")
    return _cutting_set_loop(ests, budget, noise_var, include_common=True, tols=tols)


def solve_max_min_nors(
    ests: list,
    budget: float,
    noise_var: float = 1.0,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> MaxMinResult:
    """Private-streams-only variant: same machinery with the common
    precoder and rate split removed."""
    if not budget > 0:
        raise ValueError("power budget must be positive")
    return _cutting_set_loop(ests, budget, noise_var, include_common=False, tols=tols)
