r"""Conservative WMMSE design: channel-independent equalizers and weights.

Swapping the order of the min over equalizers and the max over the
uncertainty ball decouples receivers from the unknown channel and turns
each worst-case WMSE constraint into a single linear matrix inequality
in the precoder (an S-lemma reformulation of the ball-robust norm
bound). The alternating algorithm below is the resulting baseline: it
is fast and always feasible for the true worst-case problem, but the
decoupling introduces self-interference that caps the achievable rates;
conservative_upper_bound quantifies that ceiling.
"""

from dataclasses import dataclass

import numpy as np

from . import conic
from .channel import ChannelEstimate
from .defaults import DEFAULT_TOLERANCES, Tolerances
from .rates import Precoder, RateAllocation, equalizing_split, initial_precoder

__all__ = [
    "ConservativeResult",
    "worst_case_equalizer",
    "conservative_precoder_step",
    "solve_conservative_rs",
    "solve_conservative_nors",
    "conservative_upper_bound",
]


@dataclass(frozen=True)
class ConservativeResult:
    alloc: RateAllocation
    precoder: Precoder
    iterations: int
    converged: bool
    equalizers: tuple
    weights: tuple


class _HermitianAffine:
    """Collects a Hermitian-matrix-valued affine function of real program
    variables: constant block plus one Hermitian coefficient matrix per
    variable. Entries are added on one side and mirrored."""

    def __init__(self, side: int):
        self.side = side
        self.const = np.zeros((side, side), dtype=np.complex128)
        self.terms: dict = {}

    def _mat(self, var: int) -> np.ndarray:
        if var not in self.terms:
            self.terms[var] = np.zeros((self.side, self.side), dtype=np.complex128)
        return self.terms[var]

    def add_const(self, i: int, j: int, val: complex):
        self.const[i, j] += val
        if i != j:
            self.const[j, i] += np.conj(val)

    def add_term(self, var: int, i: int, j: int, coef: complex):
        M = self._mat(int(var))
        M[i, j] += coef
        if i != j:
            M[j, i] += np.conj(coef)

    def emit(self, b: conic.ProgramBuilder):
        b.add_hermitian_psd(self.const, list(self.terms.items()))


def _robust_mse_lmi_fixed_precoder(
    b: conic.ProgramBuilder,
    cols: np.ndarray,
    target_idx: int,
    est: ChannelEstimate,
    g_re: int,
    g_im: int,
    tau: int,
    lam: int,
):
    """LMI certifying ||g h^H cols - e_target||^2 <= tau for every h in
    the ball, with the precoder matrix fixed and g the variable."""
    n_t, m = cols.shape
    side = 1 + m + n_t
    lmi = _HermitianAffine(side)
    lmi.add_term(tau, 0, 0, 1.0)
    lmi.add_term(lam, 0, 0, -1.0)
    nominal_row = est.nominal.conj() @ cols
    for i in range(m):
        lmi.add_const(1 + i, 1 + i, 1.0)
        # psi entry: g * (hhat^H cols)_i - e_target_i
        lmi.add_term(g_re, 0, 1 + i, nominal_row[i])
        lmi.add_term(g_im, 0, 1 + i, 1j * nominal_row[i])
        if i == target_idx:
            lmi.add_const(0, 1 + i, -1.0)
        for t in range(n_t):
            # -delta * conj(g) * conj(cols[t, i])
            base = -est.radius * np.conj(cols[t, i])
            lmi.add_term(g_re, 1 + i, 1 + m + t, base)
            lmi.add_term(g_im, 1 + i, 1 + m + t, -1j * base)
    for t in range(n_t):
        lmi.add_term(lam, 1 + m + t, 1 + m + t, 1.0)
    lmi.emit(b)


def _robust_mse_lmi_fixed_equalizer(
    b: conic.ProgramBuilder,
    col_vars: list,
    target_idx: int,
    est: ChannelEstimate,
    g: complex,
    tau: int,
    lam: int,
    n_t: int,
):
    """Same LMI with the equalizer fixed and the precoder columns the
    variables; col_vars lists (re_indices, im_indices) per column."""
    m = len(col_vars)
    side = 1 + m + n_t
    lmi = _HermitianAffine(side)
    lmi.add_term(tau, 0, 0, 1.0)
    lmi.add_term(lam, 0, 0, -1.0)
    hhat = est.nominal
    for i, (re_idx, im_idx) in enumerate(col_vars):
        lmi.add_const(1 + i, 1 + i, 1.0)
        if i == target_idx:
            lmi.add_const(0, 1 + i, -1.0)
        for t in range(n_t):
            # psi entry i: g * sum_t conj(hhat_t) P[t, i]
            lmi.add_term(int(re_idx[t]), 0, 1 + i, g * np.conj(hhat[t]))
            lmi.add_term(int(im_idx[t]), 0, 1 + i, 1j * g * np.conj(hhat[t]))
            # corner entry (i, t): -delta * conj(g) * conj(P[t, i])
            base = -est.radius * np.conj(g)
            lmi.add_term(int(re_idx[t]), 1 + i, 1 + m + t, base)
            lmi.add_term(int(im_idx[t]), 1 + i, 1 + m + t, -1j * base)
    for t in range(n_t):
        lmi.add_term(lam, 1 + m + t, 1 + m + t, 1.0)
    lmi.emit(b)


def worst_case_equalizer(
    P: Precoder,
    est: ChannelEstimate,
    k: int,
    kind: str,
    noise_var: float,
    tol: float = DEFAULT_TOLERANCES.cone_tol,
) -> tuple[complex, float]:
    """Channel-independent equalizer minimizing the worst-case MSE of one
    stream over the ball; returns it with the attained worst-case MSE."""
    if kind == "private":
        cols = P.private
        target = k
    elif kind == "common":
        if P.common is None:
            raise ValueError("precoder has no common stream")
        cols = P.full_matrix()
        target = 0
    else:
        raise ValueError("kind must be 'private' or 'common'")
    b = conic.ProgramBuilder()
    g_re = b.add_var()
    g_im = b.add_var()
    tau = b.add_var()
    lam = b.add_var()
    sq = b.add_var()
    b.add_objective_term(tau, 1.0)
    b.add_objective_term(sq, noise_var)
    b.add_nonnegative([(0.0, [(lam, 1.0)])])
    b.add_squared_le(
        [(0.0, [(g_re, 1.0)]), (0.0, [(g_im, 1.0)])],
        (0.0, [(sq, 1.0)]),
    )
    _robust_mse_lmi_fixed_precoder(b, cols, target, est, g_re, g_im, tau, lam)
    sol = conic.solve_with_retries(b.build(), tol=tol)
    if sol.status != "optimal":
        raise RuntimeError(f"worst-case equalizer step failed with status {sol.status}")
    g = complex(sol.primal[g_re], sol.primal[g_im])
    return g, float(sol.objective_value)


def conservative_precoder_step(
    private_g: list,
    private_u: list,
    common_g: list | None,
    common_u: list | None,
    ests: list,
    noise_var: float,
    budget: float | None = None,
    target: float | None = None,
    tol: float = DEFAULT_TOLERANCES.cone_tol,
):
    """Precoder update at fixed equalizers/weights: worst-case WMSE rate
    constraints as LMIs, either maximizing the max-min rate under a
    power budget or minimizing power at a fixed rate target.

    Returns (precoder, rate, common_split, power).
    """
    if (budget is None) == (target is None):
        raise ValueError("exactly one of budget/target must be given")
    include_common = common_g is not None
    K = len(ests)
    n_t = ests[0].n_t
    b = conic.ProgramBuilder()
    all_cols = []
    if include_common:
        common_col = (b.add_vars(n_t), b.add_vars(n_t))
        all_cols.append(common_col)
    private_cols = []
    for _ in range(K):
        col = (b.add_vars(n_t), b.add_vars(n_t))
        private_cols.append(col)
        all_cols.append(col)
    split_idx = b.add_vars(K) if include_common else None
    if budget is not None:
        rate_var = b.add_var()
        b.add_objective_term(rate_var, -1.0)
    else:
        power_var = b.add_var()
        b.add_objective_term(power_var, 1.0)

    scalar_rows = []
    for k in range(K):
        tau = b.add_var()
        lam = b.add_var()
        scalar_rows.append((0.0, [(lam, 1.0)]))
        u, g = private_u[k], private_g[k]
        _robust_mse_lmi_fixed_equalizer(
            b, private_cols, k, ests[k], g, tau, lam, n_t
        )
        # u*(tau + |g|^2 sigma^2) - log2(u) <= 1 + C_k - R_t
        offset = 1.0 + np.log2(u) - u * abs(g) ** 2 * noise_var
        terms = [(tau, -u)]
        if include_common:
            terms.append((int(split_idx[k]), 1.0))
        if budget is not None:
            terms.append((rate_var, -1.0))
        else:
            offset -= target
        scalar_rows.append((offset, terms))
        if include_common:
            tau_c = b.add_var()
            lam_c = b.add_var()
            scalar_rows.append((0.0, [(lam_c, 1.0)]))
            u_c, g_c = common_u[k], common_g[k]
            _robust_mse_lmi_fixed_equalizer(
                b, all_cols, 0, ests[k], g_c, tau_c, lam_c, n_t
            )
            offset_c = 1.0 + np.log2(u_c) - u_c * abs(g_c) ** 2 * noise_var
            terms_c = [(tau_c, -u_c)] + [(int(split_idx[l]), -1.0) for l in range(K)]
            scalar_rows.append((offset_c, terms_c))
    if include_common:
        scalar_rows.extend((0.0, [(int(split_idx[k]), 1.0)]) for k in range(K))
    b.add_nonnegative(scalar_rows)

    vec_rows = []
    for re_idx, im_idx in all_cols:
        for t in range(n_t):
            vec_rows.append((0.0, [(int(re_idx[t]), 1.0)]))
            vec_rows.append((0.0, [(int(im_idx[t]), 1.0)]))
    if budget is not None:
        b.add_soc([(float(np.sqrt(budget)), [])] + vec_rows)
    else:
        b.add_squared_le(vec_rows, (0.0, [(power_var, 1.0)]))

    sol = conic.solve_with_retries(b.build(), tol=tol)
    if sol.status != "optimal":
        raise RuntimeError(f"conservative precoder step failed with status {sol.status}")
    x = sol.primal
    private = np.column_stack([x[c[0]] + 1j * x[c[1]] for c in private_cols])
    common = x[common_col[0]] + 1j * x[common_col[1]] if include_common else None
    precoder = Precoder(private=private, common=common)
    split = np.maximum(x[split_idx], 0.0) if include_common else np.zeros(K)
    rate = float(x[rate_var]) if budget is not None else float(target)
    return precoder, rate, split, precoder.total_power()


def _conservative_loop(
    ests: list,
    noise_var: float,
    include_common: bool,
    tols: Tolerances,
    budget: float | None = None,
    target: float | None = None,
    P_init: Precoder | None = None,
):
    if P_init is None:
        if budget is None:
            raise ValueError("power minimization needs a feasible starting precoder")
        P = initial_precoder([e.nominal for e in ests], budget, include_common)
    else:
        P = P_init
    K = len(ests)
    objective = np.inf if budget is None else -np.inf
    rate = 0.0
    split = np.zeros(K)
    converged = False
    iterations = 0
    private_g = private_u = common_g = common_u = None
    for it in range(1, tols.max_ao_iter + 1):
        iterations = it
        private_g, private_u = [], []
        for k in range(K):
            g, eps = worst_case_equalizer(P, ests[k], k, "private", noise_var)
            private_g.append(g)
            private_u.append(1.0 / max(eps, 1e-12))
        if include_common:
            common_g, common_u = [], []
            for k in range(K):
                g, eps = worst_case_equalizer(P, ests[k], k, "common", noise_var)
                common_g.append(g)
                common_u.append(1.0 / max(eps, 1e-12))
        P, rate, split, power = conservative_precoder_step(
            private_g, private_u, common_g, common_u, ests, noise_var,
            budget=budget, target=target,
        )
        new_objective = rate if budget is not None else power
        if it > 1:
            delta = abs(new_objective - objective)
            scale = 1.0 if budget is not None else max(1.0, abs(objective))
            if delta < tols.eps_rate * scale:
                objective = new_objective
                converged = True
                break
        objective = new_objective
    # Final claims come from a fresh equalizer pass at the returned
    # precoder: r = -log2(worst-case MSE at the robust g) is met by every
    # ball member, so an allocation built from these floors never
    # overstates what P supports. The last program's rows carry weights
    # from the previous iterate and can overstate by the convergence
    # residual, which is enough to fail an independent certification.
    private_g, private_u = [], []
    private_rates = np.zeros(K)
    for k in range(K):
        g, eps = worst_case_equalizer(P, ests[k], k, "private", noise_var)
        private_g.append(g)
        private_u.append(1.0 / max(eps, 1e-12))
        private_rates[k] = -np.log2(max(eps, 1e-12))
    if include_common:
        common_g, common_u = [], []
        common_floor = np.inf
        for k in range(K):
            g_c, eps_c = worst_case_equalizer(P, ests[k], k, "common", noise_var)
            common_g.append(g_c)
            common_u.append(1.0 / max(eps_c, 1e-12))
            common_floor = min(common_floor, -np.log2(max(eps_c, 1e-12)))
        common_floor = max(float(common_floor), 0.0)
        if target is None:
            split = equalizing_split(private_rates, common_floor)
            rate = float(np.min(private_rates + split))
        else:
            split = np.maximum(target - private_rates, 0.0)
            rate = float(target)
    else:
        split = np.zeros(K)
        rate = float(private_rates.min()) if target is None else float(target)
    alloc = RateAllocation(max_min_rate=max(rate, 0.0), common_split=split)
    return ConservativeResult(
        alloc=alloc,
        precoder=P,
        iterations=iterations,
        converged=converged,
        equalizers=(tuple(private_g), tuple(common_g) if include_common else ()),
        weights=(tuple(private_u), tuple(common_u) if include_common else ()),
    )


def solve_conservative_rs(
    ests: list,
    budget: float,
    noise_var: float = 1.0,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> ConservativeResult:
    """Alternating conservative design with a common stream: equalizer
    step, weight step u = 1/eps, precoder step, until the max-min rate
    settles. The result is feasible for the exact worst-case problem."""
    if not budget > 0:
        raise ValueError("power budget must be positive")
    return _conservative_loop(ests, noise_var, True, tols, budget=budget)


def solve_conservative_nors(
    ests: list,
    budget: float,
    noise_var: float = 1.0,
    tols: Tolerances = DEFAULT_TOLERANCES,
) -> ConservativeResult:
    if not budget > 0:
        raise ValueError("power budget must be positive")
    return _conservative_loop(ests, noise_var, False, tols, budget=budget)


def conservative_upper_bound(
    P: Precoder,
    est: ChannelEstimate,
    k: int,
    noise_var: float,
    sigma_e_sq: float | None = None,
) -> tuple[float, float]:
    """Rate ceiling of the conservative design at a given precoder.

    Averaging the receive powers over an isotropic error of per-entry
    variance sigma_e_sq (default delta^2 / n_t) adds a self-interference
    term sigma_e_sq * ||p||^2 to each stream's noise floor; the returned
    log2(1 + SINR) values bound what the conservative design can reach.
    """
    if sigma_e_sq is None:
        sigma_e_sq = est.radius**2 / est.n_t
    hhat = est.nominal
    R = np.outer(hhat, hhat.conj()) + sigma_e_sq * np.eye(est.n_t)

    def avg_power(p: np.ndarray) -> float:
        return float((p.conj() @ R @ p).real)

    powers = [avg_power(P.private[:, i]) for i in range(P.K)]
    interference = sum(powers) - powers[k] + noise_var
    p_k = P.private[:, k]
    own = abs(np.vdot(p_k, hhat)) ** 2
    gamma_private = own / (interference + sigma_e_sq * float(np.vdot(p_k, p_k).real))
    total = sum(powers) + noise_var
    p_c = P.common_or_zero()
    own_c = abs(np.vdot(p_c, hhat)) ** 2
    gamma_common = own_c / (total + sigma_e_sq * float(np.vdot(p_c, p_c).real))
    return float(np.log2(1.0 + gamma_common)), float(np.log2(1.0 + gamma_private))
