"""Fast oracle-backed sanity checks behind the ``selftest`` subcommand.

Each check recomputes an expected value by an independent route (closed
form, brute sampling, or an algebraic identity) and compares. The suite
is deterministic and finishes in a few seconds; it is a smoke screen for
broken installs, not a replacement for the test suite.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelEstimate, sample_channel, sample_error_in_ball
from .conic import hermitian_embed
from .cutting_set import solve_max_min_rs
from .defaults import DEFAULT_TOLERANCES
from .dof import DofProfile, achievable_allocation, max_min_dof_nors, max_min_dof_rs
from .pessimizer import parametric_objective, solve_trust_region
from .rates import initial_precoder, mmse_equalizers, mmse_values, mse, sinr_and_rates

__all__ = ["CheckResult", "run_all"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _check(name, ok, detail=""):
    return CheckResult(name=name, ok=bool(ok), detail=detail)


def _random_instance(rng, K=3, n_t=3):
    H = np.stack([sample_channel(rng, n_t) for _ in range(K)], axis=1)
    P = initial_precoder([H[:, k] for k in range(K)], p_t=10.0, include_common=True)
    return H, P


def check_embedding(rng) -> CheckResult:
    n = 4
    B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    M = B + B.conj().T
    want = np.sort(np.repeat(np.linalg.eigvalsh(M), 2))
    got = np.sort(np.linalg.eigvalsh(hermitian_embed(M)))
    err = float(np.max(np.abs(want - got)))
    return _check("real embedding doubles eigenvalues", err < 1e-9, f"max err {err:.2e}")


def check_rate_identity(rng) -> CheckResult:
    worst = 0.0
    for _ in range(50):
        H, P = _random_instance(rng)
        k = int(rng.integers(3))
        h = H[:, k]
        g_c, g = mmse_equalizers(h, P, k, noise_var=1.0)
        eps_c, eps = mmse_values(h, P, k, noise_var=1.0)
        _, _, R_c, R = sinr_and_rates(h, P, k, noise_var=1.0)
        # xi = u*eps - log2(u) at the optimal weight equals 1 - R
        for e, r in ((eps_c, R_c), (eps, R)):
            u = 1.0 / e
            xi = u * e - np.log2(u)
            worst = max(worst, abs(xi - (1.0 - r)))
        # perturbing the equalizer can only increase the error
        g2 = g * (1.0 + 0.01) + 0.01j
        worst_mse = mse(h, P, k, g_c, g2, noise_var=1.0)[1]
        if worst_mse < eps - 1e-12:
            return _check("rate identity and equalizer optimality", False, "perturbed equalizer beat the closed form")
    return _check("rate identity and equalizer optimality", worst < 1e-10, f"max err {worst:.2e}")


def check_trust_region() -> CheckResult:
    est = ChannelEstimate(nominal=np.array([1.0 + 0.0j]), radius=0.5)
    _, hi = solve_trust_region(np.array([[1.0 + 0.0j]]), est)
    _, lo = solve_trust_region(np.array([[-1.0 + 0.0j]]), est)
    ok = abs(hi - 2.25) < 1e-6 and abs(lo - (-0.25)) < 1e-6
    return _check("ball-constrained quadratic closed forms", ok, f"got {hi:.6f}, {lo:.6f}")


def check_trust_region_sampling(rng) -> CheckResult:
    n = 2
    B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = B + B.conj().T
    est = ChannelEstimate(nominal=sample_channel(rng, n), radius=0.3)
    _, value = solve_trust_region(A, est)
    best = -np.inf
    for _ in range(2000):
        h = est.nominal + sample_error_in_ball(rng, est.radius, n)
        best = max(best, parametric_objective(A, h))
    ok = value >= best - 1e-6
    return _check("worst case dominates ball samples", ok, f"solver {value:.6f} vs sampled {best:.6f}")


def check_dof() -> CheckResult:
    for alphas in ([0.0, 0.0], [0.2, 0.6, 1.0], [0.0, 0.5, 0.5], [0.3, 0.3, 0.9, 1.0]):
        prof = DofProfile(alphas=np.array(alphas))
        value, _ = max_min_dof_rs(prof)
        alloc = achievable_allocation(prof)
        totals = alloc.per_user_total()
        if abs(float(np.min(totals)) - value) > 1e-12 or np.ptp(totals) > 1e-12:
            return _check("degrees-of-freedom allocation meets the bound", False, f"alphas {alphas}")
        if len(alphas) >= 2 and value < max_min_dof_nors(prof) - 1e-12:
            return _check("degrees-of-freedom allocation meets the bound", False, "splitting lost to no splitting")
    return _check("degrees-of-freedom allocation meets the bound", True, "")


def check_ball_sampling(rng) -> CheckResult:
    n_t, radius = 3, 0.15
    draws = np.array([np.linalg.norm(sample_error_in_ball(rng, radius, n_t)) for _ in range(4000)])
    if np.any(draws > radius + 1e-12):
        return _check("uniform ball sampling", False, "draw escaped the ball")
    median_want = radius * 2.0 ** (-1.0 / (2 * n_t))
    frac = float(np.mean(draws <= median_want))
    return _check("uniform ball sampling", abs(frac - 0.5) < 0.05, f"median split {frac:.3f}")


def check_pipeline(rng) -> CheckResult:
    n_t = 2
    ests = [
        ChannelEstimate(nominal=sample_channel(rng, n_t), radius=0.1)
        for _ in range(2)
    ]
    result = solve_max_min_rs(ests, budget=10.0, noise_var=1.0, tols=DEFAULT_TOLERANCES)
    objs = [row.objective for row in result.trace]
    ok = result.certified and result.alloc.max_min_rate > 0.0 and result.precoder.total_power() <= 10.0 + 1e-6
    detail = f"rate {result.alloc.max_min_rate:.4f}, {len(objs)} outer steps"
    return _check("end-to-end robust design certifies", ok, detail)


def run_all(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [
        check_embedding(rng),
        check_rate_identity(rng),
        check_trust_region(),
        check_trust_region_sampling(rng),
        check_dof(),
        check_ball_sampling(rng),
        check_pipeline(rng),
    ]
