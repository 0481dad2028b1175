"""Shared test fixtures-in-spirit: random instances and sampling oracles.

The oracles recompute every quantity from the raw receive-signal
formulas rather than calling the library's own algebra, so agreement is
evidence and not tautology: MSEs come from |g|^2 T - 2 Re{g h^H p} + 1
with powers summed directly, worst cases from dense uniform sampling of
the uncertainty ball.
"""

import numpy as np

from splitbeam import ChannelEstimate, Precoder


def random_estimates(rng: np.random.Generator, K: int, n_t: int, radius: float) -> list:
    ests = []
    for _ in range(K):
        h = (rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)) / np.sqrt(2.0)
        ests.append(ChannelEstimate(nominal=h, radius=radius))
    return ests


def random_precoder(
    rng: np.random.Generator, n_t: int, K: int, power: float, include_common: bool = True
) -> Precoder:
    cols = K + 1 if include_common else K
    raw = rng.standard_normal((n_t, cols)) + 1j * rng.standard_normal((n_t, cols))
    raw *= np.sqrt(power / np.sum(np.abs(raw) ** 2))
    if include_common:
        return Precoder(private=raw[:, 1:], common=raw[:, 0])
    return Precoder(private=raw)


def ball_points(
    rng: np.random.Generator, est: ChannelEstimate, n: int, boundary_fraction: float = 0.0
) -> np.ndarray:
    """n channels drawn from the estimate's uncertainty ball, one per row:
    uniform in the ball except for a slice pinned to the boundary sphere,
    where maxima of the objectives searched here typically live."""
    w = rng.standard_normal((n, est.n_t)) + 1j * rng.standard_normal((n, est.n_t))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    radii = est.radius * rng.uniform(size=(n, 1)) ** (1.0 / (2 * est.n_t))
    n_boundary = int(boundary_fraction * n)
    if n_boundary:
        radii[:n_boundary] = est.radius
    return est.nominal[None, :] + radii * w


def mmse_on_samples(P: Precoder, k: int, kind: str, H: np.ndarray, noise_var: float) -> np.ndarray:
    """MMSE of one stream at user k for each channel row of H, computed
    from the receive powers directly."""
    Y = H.conj() @ P.private
    own = np.abs(Y[:, k]) ** 2
    T = np.sum(np.abs(Y) ** 2, axis=1) + noise_var
    if kind == "private":
        return (T - own) / T
    if P.common is None:
        raise ValueError("no common stream")
    S_c = np.abs(H.conj() @ P.common) ** 2
    return T / (S_c + T)


def worst_mmse_oracle(
    P: Precoder,
    k: int,
    kind: str,
    est: ChannelEstimate,
    noise_var: float,
    n: int,
    rng: np.random.Generator,
) -> float:
    """Random-search estimate of max over the ball of the stream MMSE."""
    H = ball_points(rng, est, n, boundary_fraction=0.5)
    return float(np.max(mmse_on_samples(P, k, kind, H, noise_var)))


def quad_form_oracle(
    A: np.ndarray,
    est: ChannelEstimate,
    offset: float,
    n: int,
    rng: np.random.Generator,
) -> float:
    """Random-search estimate of max over the ball of h^H A h + offset."""
    H = ball_points(rng, est, n, boundary_fraction=0.5)
    vals = np.einsum("ij,jk,ik->i", H.conj(), A, H).real + offset
    return float(np.max(vals))


def dof_formulas_direct(alphas) -> tuple[float, float, int]:
    """Plain-loop evaluation of the max-min DoF formulas on sorted
    exponents: returns (no-RS value, RS value, smallest minimizing J)."""
    a = sorted(float(x) for x in alphas)
    nors = (a[0] + a[1]) / 2.0
    best, j_best = None, None
    for J in range(2, len(a) + 1):
        val = (1.0 + sum(a[: J - 1])) / J
        if best is None or val < best:
            best, j_best = val, J
    return nors, best, j_best


def worst_total_rate_sampled(
    P: Precoder,
    alloc_split: np.ndarray,
    rate: float,
    ests: list,
    noise_var: float,
    n: int,
    rng: np.random.Generator,
) -> float:
    """Largest sampled shortfall of the per-user total rates against
    `rate`: positive means some sampled channel breaks the claim."""
    worst = -np.inf
    include_common = P.common is not None
    common_rate = float(np.sum(alloc_split)) if include_common else 0.0
    for k in range(len(ests)):
        H = ball_points(rng, ests[k], n)
        private_rates = -np.log2(mmse_on_samples(P, k, "private", H, noise_var))
        need = rate - (alloc_split[k] if include_common else 0.0)
        worst = max(worst, float(need - private_rates.min()))
        if include_common and common_rate > 0:
            common_rates = -np.log2(mmse_on_samples(P, k, "common", H, noise_var))
            worst = max(worst, float(common_rate - common_rates.min()))
    return worst
