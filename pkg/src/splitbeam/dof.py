r"""High-SNR degrees-of-freedom formulas and the achievability construction.

The max-min DoF depends only on the CSIT scaling exponents alpha_k
(uncertainty radius delta_k^2 ~ P_t^{-alpha_k}). Without a common
stream it is (alpha_1 + alpha_2)/2 over the two worst exponents; with
rate-splitting it is min over J in {2..K} of (1 + sum of the J-1
smallest exponents)/J. The allocation below realizes the RS value for
every user simultaneously via ZF beamforming with reduced-power private
streams plus a shared common stream split across users.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DofProfile",
    "DofAllocation",
    "max_min_dof_nors",
    "max_min_dof_rs",
    "achievable_allocation",
    "zf_private_precoder",
    "empirical_dof",
]


@dataclass(frozen=True)
class DofProfile:
    """CSIT scaling exponents, held sorted ascending; order maps sorted
    positions back to the caller's user indices."""

    alphas: np.ndarray
    order: np.ndarray = None

    def __post_init__(self):
        alphas = np.atleast_1d(np.asarray(self.alphas, dtype=float))
        perm = np.argsort(alphas, kind="stable")
        object.__setattr__(self, "alphas", alphas[perm])
        object.__setattr__(self, "order", perm)
        if np.any((self.alphas < 0) | (self.alphas > 1)):
            raise ValueError("scaling exponents must lie in [0, 1]")

    @property
    def K(self) -> int:
        return self.alphas.shape[0]


@dataclass(frozen=True)
class DofAllocation:
    """DoF split achieving the RS optimum: private DoF per user, common
    DoF and its per-user shares, plus the power exponents (common stream
    at full power P_t, private streams at P_t^exponent_private).

    Vectors follow the profile's sorted order.
    """

    common_dof: float
    private_dof: np.ndarray
    common_split: np.ndarray
    exponent_common: float
    exponent_private: float

    def __post_init__(self):
        private = np.asarray(self.private_dof, dtype=float)
        split = np.asarray(self.common_split, dtype=float)
        object.__setattr__(self, "private_dof", private)
        object.__setattr__(self, "common_split", split)
        if np.any(split < -1e-12):
            raise ValueError("common-split entries must be nonnegative")
        if abs(split.sum() - self.common_dof) > 1e-9:
            raise ValueError("common splits must sum to the common DoF")
        if np.any((private < -1e-12) | (private > 1 + 1e-12)):
            raise ValueError("private DoF entries must lie in [0, 1]")
        if np.any(self.common_dof + private > 1 + 1e-9):
            raise ValueError("common plus private DoF cannot exceed 1")

    def per_user_total(self) -> np.ndarray:
        return self.private_dof + self.common_split


def max_min_dof_nors(profile: DofProfile) -> float:
    """Optimal max-min DoF without a common stream: the two weakest
    exponents time-share the channel."""
    if profile.K < 2:
        raise ValueError("need at least two users")
    return float(0.5 * (profile.alphas[0] + profile.alphas[1]))


def _rs_upper_bound(alphas: np.ndarray, J: int) -> float:
    return (1.0 + float(np.sum(alphas[: J - 1]))) / J


def max_min_dof_rs(profile: DofProfile) -> tuple[float, int]:
    """Optimal max-min DoF with rate-splitting and the smallest group
    size J* attaining it."""
    if profile.K < 2:
        raise ValueError("need at least two users")
    values = [_rs_upper_bound(profile.alphas, J) for J in range(2, profile.K + 1)]
    j_star = 2 + int(np.argmin(values))
    return float(values[j_star - 2]), j_star


def achievable_allocation(profile: DofProfile) -> DofAllocation:
    """Constructive DoF split matching the RS optimum for every user.

    With a = the optimal value: users below the J*-th exponent get their
    full private DoF topped up from the common stream; the rest ride at
    private DoF a with no common share. When even the strongest user's
    exponent falls below the bound (J* = K case), everyone is topped up
    and the private power exponent drops to alpha_K.
    """
    value, j_star = max_min_dof_rs(profile)
    alphas = profile.alphas
    K = profile.K
    if j_star < K or value <= alphas[j_star - 1]:
        a = value
        private = np.minimum(alphas, a)
        split = np.where(np.arange(K) < j_star - 1, value - alphas, 0.0)
    else:
        a = float(alphas[-1])
        private = alphas.copy()
        split = value - alphas
    return DofAllocation(
        common_dof=float(1.0 - a),
        private_dof=private,
        common_split=np.maximum(split, 0.0),
        exponent_common=1.0,
        exponent_private=float(a),
    )


def zf_private_precoder(H_hat: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Zero-forcing private precoders on the estimated channels: column k
    is orthogonal to every other user's estimate and carries power q_k."""
    H_hat = np.asarray(H_hat, dtype=np.complex128)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n_t, K = H_hat.shape
    if q.shape != (K,):
        raise ValueError("need one power per user")
    if np.any(q < 0):
        raise ValueError("powers must be nonnegative")
    sv = np.linalg.svd(H_hat, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise ValueError("estimated channel matrix must have full column rank")
    raw = np.linalg.pinv(H_hat.conj().T)
    cols = []
    for k in range(K):
        col = raw[:, k]
        norm = np.linalg.norm(col)
        cols.append(col / norm * np.sqrt(q[k]))
    return np.column_stack(cols)


def empirical_dof(snr_db: np.ndarray, rates: np.ndarray) -> float:
    """Least-squares slope of rate against log2(P_t) over the window."""
    snr_db = np.atleast_1d(np.asarray(snr_db, dtype=float))
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    if snr_db.shape != rates.shape or snr_db.size < 2:
        raise ValueError("need at least two matching (snr, rate) points")
    if np.any(np.diff(snr_db) <= 0):
        raise ValueError("snr grid must be strictly increasing")
    log2_pt = snr_db * (np.log2(10.0) / 10.0)
    slope, _ = np.polyfit(log2_pt, rates, 1)
    return float(slope)
