r"""SINR, rate, MSE and weighted-MSE algebra for one channel realization.

Everything here is deterministic given (h, P): receive powers, MMSE
equalizers, the MSE/WMSE quantities the alternating solvers iterate on,
and the rate identities tying them together. All rates are in bits
(log base 2); noise variance is an explicit argument everywhere so SNR
sweeps carry no hidden state.

Stream convention: the common stream is decoded first treating all
private streams as noise, then removed, so private-stream interference
excludes the common precoder entirely.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Precoder",
    "RateAllocation",
    "EqualizerWeightPair",
    "PowerDecomposition",
    "receive_powers",
    "sinr_and_rates",
    "mmse_equalizers",
    "mse",
    "mmse_values",
    "wmse",
    "total_rates",
    "equalizing_split",
    "initial_precoder",
]


@dataclass(frozen=True)
class Precoder:
    """Common precoding vector plus the N_t x K matrix of private ones.

    common may be None for designs that never transmit a common stream;
    power accounting then just skips it.
    """

    private: np.ndarray
    common: np.ndarray | None = None

    def __post_init__(self):
        private = np.asarray(self.private, dtype=np.complex128)
        object.__setattr__(self, "private", private)
        if private.ndim != 2:
            raise ValueError("private precoders must form an n_t x K matrix")
        if self.common is not None:
            common = np.asarray(self.common, dtype=np.complex128)
            object.__setattr__(self, "common", common)
            if common.shape != (private.shape[0],):
                raise ValueError("common precoder length must match n_t")
        if not np.isfinite(self.total_power()):
            raise ValueError("precoder power must be finite")

    @property
    def n_t(self) -> int:
        return self.private.shape[0]

    @property
    def K(self) -> int:
        return self.private.shape[1]

    def common_or_zero(self) -> np.ndarray:
        if self.common is None:
            return np.zeros(self.n_t, dtype=np.complex128)
        return self.common

    def full_matrix(self) -> np.ndarray:
        """[p_c, p_1, ..., p_K] with a zero column standing in for an
        absent common stream."""
        return np.column_stack([self.common_or_zero(), self.private])

    def common_power(self) -> float:
        if self.common is None:
            return 0.0
        return float(np.vdot(self.common, self.common).real)

    def private_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.private) ** 2, axis=0)

    def total_power(self) -> float:
        return self.common_power() + float(np.sum(self.private_powers()))


@dataclass(frozen=True)
class RateAllocation:
    """Solver output: the max-min total rate plus each user's share of the
    common rate. Share sum equals the worst-case common rate at a
    solution; that is the solver's postcondition, not enforced here."""

    max_min_rate: float
    common_split: np.ndarray

    def __post_init__(self):
        split = np.atleast_1d(np.asarray(self.common_split, dtype=float))
        object.__setattr__(self, "common_split", split)
        if self.max_min_rate < 0:
            raise ValueError("max-min rate must be nonnegative")
        if np.any(split < -1e-9):
            raise ValueError("common-rate shares must be nonnegative")

    @property
    def common_rate(self) -> float:
        return float(np.sum(self.common_split))


@dataclass(frozen=True)
class EqualizerWeightPair:
    g: complex
    u: float

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError("weight must be positive")


@dataclass(frozen=True)
class PowerDecomposition:
    """Receive-power split at one user: signal/interference terms for the
    common stream (decoded first) and its own private stream."""

    S_c: float
    S: float
    I: float

    def __post_init__(self):
        if min(self.S_c, self.S) < 0 or self.I <= 0:
            raise ValueError("powers must be nonnegative with I > 0")

    @property
    def T(self) -> float:
        return self.S + self.I

    @property
    def I_c(self) -> float:
        return self.T

    @property
    def T_c(self) -> float:
        return self.S_c + self.T


def receive_powers(h: np.ndarray, P: Precoder, k: int, noise_var: float) -> PowerDecomposition:
    """Split user k's receive power into common signal, private signal,
    and private-plus-noise interference."""
    h = np.asarray(h, dtype=np.complex128)
    y = h.conj() @ P.private
    s_c = abs(np.vdot(h, P.common_or_zero())) ** 2
    s = abs(y[k]) ** 2
    interference = float(np.sum(np.abs(y) ** 2) - abs(y[k]) ** 2)
    return PowerDecomposition(S_c=float(s_c), S=float(s), I=max(interference, 0.0) + noise_var)


def sinr_and_rates(
    h: np.ndarray, P: Precoder, k: int, noise_var: float
) -> tuple[float, float, float, float]:
    """(gamma_c, gamma, R_c, R) for user k: common-stream SINR treats all
    private streams as noise, private SINR assumes the common stream is
    already removed."""
    d = receive_powers(h, P, k, noise_var)
    gamma_c = d.S_c / d.I_c
    gamma = d.S / d.I
    return gamma_c, gamma, float(np.log2(1 + gamma_c)), float(np.log2(1 + gamma))


def mmse_equalizers(h: np.ndarray, P: Precoder, k: int, noise_var: float) -> tuple[complex, complex]:
    """Scalar MMSE equalizers g_c = p_c^H h / T_c and g = p_k^H h / T."""
    h = np.asarray(h, dtype=np.complex128)
    d = receive_powers(h, P, k, noise_var)
    g_c = np.vdot(P.common_or_zero(), h) / d.T_c
    g = np.vdot(P.private[:, k], h) / d.T
    return complex(g_c), complex(g)


def mse(
    h: np.ndarray, P: Precoder, k: int, g_c: complex, g: complex, noise_var: float
) -> tuple[float, float]:
    """MSEs of both streams at user k under the given equalizers:
    eps = |g|^2 T - 2 Re{g h^H p} + 1 with the stream's own total power T."""
    h = np.asarray(h, dtype=np.complex128)
    d = receive_powers(h, P, k, noise_var)
    eps_c = abs(g_c) ** 2 * d.T_c - 2 * (g_c * np.vdot(h, P.common_or_zero())).real + 1
    eps = abs(g) ** 2 * d.T - 2 * (g * np.vdot(h, P.private[:, k])).real + 1
    return float(eps_c), float(eps)


def mmse_values(h: np.ndarray, P: Precoder, k: int, noise_var: float) -> tuple[float, float]:
    """Minimum MSEs I_c/T_c and I/T; both lie in (0, 1]."""
    d = receive_powers(h, P, k, noise_var)
    return d.I_c / d.T_c, d.I / d.T


def wmse(eps: float, u: float) -> float:
    """Weighted MSE u*eps - log2(u); minimized over u at u = 1/eps, where
    its value is 1 - rate."""
    if u <= 0:
        raise ValueError("weight must be positive")
    return float(u * eps - np.log2(u))


def total_rates(worst_private: np.ndarray, alloc: RateAllocation) -> np.ndarray:
    """Per-user totals: own private rate plus the allotted common share."""
    worst_private = np.asarray(worst_private, dtype=float)
    if worst_private.shape != alloc.common_split.shape:
        raise ValueError("rate vector and common split must have equal length")
    return worst_private + alloc.common_split


def equalizing_split(rates: np.ndarray, total: float) -> np.ndarray:
    """Distribute `total` across users to maximize min(rates + split):
    waterfill that lifts the lowest totals first."""
    K = len(rates)
    if total <= 0.0:
        return np.zeros(K)
    order = np.argsort(rates, kind="stable")
    s = rates[order]
    level = s[-1] + total / K
    acc = 0.0
    for j in range(1, K + 1):
        acc += float(s[j - 1])
        candidate = (total + acc) / j
        if j == K or candidate <= s[j]:
            level = candidate
            break
    split = np.maximum(level - rates, 0.0)
    # float drift must not overclaim the supported total
    excess = split.sum() - total
    if excess > 0.0:
        split[int(np.argmax(split))] -= excess
    return np.maximum(split, 0.0)


def initial_precoder(nominals: list[np.ndarray], p_t: float, include_common: bool) -> Precoder:
    """Matched-filter start: p_k along the nominal channel with the power
    budget split equally across streams; the common precoder takes the
    dominant left singular vector of the stacked nominals.

    With a common stream the budget is shared 50/50 between the common
    precoder and the private set.
    """
    if not p_t > 0:
        raise ValueError("power budget must be positive")
    K = len(nominals)
    n_t = nominals[0].shape[0]
    q_private = (0.5 * p_t if include_common else p_t) / K
    cols = []
    for hhat in nominals:
        norm = np.linalg.norm(hhat)
        direction = hhat / norm if norm > 0 else np.eye(n_t, dtype=np.complex128)[:, 0]
        cols.append(direction * np.sqrt(q_private))
    private = np.column_stack(cols)
    common = None
    if include_common:
        hhat_mat = np.column_stack(nominals)
        u_vecs, _, _ = np.linalg.svd(hhat_mat, full_matrices=False)
        common = u_vecs[:, 0] * np.sqrt(0.5 * p_t)
    return Precoder(private=private, common=common)
