r"""Channel vectors, bounded uncertainty regions, and ball geometry.

A user's channel is a length-N_t complex vector h. The transmitter only
knows an estimate hhat and a radius delta; the true channel lies in the
ball {hhat + e : ||e|| <= delta}. Channels are plain complex ndarrays;
the estimate/radius pair gets its own type because every robust solver
consumes it.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SystemConfig",
    "ChannelEstimate",
    "CsitScalingModel",
    "sample_channel",
    "sample_error_in_ball",
    "radius_at",
    "inner_product_extrema",
]


@dataclass(frozen=True)
class SystemConfig:
    """Static parameters of the downlink: K single-antenna users served by
    an n_t-antenna transmitter over unit-variance fading."""

    K: int
    n_t: int
    noise_var: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("need at least one user")
        if self.n_t < self.K:
            raise ValueError("transmit antennas must be >= number of users")
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")


@dataclass(frozen=True)
class ChannelEstimate:
    """Nominal channel plus uncertainty radius: the ball the true channel
    is confined to."""

    nominal: np.ndarray
    radius: float = 0.0

    def __post_init__(self):
        nominal = np.asarray(self.nominal, dtype=np.complex128)
        object.__setattr__(self, "nominal", nominal)
        if nominal.ndim != 1:
            raise ValueError("nominal channel must be a vector")
        if not np.all(np.isfinite(nominal.view(np.float64))):
            raise ValueError("nominal channel must be finite")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def n_t(self) -> int:
        return self.nominal.shape[0]

    def contains(self, h: np.ndarray, tol: float = 1e-8) -> bool:
        return np.linalg.norm(h - self.nominal) <= self.radius + tol


@dataclass(frozen=True)
class CsitScalingModel:
    r"""Per-user uncertainty scaling delta_k^2 = beta_k * p_t^{-alpha_k}.

    alpha_k = 0 keeps the radius fixed; alpha_k = 1 shrinks it fast enough
    to restore a full spatial degree of freedom at high power.
    """

    beta: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        if beta.shape != alpha.shape:
            raise ValueError("beta and alpha must have matching shapes")
        if np.any(beta <= 0):
            raise ValueError("beta must be positive")
        if np.any((alpha < 0) | (alpha > 1)):
            raise ValueError("alpha entries must lie in [0, 1]")

    @property
    def n_users(self) -> int:
        return self.beta.shape[0]


def sample_channel(rng: np.random.Generator, n_t: int) -> np.ndarray:
    """Draw h with i.i.d. circularly-symmetric complex Gaussian entries of
    unit variance (real and imaginary parts each variance 1/2)."""
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    re = rng.standard_normal(n_t)
    im = rng.standard_normal(n_t)
    return (re + 1j * im) / np.sqrt(2.0)


def sample_error_in_ball(rng: np.random.Generator, radius: float, n_t: int) -> np.ndarray:
    r"""Draw e uniformly from the complex ball {e : ||e|| <= radius}.

    Direction comes from a normalized complex Gaussian; the radial law is
    radius * u^{1/(2 n_t)} with u ~ U[0,1], which is the uniform density
    for a ball of real dimension 2 n_t.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0.0:
        return np.zeros(n_t, dtype=np.complex128)
    w = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
    direction = w / np.linalg.norm(w)
    u = rng.uniform()
    return radius * u ** (1.0 / (2 * n_t)) * direction


def radius_at(model: CsitScalingModel, p_t: float, k: int) -> float:
    """Uncertainty radius of user k at transmit power budget p_t."""
    if not p_t > 0:
        raise ValueError("p_t must be positive")
    return float(np.sqrt(model.beta[k] * p_t ** (-model.alpha[k])))


def inner_product_extrema(est: ChannelEstimate, p: np.ndarray) -> tuple[float, float]:
    r"""Range of |h^H p| as h sweeps the uncertainty ball.

    max = |hhat^H p| + delta ||p||, attained by aligning the error with p;
    min = (|hhat^H p| - delta ||p||)^+, clamped at zero once the ball is
    wide enough to null the inner product.
    """
    p = np.asarray(p, dtype=np.complex128)
    if p.shape != (est.n_t,):
        raise ValueError("precoder length must match the channel dimension")
    base = abs(np.vdot(est.nominal, p))
    spread = est.radius * np.linalg.norm(p)
    return float(base + spread), float(max(base - spread, 0.0))
