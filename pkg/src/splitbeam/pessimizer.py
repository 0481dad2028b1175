r"""Exact worst-case analysis over channel uncertainty balls.

Whether a rate constraint holds for every channel in a ball reduces to
maximizing the stream's MMSE over the ball, a fractional program in h.
Dinkelbach's method turns it into a short sequence of parametric
problems max_h h^H A(lam) h + (1-lam) sigma_n^2, each a trust-region
subproblem whose SDP relaxation is tight, so the worst channel comes
out exactly rather than by sampling.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import conic
from .channel import ChannelEstimate
from .defaults import DEFAULT_TOLERANCES
from .rates import Precoder, mmse_values

__all__ = [
    "QuadraticFormSet",
    "WorstCaseResult",
    "parametric_objective",
    "solve_trust_region",
    "dinkelbach_worst_case",
]

# second eigenvalue above this fraction of tr(X) means the relaxation
# returned a non-rank-1 X, which the tightness lemma rules out
RANK_ONE_RATIO = 1e-5


@dataclass(frozen=True)
class QuadraticFormSet:
    """Outer products of the precoding vectors, the building blocks of the
    parametric objectives: Q[k] = p_k p_k^H, Q_c = p_c p_c^H, Q_p = sum."""

    Q: np.ndarray
    Q_c: np.ndarray
    Q_p: np.ndarray

    @classmethod
    def from_precoder(cls, P: Precoder) -> "QuadraticFormSet":
        cols = [P.private[:, k] for k in range(P.K)]
        Q = np.stack([np.outer(p, p.conj()) for p in cols])
        p_c = P.common_or_zero()
        return cls(Q=Q, Q_c=np.outer(p_c, p_c.conj()), Q_p=Q.sum(axis=0))

    def private_parametric(self, k: int, lam: float) -> np.ndarray:
        """(1-lam) * (interference forms) - lam * (own signal form)."""
        return (1.0 - lam) * (self.Q_p - self.Q[k]) - lam * self.Q[k]

    def common_parametric(self, lam: float) -> np.ndarray:
        """Same structure for the common stream: all private precoders
        interfere, the common one carries the signal."""
        return (1.0 - lam) * self.Q_p - lam * self.Q_c


@dataclass(frozen=True)
class WorstCaseResult:
    violated: bool
    worst_mmse: float
    iterations: int
    worst_channel: np.ndarray | None = None
    capped: bool = False
    max_eigen_ratio: float = 0.0

    def __post_init__(self):
        if self.violated and self.worst_channel is None:
            raise ValueError("violation requires a witness channel")
        if not 0.0 < self.worst_mmse <= 1.0 + 1e-9:
            raise ValueError("worst-case MMSE must lie in (0, 1]")


def parametric_objective(A: np.ndarray, h: np.ndarray, offset: float = 0.0) -> float:
    """h^H A h + offset for Hermitian A; the quadratic form must come out
    real to working precision."""
    A = np.asarray(A, dtype=np.complex128)
    # relative check: products of large precoder entries carry ulp-level
    # asymmetry proportional to their magnitude
    if np.max(np.abs(A - A.conj().T)) > 1e-10 * max(1.0, float(np.max(np.abs(A)))):
        raise ValueError("matrix must be Hermitian")
    q = np.vdot(h, A @ h)
    scale = max(1.0, abs(q))
    if abs(q.imag) > 1e-10 * scale:
        raise ValueError("quadratic form has a non-negligible imaginary part")
    return float(q.real + offset)


def _trust_region_once(
    B: np.ndarray, c: np.ndarray, tol: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """One SDP solve of max tr(BX) + 2 Re(c^H w) over tr(X) <= 1 and
    [[X, w], [w^H, 1]] >= 0; returns (X, w, optimum)."""
    n = B.shape[0]
    b = conic.ProgramBuilder()
    diag = b.add_vars(n)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    re_off = b.add_vars(len(pairs))
    im_off = b.add_vars(len(pairs))
    w_re = b.add_vars(n)
    w_im = b.add_vars(n)

    # minimize -tr(XB) - 2 Re(c^H w)
    for i in range(n):
        b.add_objective_term(diag[i], -B[i, i].real)
    for t, (i, j) in enumerate(pairs):
        b.add_objective_term(re_off[t], -2.0 * B[i, j].real)
        b.add_objective_term(im_off[t], -2.0 * B[i, j].imag)
    for i in range(n):
        b.add_objective_term(w_re[i], -2.0 * c[i].real)
        b.add_objective_term(w_im[i], -2.0 * c[i].imag)

    # unit ball: 1 - tr(X) >= 0
    b.add_nonnegative([(1.0, [(int(diag[i]), -1.0) for i in range(n)])])

    # [[X, w], [w^H, 1]] >= 0, assembled entrywise from Hermitian basis matrices
    side = n + 1
    constant = np.zeros((side, side), dtype=np.complex128)
    constant[n, n] = 1.0
    terms = []
    for i in range(n):
        E = np.zeros((side, side), dtype=np.complex128)
        E[i, i] = 1.0
        terms.append((int(diag[i]), E))
    for t, (i, j) in enumerate(pairs):
        Er = np.zeros((side, side), dtype=np.complex128)
        Er[i, j] = 1.0
        Er[j, i] = 1.0
        terms.append((int(re_off[t]), Er))
        Ei = np.zeros((side, side), dtype=np.complex128)
        Ei[i, j] = 1.0j
        Ei[j, i] = -1.0j
        terms.append((int(im_off[t]), Ei))
    for i in range(n):
        Er = np.zeros((side, side), dtype=np.complex128)
        Er[i, n] = 1.0
        Er[n, i] = 1.0
        terms.append((int(w_re[i]), Er))
        Ei = np.zeros((side, side), dtype=np.complex128)
        Ei[i, n] = 1.0j
        Ei[n, i] = -1.0j
        terms.append((int(w_im[i]), Ei))
    b.add_hermitian_psd(constant, terms)

    sol = conic.solve(b.build(), tol=tol)
    if sol.status != "optimal":
        raise RuntimeError(f"trust-region subproblem ended with status {sol.status}")
    x = sol.primal
    X = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        X[i, i] = x[diag[i]]
    for t, (i, j) in enumerate(pairs):
        X[i, j] = x[re_off[t]] + 1j * x[im_off[t]]
        X[j, i] = X[i, j].conjugate()
    w = x[w_re] + 1j * x[w_im]
    return X, w, float(-sol.objective_value)


def _ball_max_recover(B: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Deterministic maximizer of w^H B w + 2 Re(c^H w) over ||w|| <= 1,
    from the eigen secular equation. Only consulted when the SDP's optimal
    face is degenerate (tied worst-case directions) and its linear block is
    a smear across that face rather than a single maximizer; the caller
    keeps the result only if it attains the SDP value.
    """
    lam, V = np.linalg.eigh(B)
    ctil = V.conj().T @ c
    # strictly concave with an interior stationary point
    if lam[-1] < 0.0:
        y = ctil / (-lam)
        if float(np.linalg.norm(y)) <= 1.0:
            return V @ y
    lam_top = float(lam[-1])
    span = max(1.0, lam_top - float(lam[0]), float(np.linalg.norm(ctil)))

    def phi(mu: float) -> float:
        return float(np.sum(np.abs(ctil) ** 2 / (mu - lam) ** 2))

    mu_lo = lam_top + 1e-12 * span
    if phi(mu_lo) < 1.0:
        # hard case: the linear term has no pull on the top eigenspace, so
        # the leftover norm budget goes onto a (deterministically phased)
        # top eigenvector
        below = lam < lam_top - 1e-9 * span
        y = np.zeros_like(ctil)
        y[below] = ctil[below] / (lam_top - lam[below])
        t = np.sqrt(max(0.0, 1.0 - float(np.sum(np.abs(y) ** 2))))
        v = V[:, -1].copy()
        v *= np.exp(-1j * np.angle(v[int(np.argmax(np.abs(v)))]))
        return V @ y + t * v
    mu_hi = lam_top + span
    while phi(mu_hi) >= 1.0:
        mu_hi = lam_top + 2.0 * (mu_hi - lam_top)
    mu = brentq(lambda m: phi(m) - 1.0, mu_lo, mu_hi, xtol=1e-14 * span)
    return V @ (ctil / (mu - lam))


def solve_trust_region(
    A: np.ndarray,
    est: ChannelEstimate,
    offset: float = 0.0,
    tol: float = DEFAULT_TOLERANCES.cone_tol,
    diagnostics: dict | None = None,
) -> tuple[np.ndarray, float]:
    """Maximize h^H A h + offset over the ball ||h - hhat|| <= delta.

    The problem is centered and normalized before the SDP relaxation:
    with h = hhat + delta*w the variable w lives in the unit ball and the
    objective data is scaled to unit magnitude, which keeps the PSD block
    well conditioned at any transmit power. The relaxation is tight, so w
    is read off the linear block; the rank of its Gram matrix is verified
    as a diagnostic. A couple of tolerance retries cover marginal solves.
    """
    A = np.asarray(A, dtype=np.complex128)
    n = est.n_t
    if A.shape != (n, n):
        raise ValueError("quadratic form and channel dimension disagree")
    if est.radius == 0.0:
        h = est.nominal.copy()
        if diagnostics is not None:
            diagnostics["eigen_ratio"] = 0.0
        return h, parametric_objective(A, h, offset)
    if np.max(np.abs(A - A.conj().T)) > 1e-10 * max(1.0, float(np.max(np.abs(A)))):
        raise ValueError("matrix must be Hermitian")

    hhat = est.nominal
    delta = est.radius
    # h = hhat + delta*w: quadratic block delta^2 A, linear block delta*A hhat
    B = delta**2 * A
    c = delta * (A @ hhat)
    const = parametric_objective(A, hhat, offset)
    # normalize in both directions: huge data overwhelms the solver and
    # tiny data (near-dead streams) leaves every direction near-optimal,
    # which drags the relaxation off the rank-1 face
    scale = max(float(np.max(np.abs(B))), float(np.max(np.abs(c))))
    if scale <= 1e-30:
        if diagnostics is not None:
            diagnostics["eigen_ratio"] = 0.0
        return hhat.copy(), const

    last_error = None
    for factor in (1.0, 0.1, 10.0):
        try:
            X, w, opt = _trust_region_once(B / scale, c / scale, tol * factor)
        except RuntimeError as exc:
            last_error = exc
            continue
        ratio = 0.0
        if n >= 2:
            # rank check on the Gram matrix of h itself, undoing the
            # centering: X_h = (hhat + delta w)(...)^H + delta^2 (X - ww^H)
            X_h = (
                np.outer(hhat, hhat.conj())
                + delta * (np.outer(hhat, w.conj()) + np.outer(w, hhat.conj()))
                + delta**2 * X
            )
            eigs = np.linalg.eigvalsh(X_h)
            trace = float(np.trace(X_h).real)
            ratio = float(max(eigs[-2], 0.0) / max(eigs[-1], 1e-12))
            if eigs[-2] > RANK_ONE_RATIO * trace:
                # degenerate optimal face: the value is still exact, only
                # the maximizer is non-unique. Recover one deterministically
                # and keep it only if it attains the SDP optimum.
                w_rec = _ball_max_recover(B / scale, c / scale)
                val_rec = float(
                    (w_rec.conj() @ (B / scale) @ w_rec).real
                    + 2.0 * (np.vdot(c / scale, w_rec)).real
                )
                if abs(val_rec - opt) <= 1e-6 * max(1.0, abs(opt)):
                    w = w_rec
                else:
                    last_error = RuntimeError(
                        "trust-region relaxation came back non-rank-1 "
                        f"(eigen ratio {ratio:.3e})"
                    )
                    continue
        if diagnostics is not None:
            diagnostics["eigen_ratio"] = ratio
        # interior-point slack can leave w a hair outside the unit ball
        nrm = float(np.linalg.norm(w))
        if nrm > 1.0:
            w = w / nrm
        return hhat + delta * w, float(scale * opt + const)
    raise last_error


def _stream_mmse(P: Precoder, k: int, kind: str, h: np.ndarray, noise_var: float) -> float:
    eps_c, eps = mmse_values(h, P, k, noise_var)
    return eps_c if kind == "common" else eps


def dinkelbach_worst_case(
    P: Precoder,
    k: int,
    kind: str,
    threshold: float,
    est: ChannelEstimate,
    noise_var: float,
    eps_D: float = DEFAULT_TOLERANCES.eps_dinkelbach,
    m_max: int = DEFAULT_TOLERANCES.max_dinkelbach_iter,
) -> WorstCaseResult:
    r"""Does max_{h in ball} eps^MMSE(h) exceed threshold, and where?

    Dinkelbach iteration: with lam^(1) = threshold, solve the parametric
    trust-region problem D(lam) = max h^H A(lam) h + (1-lam) sigma_n^2.
    D(lam^(1)) <= eps_D certifies the constraint. Otherwise update
    lam to the best realized MMSE and repeat until D falls below eps_D
    or m_max is hit; the lam sequence increases monotonically to the
    worst-case MMSE.
    """
    if kind not in ("private", "common"):
        raise ValueError("kind must be 'private' or 'common'")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    forms = QuadraticFormSet.from_precoder(P)

    def A_of(lam: float) -> np.ndarray:
        if kind == "private":
            return forms.private_parametric(k, lam)
        return forms.common_parametric(lam)

    best_h = est.nominal.copy()
    best_eps = _stream_mmse(P, k, kind, best_h, noise_var)
    lam = threshold
    violated = False
    capped = False
    max_ratio = 0.0
    diag: dict = {}
    m = 0
    while m < m_max:
        m += 1
        h_m, D = solve_trust_region(A_of(lam), est, (1.0 - lam) * noise_var, diagnostics=diag)
        max_ratio = max(max_ratio, diag.get("eigen_ratio", 0.0))
        eps_m = _stream_mmse(P, k, kind, h_m, noise_var)
        if eps_m > best_eps:
            best_eps = eps_m
            best_h = h_m
        if m == 1:
            if D <= eps_D:
                return WorstCaseResult(
                    violated=False,
                    worst_mmse=best_eps,
                    iterations=1,
                    max_eigen_ratio=max_ratio,
                )
            violated = True
        elif D <= eps_D:
            break
        if m == m_max:
            capped = D > eps_D
            break
        lam = best_eps
    return WorstCaseResult(
        violated=violated,
        worst_mmse=best_eps,
        iterations=m,
        worst_channel=best_h,
        capped=capped,
        max_eigen_ratio=max_ratio,
    )
