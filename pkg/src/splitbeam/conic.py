r"""Minimal conic-program representation and its interior-point backend.

Every convex subproblem in this package (SOCPs for the sampled precoder
steps, SDPs for the robust counterparts and the trust-region relaxations)
is assembled into this IR and handed to Clarabel in one place. Solvers
never touch the backend directly, which keeps programs inspectable and
the backend swappable.

Complex LMIs enter through hermitian_embed: a Hermitian M maps to the
real symmetric [[Re M, -Im M], [Im M, Re M]], PSD iff M is, with every
eigenvalue doubled in multiplicity.

Constraint semantics: coeff @ x + offset lies in the cone. Second-order
cones put the radius first (s[0] >= ||s[1:]||). PSD constraints live in
the ambient space of row-major vectorized side x side symmetric
matrices; the svec projection Clarabel wants happens at solve time.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

import clarabel

from .defaults import DEFAULT_TOLERANCES

__all__ = [
    "ConeConstraint",
    "ConicProgram",
    "ConicSolution",
    "ProgramBuilder",
    "hermitian_embed",
    "solve",
    "solve_with_retries",
    "dump",
]

_KINDS = ("nonnegative", "second_order_cone", "positive_semidefinite")


def hermitian_embed(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Real symmetric embedding of a Hermitian matrix; tol is relative to
    the largest entry magnitude."""
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if np.max(np.abs(M - M.conj().T)) > tol * max(1.0, float(np.max(np.abs(M)))):
        raise ValueError("matrix is not Hermitian to tolerance")
    re, im = M.real, M.imag
    return np.block([[re, -im], [im, re]])


@dataclass(frozen=True)
class ConeConstraint:
    kind: str
    coeff: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        coeff = np.atleast_2d(np.asarray(self.coeff, dtype=float))
        offset = np.atleast_1d(np.asarray(self.offset, dtype=float))
        object.__setattr__(self, "coeff", coeff)
        object.__setattr__(self, "offset", offset)
        if coeff.shape[0] != offset.shape[0]:
            raise ValueError("coefficient rows must match offset length")
        m = offset.shape[0]
        if self.kind == "second_order_cone" and m < 2:
            raise ValueError("second-order cone needs dimension >= 2")
        if self.kind == "positive_semidefinite":
            side = int(round(np.sqrt(m)))
            if side * side != m:
                raise ValueError("PSD ambient dimension must be a perfect square")

    @property
    def ambient_dim(self) -> int:
        return self.offset.shape[0]

    @property
    def side(self) -> int:
        if self.kind != "positive_semidefinite":
            raise ValueError("side only defined for PSD constraints")
        return int(round(np.sqrt(self.ambient_dim)))

    def residual(self, x: np.ndarray) -> float:
        """Distance-like violation of cone membership at x (0 when inside)."""
        s = self.coeff @ x + self.offset
        if self.kind == "nonnegative":
            return float(max(0.0, -np.min(s, initial=0.0)))
        if self.kind == "second_order_cone":
            return float(max(0.0, np.linalg.norm(s[1:]) - s[0]))
        side = self.side
        mat = s.reshape(side, side)
        eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        return float(max(0.0, -eigs[0]))


@dataclass(frozen=True)
class ConicProgram:
    num_vars: int
    objective: np.ndarray
    constraints: tuple

    def __post_init__(self):
        objective = np.asarray(self.objective, dtype=float)
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if objective.shape != (self.num_vars,):
            raise ValueError("objective length must equal num_vars")
        for con in self.constraints:
            if con.coeff.shape[1] != self.num_vars:
                raise ValueError("constraint references undeclared variables")


@dataclass(frozen=True)
class ConicSolution:
    status: str
    objective_value: float
    primal: np.ndarray | None = None

    def __post_init__(self):
        if (self.primal is not None) != (self.status == "optimal"):
            raise ValueError("primal present iff status is optimal")


class ProgramBuilder:
    """Incremental assembly: declare variables, add cone constraints as
    sparse term lists, materialize a ConicProgram once sizes are known."""

    def __init__(self):
        self._num_vars = 0
        self._obj_terms: list[tuple[int, float]] = []
        # each entry: (kind, rows) with rows = list of (offset, [(var, coef), ...])
        self._blocks: list[tuple[str, list]] = []

    @property
    def num_vars(self) -> int:
        return self._num_vars

    def add_vars(self, size: int) -> np.ndarray:
        idx = np.arange(self._num_vars, self._num_vars + size)
        self._num_vars += size
        return idx

    def add_var(self) -> int:
        return int(self.add_vars(1)[0])

    def add_objective_term(self, var: int, coef: float):
        self._obj_terms.append((int(var), float(coef)))

    def add_nonnegative(self, rows: list):
        """rows: list of (offset, terms) with terms = [(var, coef), ...];
        each affine expression is constrained >= 0."""
        self._blocks.append(("nonnegative", list(rows)))

    def add_soc(self, rows: list):
        """First row is the cone radius: row0 >= norm of the rest."""
        self._blocks.append(("second_order_cone", list(rows)))

    def add_squared_le(self, z_rows: list, w_row):
        """||z||^2 <= w for affine z (stacked real rows) and affine w,
        via the rotated-cone identity ||[(1-w)/2; z]|| <= (1+w)/2."""
        w_off, w_terms = w_row
        plus = (0.5 * (1.0 + w_off), [(v, 0.5 * c) for v, c in w_terms])
        minus = (0.5 * (1.0 - w_off), [(v, -0.5 * c) for v, c in w_terms])
        self.add_soc([plus, minus, *z_rows])

    def add_hermitian_psd(self, constant: np.ndarray, terms: list):
        """Constrain M(x) = constant + sum_j x_j * M_j to be PSD, with all
        matrices complex Hermitian; embedding to real happens here."""
        side2 = 2 * constant.shape[0]
        offset_mat = hermitian_embed(constant)
        rows = []
        cols = {}
        for var, M in terms:
            cols[int(var)] = hermitian_embed(M).reshape(-1)
        flat_offset = offset_mat.reshape(-1)
        for r in range(side2 * side2):
            term_list = [(v, col[r]) for v, col in cols.items() if col[r] != 0.0]
            rows.append((flat_offset[r], term_list))
        self._blocks.append(("positive_semidefinite", rows))

    def build(self, objective_extra: list | None = None) -> ConicProgram:
        n = self._num_vars
        c = np.zeros(n)
        for var, coef in self._obj_terms:
            c[var] += coef
        if objective_extra:
            for var, coef in objective_extra:
                c[var] += coef
        constraints = []
        for kind, rows in self._blocks:
            m = len(rows)
            coeff = np.zeros((m, n))
            offset = np.zeros(m)
            for r, (off, terms) in enumerate(rows):
                offset[r] = off
                for var, coef in terms:
                    coeff[r, var] += coef
            constraints.append(ConeConstraint(kind=kind, coeff=coeff, offset=offset))
        return ConicProgram(num_vars=n, objective=c, constraints=tuple(constraints))


def _svec_projector(side: int) -> np.ndarray:
    """Map row-major vectorized side x side symmetric matrices onto the
    scaled upper-triangle (column-major, off-diagonals * sqrt(2)) that the
    backend's PSD cone expects."""
    m = side * (side + 1) // 2
    S = np.zeros((m, side * side))
    root_half = np.sqrt(2.0) / 2.0
    t = 0
    for j in range(side):
        for i in range(j + 1):
            if i == j:
                S[t, i * side + i] = 1.0
            else:
                S[t, i * side + j] = root_half
                S[t, j * side + i] = root_half
            t += 1
    return S


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def solve(prog: ConicProgram, tol: float = DEFAULT_TOLERANCES.cone_tol) -> ConicSolution:
    """Solve min c^T x subject to the program's cone constraints."""
    n = prog.num_vars
    A_blocks = []
    b_blocks = []
    cones = []
    for con in prog.constraints:
        if con.kind == "nonnegative":
            A_blocks.append(-con.coeff)
            b_blocks.append(con.offset)
            cones.append(clarabel.NonnegativeConeT(con.ambient_dim))
        elif con.kind == "second_order_cone":
            A_blocks.append(-con.coeff)
            b_blocks.append(con.offset)
            cones.append(clarabel.SecondOrderConeT(con.ambient_dim))
        else:
            S = _svec_projector(con.side)
            A_blocks.append(-(S @ con.coeff))
            b_blocks.append(S @ con.offset)
            cones.append(clarabel.PSDTriangleConeT(con.side))
    if A_blocks:
        A = sp.csc_matrix(np.vstack(A_blocks))
        b = np.concatenate(b_blocks)
    else:
        A = sp.csc_matrix((0, n))
        b = np.zeros(0)
    P = sp.csc_matrix((n, n))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    solver = clarabel.DefaultSolver(P, prog.objective, A, b, cones, settings)
    result = solver.solve()
    status = _STATUS_MAP.get(str(result.status), "numerical-failure")
    if status != "optimal":
        return ConicSolution(status=status, objective_value=float("nan"))
    x = np.asarray(result.x, dtype=float)
    return ConicSolution(status="optimal", objective_value=float(result.obj_val), primal=x)


def solve_with_retries(
    prog: ConicProgram,
    tol: float = DEFAULT_TOLERANCES.cone_tol,
    factors: tuple = (1.0, 10.0, 100.0),
) -> ConicSolution:
    """solve() with a short tolerance ladder: a solve that stalls short of
    the requested precision (numerical-failure) is retried looser. The
    relaxed precision stays orders below the algorithmic tolerances, and
    infeasible/unbounded verdicts are returned as they are."""
    sol = None
    for factor in factors:
        sol = solve(prog, tol=tol * factor)
        if sol.status != "numerical-failure":
            return sol
    return sol


def dump(prog: ConicProgram) -> str:
    """Deterministic text rendering for golden-file comparisons."""
    lines = [f"vars {prog.num_vars}"]
    obj = " + ".join(
        f"{c:.12g}*x{i}" for i, c in enumerate(prog.objective) if c != 0.0
    )
    lines.append(f"minimize {obj if obj else '0'}")
    for ci, con in enumerate(prog.constraints):
        lines.append(f"constraint {ci}: {con.kind} dim {con.ambient_dim}")
        for r in range(con.ambient_dim):
            terms = " ".join(
                f"{con.coeff[r, j]:+.12g}*x{j}"
                for j in np.nonzero(con.coeff[r])[0]
            )
            if con.offset[r] != 0.0 or not terms:
                terms = (terms + f" {con.offset[r]:+.12g}").strip()
            lines.append(f"  [{r}] {terms}")
    return "\n".join(lines) + "\n"
