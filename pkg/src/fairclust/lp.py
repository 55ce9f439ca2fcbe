"""Linear programs: a dense two-phase simplex (Bland's rule) and a HiGHS backend.

Programs are minimization problems ``min c.x  s.t.  A x (<=|=|>=) b,  lo <= x <= hi``.
Small programs go to the in-house tableau simplex; programs whose tableau
would be too large for dense pivoting go to HiGHS through scipy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

log = logging.getLogger(__name__)

LE, EQ, GE = -1, 0, 1
_REL = {"<=": LE, "=": EQ, "==": EQ, ">=": GE, LE: LE, EQ: EQ, GE: GE}
_REL_TEXT = {LE: "<=", EQ: "=", GE: ">="}

DEFAULT_TOL = 1e-7
# dense tableau entries above which "auto" hands the program to HiGHS
DENSE_LIMIT = 60_000

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


class LpNumericalError(RuntimeError):
    """The solver broke down numerically; distinct from a proof of infeasibility."""


@dataclass
class LinearProgram:
    c: np.ndarray
    A: sparse.csr_matrix
    senses: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.A = sparse.csr_matrix(self.A, dtype=float)
        if self.A.shape[1] != n and self.A.shape[0] > 0:
            raise ValueError(f"constraint rows have {self.A.shape[1]} columns, expected {n}")
        if self.A.shape[0] == 0:
            self.A = sparse.csr_matrix((0, n))
        self.senses = np.array([_REL[s] for s in np.asarray(self.senses).tolist()], dtype=int)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if not (self.senses.size == self.b.size == self.A.shape[0]):
            raise ValueError("one sense and one right-hand side per constraint row")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("right-hand sides must be finite")
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (n,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (n,)).copy()
        if np.any(self.lo == np.inf) or np.any(self.hi == -np.inf):
            raise ValueError("invalid variable bounds")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    @classmethod
    def from_rows(cls, objective: Sequence[float], constraints: Iterable[tuple], bounds: Sequence[tuple] | None = None) -> "LinearProgram":
        """Build from ``(row, relation, rhs)`` triples; default bounds are ``[0, inf)``."""
        c = np.asarray(objective, dtype=float)
        rows, senses, rhs = [], [], []
        for row, rel, val in constraints:
            row = np.asarray(row, dtype=float)
            if row.size != c.size:
                raise ValueError(f"row of length {row.size} in a program with {c.size} variables")
            rows.append(row)
            senses.append(_REL[rel])
            rhs.append(val)
        A = np.vstack(rows) if rows else np.zeros((0, c.size))
        if bounds is None:
            lo, hi = np.zeros(c.size), np.full(c.size, np.inf)
        else:
            lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds], dtype=float)
            hi = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
        return cls(c, sparse.csr_matrix(A), senses, rhs, lo, hi)

    def residual(self, x: np.ndarray) -> float:
        """Largest violation of any row or bound at ``x``."""
        worst = 0.0
        if self.n_rows:
            ax = self.A @ x - self.b
            viol = np.where(self.senses == LE, np.maximum(ax, 0), np.where(self.senses == GE, np.maximum(-ax, 0), np.abs(ax)))
            worst = float(viol.max())
        worst = max(worst, float(np.max(self.lo - x, initial=0.0)), float(np.max(x - self.hi, initial=0.0)))
        return worst

    def to_text(self) -> str:
        """Plain-text listing, one constraint per line, for cross-checking elsewhere."""

        def terms(vals, idx):
            return " ".join(f"{v:+.17g} x{i}" for v, i in zip(vals, idx)) or "0"

        nz = np.nonzero(self.c)[0]
        lines = [f"minimize {terms(self.c[nz], nz)}", "subject to"]
        for r in range(self.n_rows):
            start, end = self.A.indptr[r], self.A.indptr[r + 1]
            lines.append(f"c{r}: {terms(self.A.data[start:end], self.A.indices[start:end])} {_REL_TEXT[int(self.senses[r])]} {self.b[r]:.17g}")
        lines.append("bounds")
        for i, (lo, hi) in enumerate(zip(self.lo, self.hi)):
            lines.append(f"{lo:.17g} <= x{i} <= {hi:.17g}")
        return "\n".join(lines) + "\n"


class LpBuilder:
    """Accumulates variables and sparse rows, then freezes into a :class:`LinearProgram`."""

    def __init__(self):
        self._cost: list = []
        self._lo: list = []
        self._hi: list = []
        self._rows: list = []
        self._cols: list = []
        self._vals: list = []
        self._senses: list = []
        self._rhs: list = []
        self.n_vars = 0
        self.n_rows = 0

    def add_vars(self, count: int, lo=0.0, hi=np.inf, cost=0.0) -> np.ndarray:
        idx = np.arange(self.n_vars, self.n_vars + count)
        self._cost.append(np.broadcast_to(np.asarray(cost, float), (count,)).copy())
        self._lo.append(np.broadcast_to(np.asarray(lo, float), (count,)).copy())
        self._hi.append(np.broadcast_to(np.asarray(hi, float), (count,)).copy())
        self.n_vars += count
        return idx

    def add_rows(self, row_of_entry, cols, vals, senses, rhs) -> None:
        """Add a block of rows; ``row_of_entry`` indexes rows local to this block."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        count = rhs.size
        self._rows.append(np.asarray(row_of_entry, dtype=int) + self.n_rows)
        self._cols.append(np.asarray(cols, dtype=int))
        self._vals.append(np.asarray(vals, dtype=float))
        self._senses.append(np.broadcast_to(np.asarray(senses, dtype=int), (count,)).copy())
        self._rhs.append(rhs)
        self.n_rows += count

    def add_row(self, cols, vals, sense, rhs) -> None:
        cols = np.asarray(cols, dtype=int)
        self.add_rows(np.zeros(cols.size, dtype=int), cols, vals, [sense], [rhs])

    def build(self) -> LinearProgram:
        cat = lambda parts, dt=float: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dtype=dt)
        A = sparse.coo_matrix((cat(self._vals), (cat(self._rows, int), cat(self._cols, int))), shape=(self.n_rows, self.n_vars)).tocsr()
        A.sum_duplicates()
        return LinearProgram(cat(self._cost), A, cat(self._senses, int), cat(self._rhs), cat(self._lo), cat(self._hi))


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    residual: float | None = None
    phase1_objective: float | None = None
    method: str = ""
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def solve_lp(lp: LinearProgram, tol: float = DEFAULT_TOL, method: str = "auto") -> LpSolution:
    """Solve ``lp``. ``method`` is ``"simplex"``, ``"highs"`` or ``"auto"`` (by tableau size)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method == "auto":
        rows = lp.n_rows + int(np.isfinite(lp.hi).sum())
        method = "simplex" if rows * (lp.n_vars + 2 * rows) <= DENSE_LIMIT else "highs"
    if method == "simplex":
        sol = _solve_simplex(lp, tol)
    elif method == "highs":
        sol = _solve_highs(lp, tol)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if sol.optimal:
        sol.residual = lp.residual(sol.x)
        scale = max(1.0, float(np.max(np.abs(lp.b), initial=0.0)))
        if sol.residual > tol * scale:
            raise LpNumericalError(f"{sol.method}: optimal point violates constraints by {sol.residual:.3g}")
    return sol


# --------------------------------------------------------------------------- HiGHS


def _solve_highs(lp: LinearProgram, tol: float) -> LpSolution:
    A = lp.A
    le, ge, eq = lp.senses == LE, lp.senses == GE, lp.senses == EQ
    A_ub = sparse.vstack([A[le], -A[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = lp.b[eq] if eq.any() else None
    feas = min(tol, 1e-9)
    res = linprog(
        lp.c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=np.column_stack([lp.lo, lp.hi]),
        method="highs-ds",
        options={"primal_feasibility_tolerance": feas, "dual_feasibility_tolerance": feas, "presolve": True},
    )
    iters = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        return LpSolution(OPTIMAL, np.asarray(res.x, float), float(lp.c @ res.x), method="highs", iterations=iters)
    if res.status == 2:
        return LpSolution(INFEASIBLE, method="highs", iterations=iters)
    if res.status == 3:
        return LpSolution(UNBOUNDED, method="highs", iterations=iters)
    raise LpNumericalError(f"HiGHS failed with status {res.status}: {res.message}")


# --------------------------------------------------------------------------- simplex

_PIVOT_EPS = 1e-9
_MAX_PIVOTS = 200_000


class _Tableau:
    """Rows 0..m-1 hold B^-1 [A | b]; the last row holds reduced costs and -objective."""

    def __init__(self, T: np.ndarray, basis: list):
        self.T = T
        self.basis = basis
        self.pivots = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, r: int, s: int) -> None:
        T = self.T
        piv = T[r, s]
        if abs(piv) < 1e-12:
            raise LpNumericalError(f"pivot element {piv:.3g} too small")
        T[r] /= piv
        col = T[:, s].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = s
        self.pivots += 1
        if self.pivots > _MAX_PIVOTS:
            raise LpNumericalError("simplex pivot limit reached")

    def set_objective(self, cost: np.ndarray) -> None:
        """Install reduced costs for ``cost`` (length = #columns) against the current basis."""
        T = self.T
        m = self.m
        cb = cost[self.basis]
        T[m, :-1] = cost - cb @ T[:m, :-1]
        T[m, -1] = -float(cb @ T[:m, -1])

    def run(self, allowed: np.ndarray) -> str:
        """Bland's rule: lowest-index improving column, lowest-index basic variable on ratio ties."""
        T = self.T
        m = self.m
        while True:
            red = T[m, :-1]
            cand = np.nonzero((red < -_PIVOT_EPS) & allowed)[0]
            if cand.size == 0:
                return OPTIMAL
            s = int(cand[0])
            col = T[:m, s]
            rows = np.nonzero(col > _PIVOT_EPS)[0]
            if rows.size == 0:
                return UNBOUNDED
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, s)


def _solve_simplex(lp: LinearProgram, tol: float) -> LpSolution:
    n = lp.n_vars
    A = lp.A.toarray()
    b = lp.b.copy()

    # x = offset + M @ xs with xs >= 0
    offset = np.zeros(n)
    signs: list = []  # (original variable, +1 or -1) per standard column
    ub_rows: list = []  # (standard column, width)
    for i in range(n):
        lo, hi = lp.lo[i], lp.hi[i]
        if hi < lo:
            return LpSolution(INFEASIBLE, method="simplex", phase1_objective=float(lo - hi))
        if math.isfinite(lo):
            offset[i] = lo
            signs.append((i, 1.0))
            if math.isfinite(hi):
                ub_rows.append((len(signs) - 1, hi - lo))
        elif math.isfinite(hi):
            offset[i] = hi
            signs.append((i, -1.0))
        else:
            signs.append((i, 1.0))
            signs.append((i, -1.0))
    ns = len(signs)
    M = np.zeros((n, ns))
    for s, (i, sg) in enumerate(signs):
        M[i, s] = sg

    rows_A = A @ M
    rhs = b - A @ offset
    senses = list(lp.senses)
    if ub_rows:
        U = np.zeros((len(ub_rows), ns))
        for r, (s, w) in enumerate(ub_rows):
            U[r, s] = 1.0
        rows_A = np.vstack([rows_A, U])
        rhs = np.concatenate([rhs, [w for _, w in ub_rows]])
        senses += [LE] * len(ub_rows)
    m = rows_A.shape[0]
    cost_std = lp.c @ M
    const = float(lp.c @ offset)

    if m == 0:
        if np.any(cost_std < -_PIVOT_EPS):
            return LpSolution(UNBOUNDED, method="simplex")
        x = offset.copy()
        return LpSolution(OPTIMAL, x, float(lp.c @ x), method="simplex", phase1_objective=0.0)

    senses = np.array(senses)
    slack_rows = np.nonzero(senses != EQ)[0]
    S = np.zeros((m, slack_rows.size))
    S[slack_rows, np.arange(slack_rows.size)] = np.where(senses[slack_rows] == LE, 1.0, -1.0)
    body = np.hstack([rows_A, S])
    flip = rhs < 0
    body[flip] *= -1
    rhs = np.abs(rhs)

    n_struct = body.shape[1]
    basis = [-1] * m
    for col, r in enumerate(slack_rows):
        if body[r, ns + col] == 1.0:
            basis[r] = ns + col
    need_art = [r for r in range(m) if basis[r] < 0]
    art = np.zeros((m, len(need_art)))
    for a, r in enumerate(need_art):
        art[r, a] = 1.0
        basis[r] = n_struct + a
    n_cols = n_struct + len(need_art)

    T = np.zeros((m + 1, n_cols + 1))
    T[:m, :n_struct] = body
    T[:m, n_struct:n_cols] = art
    T[:m, -1] = rhs
    tab = _Tableau(T, basis)

    phase1 = 0.0
    if need_art:
        c1 = np.zeros(n_cols)
        c1[n_struct:] = 1.0
        tab.set_objective(c1)
        if tab.run(np.ones(n_cols, dtype=bool)) != OPTIMAL:
            raise LpNumericalError("phase 1 reported an unbounded auxiliary problem")
        phase1 = -float(tab.T[-1, -1])
        if phase1 > tol * max(1.0, float(rhs.max(initial=0.0))):
            return LpSolution(INFEASIBLE, method="simplex", phase1_objective=phase1, iterations=tab.pivots)
        # drive zero-level artificials out of the basis; rows that cannot pivot are redundant
        keep = []
        for r in range(m):
            if tab.basis[r] >= n_struct:
                nz = np.nonzero(np.abs(tab.T[r, :n_struct]) > _PIVOT_EPS)[0]
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                    keep.append(r)
            else:
                keep.append(r)
        T2 = np.vstack([tab.T[keep][:, list(range(n_struct)) + [n_cols]], np.zeros((1, n_struct + 1))])
        tab = _Tableau(T2, [tab.basis[r] for r in keep])
        tab.pivots = 0

    c2 = np.zeros(n_struct)
    c2[:ns] = cost_std
    tab.set_objective(c2)
    status = tab.run(np.ones(n_struct, dtype=bool))
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, method="simplex", phase1_objective=phase1, iterations=tab.pivots)

    xs = np.zeros(n_struct)
    for r, col in enumerate(tab.basis):
        xs[col] = tab.T[r, -1]
    # basic values can dip below zero by round-off only
    if xs.min(initial=0.0) < -1e-7:
        raise LpNumericalError(f"negative basic value {xs.min():.3g}")
    xs = np.maximum(xs, 0.0)
    x = offset + M @ xs[:ns]
    return LpSolution(OPTIMAL, x, float(lp.c @ x), method="simplex", phase1_objective=phase1, iterations=tab.pivots)


def solve_transportation(supplies, demands, costs, tol: float = DEFAULT_TOL, method: str = "auto") -> tuple:
    """Min-cost transportation plan between equal-mass supply and demand vectors."""
    s = np.asarray(supplies, dtype=float)
    t = np.asarray(demands, dtype=float)
    C = np.asarray(costs, dtype=float)
    if C.shape != (s.size, t.size):
        raise ValueError(f"cost matrix shape {C.shape} does not match {s.size} x {t.size}")
    if np.any(s < 0) or np.any(t < 0) or np.any(C < 0):
        raise ValueError("supplies, demands and costs must be nonnegative")
    if abs(s.sum() - t.sum()) > 1e-9 * max(1.0, s.sum()):
        raise ValueError(f"imbalanced totals: {s.sum()} vs {t.sum()}")
    m, n = C.shape
    bld = LpBuilder()
    lam = bld.add_vars(m * n, cost=C.reshape(-1)).reshape(m, n)
    bld.add_rows(np.repeat(np.arange(m), n), lam.reshape(-1), np.ones(m * n), EQ, s)
    bld.add_rows(np.tile(np.arange(n), m), lam.reshape(-1), np.ones(m * n), EQ, t)
    sol = solve_lp(bld.build(), tol, method)
    if not sol.optimal:
        raise LpNumericalError(f"transportation program reported {sol.status}")
    plan = sol.x.reshape(m, n)
    return plan, float(np.sum(plan * C))
