"""Fixed-center fair assignment programs and the two-stage fair clustering algorithms.

Every program here shares one layout: a probability variable x[j, c] for each
point j and each admissible center c, the row-sum constraints, and a total
variation block per constrained pair. TV(x_j1, x_j2) <= F is linearized with one
auxiliary variable per center, z_c >= |x[j1, c] - x[j2, c]|, and sum_c z_c <= 2F.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import lp as lpmod
from .audit import count_violations
from .core import (
    DistanceMatrix,
    FairnessConstraintSet,
    GroupSpec,
    SoftClustering,
    as_norm_order,
    build_distance_matrix,
    hard_cost,
    soft_cost,
)
from .divergence import TV, DivergenceKind
from .lp import EQ, GE, LE, LinearProgram, LpBuilder, LpNumericalError, solve_lp
from .vanilla import VanillaConfig, gonzalez_kcenter, vanilla_cluster

log = logging.getLogger(__name__)

SUPPORT_EPS = 1e-9


class InfeasibleGroupsError(ValueError):
    """Group bounds violate beta_r |V| <= |G_r| <= alpha_r |V| for some group."""


@dataclass(frozen=True)
class SolverConfig:
    seed: int = 0
    restarts: int = 5
    max_iters: int = 100
    tol: float = lpmod.DEFAULT_TOL
    lp_method: str = "auto"
    audit_tol: float = 1e-6
    compute_bound: bool = False
    max_lower_bound_n: int = 100
    threads: int = 1

    def vanilla(self, k: int, p: float) -> VanillaConfig:
        return VanillaConfig(k=k, p=p, seed=self.seed, restarts=self.restarts, max_iters=self.max_iters, threads=self.threads)


@dataclass(frozen=True)
class FairAssignProblem:
    dm: DistanceMatrix
    centers: tuple
    fairness: FairnessConstraintSet
    p: float = 1.0
    divergence: DivergenceKind = TV
    groups: GroupSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(int(c) for c in self.centers))
        object.__setattr__(self, "p", as_norm_order(self.p))
        if not self.centers:
            raise ValueError("at least one center is required")
        if not self.divergence.linearizable:
            raise ValueError("only total variation constraints can be handed to the LP solver")
        if self.fairness.n != self.dm.n:
            raise ValueError("fairness constraints cover a different point set")


@dataclass
class FairReport:
    centers: tuple
    stage1_cost: float
    stage2_cost: float
    lp_size: dict
    violations: int
    violation_percent: float
    lower_bound: float | None = None
    vanilla_lower_bound: float | None = None
    rho: float | None = None
    theorem_bound: float | None = None
    ratio: float | None = None
    group_violation: float | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["centers"] = list(self.centers)
        return out


@dataclass
class FairKcenterResult:
    radius: float  # 4 R* for the smallest feasible guess R*
    guess: float
    achieved_radius: float
    sc: SoftClustering
    guesses_tried: int
    centers: tuple
    sweep: list = field(default_factory=list)  # (guess, feasible) over every distinct support pattern


# --------------------------------------------------------------------------- program construction


def _assignment_program(dm, centers, fairness, p, support=None, groups=None):
    """Shared builder. Returns (builder, xidx) with xidx[j, c] = variable id or -1."""
    n, k = dm.n, len(centers)
    sub = dm.d[:, list(centers)]
    if support is None:
        support = np.ones((n, k), dtype=bool)
    bld = LpBuilder()
    xidx = np.full((n, k), -1, dtype=int)
    js, cs = np.nonzero(support)
    cost = sub[js, cs] ** p if p is not None else 0.0
    xidx[js, cs] = bld.add_vars(js.size, 0.0, 1.0, cost)

    # each row is a distribution over its admissible centers
    bld.add_rows(js, xidx[js, cs], np.ones(js.size), EQ, np.ones(n))

    active = fairness.active()
    if len(active):
        a, b = active.pairs[:, 0], active.pairs[:, 1]
        P = a.size
        z = bld.add_vars(P * k, 0.0, 1.0).reshape(P, k)
        xa, xb = xidx[a], xidx[b]
        # rows (pair, c): z - x_a + x_b >= 0 and z + x_a - x_b >= 0
        for sign in (1.0, -1.0):
            pc = np.arange(P * k).reshape(P, k)
            rows = [pc.reshape(-1)]
            cols = [z.reshape(-1)]
            vals = [np.ones(P * k)]
            ma = xa >= 0
            rows.append(pc[ma])
            cols.append(xa[ma])
            vals.append(np.full(int(ma.sum()), -sign))
            mb = xb >= 0
            rows.append(pc[mb])
            cols.append(xb[mb])
            vals.append(np.full(int(mb.sum()), sign))
            bld.add_rows(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), GE, np.zeros(P * k))
        bld.add_rows(np.repeat(np.arange(P), k), z.reshape(-1), np.ones(P * k), LE, 2.0 * active.bounds)

    if groups is not None:
        ind = groups.indicator(n)
        for r in range(len(groups)):
            lo_coef = ind[r] - groups.beta[r]
            hi_coef = ind[r] - groups.alpha[r]
            for c in range(k):
                jj = np.nonzero(support[:, c])[0]
                if jj.size == 0:
                    continue
                bld.add_row(xidx[jj, c], lo_coef[jj], GE, 0.0)
                bld.add_row(xidx[jj, c], hi_coef[jj], LE, 0.0)
    return bld, xidx


def _extract(x: np.ndarray, xidx: np.ndarray, centers) -> SoftClustering:
    mu = np.where(xidx >= 0, x[np.maximum(xidx, 0)], 0.0)
    return SoftClustering.from_raw(centers, mu)


def build_fair_assign_lp(prob: FairAssignProblem) -> LinearProgram:
    """FAIR-ASSGN: variables x[j, c] occupy the first n*|C| slots in row-major (j, c) order."""
    if math.isinf(prob.p):
        raise ValueError("finite p only; fair_kcenter handles p = inf")
    if prob.groups is not None:
        return build_combined_lp(prob)
    bld, _ = _assignment_program(prob.dm, prob.centers, prob.fairness, prob.p)
    return bld.build()


def build_combined_lp(prob: FairAssignProblem) -> LinearProgram:
    """FAIR-ASSGN with per-(center, group) proportion sandwiches; TV only within groups."""
    if prob.groups is None:
        raise ValueError("combined program needs protected groups")
    if math.isinf(prob.p):
        raise ValueError("finite p only; fair_kcenter handles p = inf")
    fairness = prob.fairness.within_groups(prob.groups)
    bld, _ = _assignment_program(prob.dm, prob.centers, fairness, prob.p, groups=prob.groups)
    return bld.build()


def extract_assignment(x: np.ndarray, n: int, centers) -> SoftClustering:
    k = len(centers)
    return SoftClustering.from_raw(centers, np.asarray(x[: n * k]).reshape(n, k))


def solve_fair_assign(prob: FairAssignProblem, tol: float = lpmod.DEFAULT_TOL, method: str = "auto"):
    """Solve FAIR-ASSGN (or its combined variant). Returns (SoftClustering, LinearProgram, LpSolution)."""
    lp = build_combined_lp(prob) if prob.groups is not None else build_fair_assign_lp(prob)
    sol = solve_lp(lp, tol, method)
    if not sol.optimal:
        return None, lp, sol
    return extract_assignment(sol.x, prob.dm.n, prob.centers), lp, sol


# --------------------------------------------------------------------------- simple solutions and checks


def uniform_solution(centers, n: int) -> SoftClustering:
    centers = tuple(int(c) for c in centers)
    if not centers:
        raise ValueError("at least one center is required")
    return SoftClustering(centers, np.full((n, len(centers)), 1.0 / len(centers)))


def check_feasibility_condition(groups: GroupSpec, n: int, eps: float = 1e-9) -> bool:
    """beta_r |V| <= |G_r| <= alpha_r |V| for every group (necessary and sufficient)."""
    sizes = np.array([len(m) for m in groups.members], dtype=float)
    return bool(np.all(groups.beta * n <= sizes + eps) and np.all(sizes <= groups.alpha * n + eps))


def group_violation(sc: SoftClustering, groups: GroupSpec) -> float:
    """Largest amount by which any (center, group) sandwich constraint fails (<= 0 when satisfied)."""
    ind = groups.indicator(sc.n)
    mass_g = ind @ sc.mu  # groups x centers
    mass_v = sc.mu.sum(axis=0)[None, :]
    lo = groups.beta[:, None] * mass_v - mass_g
    hi = mass_g - groups.alpha[:, None] * mass_v
    return float(max(lo.max(), hi.max()))


def nearest_center_map(src_centers, dst_centers, dm: DistanceMatrix) -> dict:
    """phi: each source center to its closest destination center, ties to the lowest id."""
    dst = sorted(int(c) for c in dst_centers)
    sub = dm.d[np.ix_([int(c) for c in src_centers], dst)]
    return {int(c): dst[int(i)] for c, i in zip(src_centers, np.argmin(sub, axis=1))}


def phi_map_solution(optimal_sc: SoftClustering, new_centers, dm: DistanceMatrix) -> SoftClustering:
    """Push every row's mass along phi: x[j, c] = sum of x*[j, c*] over c* with phi(c*) = c."""
    new_centers = tuple(sorted(int(c) for c in new_centers))
    phi = nearest_center_map(optimal_sc.centers, new_centers, dm)
    col = {c: i for i, c in enumerate(new_centers)}
    mu = np.zeros((optimal_sc.n, len(new_centers)))
    for i, cstar in enumerate(optimal_sc.centers):
        mu[:, col[phi[cstar]]] += optimal_sc.mu[:, i]
    return SoftClustering.from_raw(new_centers, mu)


# --------------------------------------------------------------------------- lower bound


def lower_bound_lp(dm: DistanceMatrix, k: int, p: float, fairness: FairnessConstraintSet | None = None, groups: GroupSpec | None = None, max_n: int = 100, tol: float = lpmod.DEFAULT_TOL, method: str = "auto") -> float:
    """Fractional-opening relaxation: every point is a candidate center with y_i in [0, 1].

    The returned value (objective^(1/p)) lower-bounds the optimum of the
    individually fair problem (or the combined one when ``groups`` is given).
    """
    p = as_norm_order(p)
    if math.isinf(p):
        raise ValueError("the relaxation is stated for finite p")
    n = dm.n
    if n > max_n:
        raise ValueError(f"lower_bound_lp has n^2 + n variables; n = {n} exceeds the guard {max_n}")
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    fairness = fairness if fairness is not None else FairnessConstraintSet.empty(n)
    if groups is not None:
        fairness = fairness.within_groups(groups)
    centers = tuple(range(n))
    bld, xidx = _assignment_program(dm, centers, fairness, p, groups=groups)
    y = bld.add_vars(n, 0.0, 1.0)
    # x[j, i] <= y_i
    jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    cnt = n * n
    bld.add_rows(np.concatenate([np.arange(cnt), np.arange(cnt)]), np.concatenate([xidx.reshape(-1), y[ii.reshape(-1)]]), np.concatenate([np.ones(cnt), -np.ones(cnt)]), LE, np.zeros(cnt))
    bld.add_row(y, np.ones(n), LE, float(k))
    sol = solve_lp(bld.build(), tol, method)
    if not sol.optimal:
        raise LpNumericalError(f"relaxation reported {sol.status}; it always admits a uniform solution")
    return max(0.0, sol.objective) ** (1.0 / p)


# --------------------------------------------------------------------------- algorithms


def _as_dm(data) -> DistanceMatrix:
    if isinstance(data, DistanceMatrix):
        return data
    return build_distance_matrix(data)


def _bound_fields(report: FairReport, dm, k, p, fairness, groups, cfg) -> None:
    lb = lower_bound_lp(dm, k, p, fairness, groups, max_n=cfg.max_lower_bound_n, tol=cfg.tol, method=cfg.lp_method)
    vlb = lower_bound_lp(dm, k, p, None, None, max_n=cfg.max_lower_bound_n, tol=cfg.tol, method=cfg.lp_method)
    if vlb > 0:
        rho = report.stage1_cost / vlb
    else:
        rho = 1.0 if report.stage1_cost <= 1e-12 else math.inf
    report.lower_bound = lb
    report.vanilla_lower_bound = vlb
    report.rho = rho
    report.theorem_bound = 3 ** (1 - 1 / p) * (rho + 2) * lb
    report.ratio = report.stage2_cost / lb if lb > 0 else (1.0 if report.stage2_cost <= 1e-12 else math.inf)
    report.notes.append("rho measured as stage-1 cost over the fractional vanilla relaxation")


def alg_if(data, k: int, p: float, fairness: FairnessConstraintSet, cfg: SolverConfig | None = None):
    """Vanilla centers, then the optimal TV-fair assignment to them. Returns (SoftClustering, FairReport)."""
    cfg = cfg or SolverConfig()
    p = as_norm_order(p)
    if math.isinf(p):
        raise ValueError("use fair_kcenter for p = inf")
    dm = _as_dm(data)
    hc = vanilla_cluster(data, cfg.vanilla(k, p))
    prob = FairAssignProblem(dm, hc.centers, fairness, p)
    sc, lp, sol = solve_fair_assign(prob, cfg.tol, cfg.lp_method)
    if sc is None:
        raise LpNumericalError(f"FAIR-ASSGN reported {sol.status}, but the uniform assignment is always feasible")
    viol, pct, _ = count_violations(sc, fairness, TV, cfg.audit_tol)
    if viol:
        raise LpNumericalError(f"solver output violates {viol} fairness constraints")
    report = FairReport(hc.centers, hard_cost(hc, dm, p), soft_cost(sc, dm, p), {"variables": lp.n_vars, "constraints": lp.n_rows}, viol, pct)
    if cfg.compute_bound:
        _bound_fields(report, dm, k, p, fairness, None, cfg)
    return sc, report


def alg_cf(data, k: int, p: float, fairness: FairnessConstraintSet, groups: GroupSpec, cfg: SolverConfig | None = None):
    """Combined group + within-group individual fairness. Returns (SoftClustering, FairReport)."""
    cfg = cfg or SolverConfig()
    p = as_norm_order(p)
    if math.isinf(p):
        raise ValueError("use fair_kcenter(..., groups=...) for p = inf")
    dm = _as_dm(data)
    if not check_feasibility_condition(groups, dm.n):
        raise InfeasibleGroupsError("no fair solution exists: need beta_r |V| <= |G_r| <= alpha_r |V| for every group")
    hc = vanilla_cluster(data, cfg.vanilla(k, p))
    inner = fairness.within_groups(groups)
    prob = FairAssignProblem(dm, hc.centers, inner, p, groups=groups)
    sc, lp, sol = solve_fair_assign(prob, cfg.tol, cfg.lp_method)
    if sc is None:
        raise LpNumericalError(f"COMBINED-FAIR-ASSGN reported {sol.status} although the group condition holds")
    viol, pct, _ = count_violations(sc, inner, TV, cfg.audit_tol)
    gv = group_violation(sc, groups)
    if viol or gv > cfg.audit_tol:
        raise LpNumericalError(f"solver output violates constraints (pairs: {viol}, group slack: {gv:.3g})")
    report = FairReport(hc.centers, hard_cost(hc, dm, p), soft_cost(sc, dm, p), {"variables": lp.n_vars, "constraints": lp.n_rows}, viol, pct, group_violation=gv)
    if cfg.compute_bound:
        _bound_fields(report, dm, k, p, inner, groups, cfg)
    return sc, report


def kcenter_feasible(dm: DistanceMatrix, centers, fairness: FairnessConstraintSet, radius: float, groups: GroupSpec | None = None, tol: float = lpmod.DEFAULT_TOL, method: str = "auto") -> SoftClustering | None:
    """Some TV-fair family supported within ``radius`` of every point, or None."""
    centers = tuple(int(c) for c in centers)
    support = dm.d[:, list(centers)] <= radius * (1 + 1e-12) + 1e-12
    if not support.any(axis=1).all():
        return None
    bld, xidx = _assignment_program(dm, centers, fairness.active(), None, support=support, groups=groups)
    sol = solve_lp(bld.build(), tol, method)
    if not sol.optimal:
        return None
    return _extract(sol.x, xidx, centers)


def fair_kcenter(dm: DistanceMatrix, k: int, fairness: FairnessConstraintSet, cfg: SolverConfig | None = None, groups: GroupSpec | None = None, sweep: bool = False) -> FairKcenterResult:
    """Farthest-first centers, then the smallest guess R* whose 4R*-ball program is feasible.

    Guesses are 0 and the distinct pairwise distances in increasing order; guesses
    that leave the admissible (point, center) set unchanged are skipped since they
    share the same feasibility. ``groups`` adds the proportion sandwiches.
    With ``sweep`` every distinct pattern is solved and recorded.
    """
    cfg = cfg or SolverConfig()
    if groups is not None:
        if not check_feasibility_condition(groups, dm.n):
            raise InfeasibleGroupsError("no fair solution exists for these group bounds")
        fairness = fairness.within_groups(groups)
    hc = gonzalez_kcenter(dm, cfg.vanilla(k, math.inf))
    centers = hc.centers
    sub = dm.d[:, list(centers)]
    guesses = np.unique(np.concatenate([[0.0], dm.d[np.triu_indices(dm.n, 1)]]))
    last_count = -1
    last_result = None
    found = None
    tried = 0
    trace = []
    for g in guesses:
        count = int(np.count_nonzero(sub <= 4 * g * (1 + 1e-12) + 1e-12))
        if count != last_count:
            last_count = count
            tried += 1
            last_result = kcenter_feasible(dm, centers, fairness, 4 * g, groups, cfg.tol, cfg.lp_method)
        if sweep:
            trace.append((float(g), last_result is not None))
        if last_result is not None and found is None:
            found = (float(g), last_result)
            if not sweep:
                break
    if found is None:
        raise LpNumericalError("no radius guess was feasible, but the largest one admits the uniform solution")
    g, sc = found
    achieved = max((dm.d[j, c] for j in range(dm.n) for c in sc.support(j, SUPPORT_EPS)), default=0.0)
    return FairKcenterResult(4 * g, g, float(achieved), sc, tried, centers, trace)
