"""Fairness similarity measures, the soft k-means baseline, and fairness audits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DistanceMatrix, FairnessConstraintSet, GroupSpec, PointSet, SoftClustering, build_distance_matrix, soft_cost
from .divergence import TV, DivergenceKind, evaluate, tv_lower_bounds
from .lp import solve_transportation
from .vanilla import VanillaConfig, lloyd_kmeans

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SoftKMeansConfig:
    beta: float
    k: int
    seed: int = 0
    restarts: int = 5

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("stiffness beta must be >= 0")


@dataclass
class GroupAudit:
    name: str
    size: int
    mad: float
    bound: float  # |G_r| * d_EM(nu_G, nu_V)
    holds: bool

    @property
    def gap(self) -> float:
        return self.bound - self.mad


@dataclass
class AuditReport:
    violations: int
    percent: float
    worst_pair: tuple | None
    per_group: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "violations": self.violations,
            "percent": self.percent,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "per_group": [{"name": g.name, "size": g.size, "mad": g.mad, "bound": g.bound, "holds": g.holds, "gap": g.gap} for g in self.per_group],
        }


# --------------------------------------------------------------------------- similarity measures


def fairness_f1(dm: DistanceMatrix, m: int) -> FairnessConstraintSet:
    """d scaled into [0, 1], emitted on the symmetrized m-nearest-neighbour pairs."""
    if m < 1:
        raise ValueError("m must be >= 1")
    n = dm.n
    dmax = float(dm.d.max())
    f = dm.d / dmax if dmax > 0 else np.zeros_like(dm.d)
    mask = np.zeros((n, n), dtype=bool)
    if n > 1:
        order = np.argsort(dm.d + np.diag(np.full(n, np.inf)), axis=1, kind="stable")[:, : min(m, n - 1)]
        mask[np.repeat(np.arange(n), order.shape[1]), order.reshape(-1)] = True
    return FairnessConstraintSet.from_matrix(f, mask)


def f2_radii(dm: DistanceMatrix, k: int) -> np.ndarray:
    """r_i = distance to the floor(n/k)-th nearest point, the point itself ranked first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    size = max(1, dm.n // k)
    return np.sort(dm.d, axis=1)[:, size - 1]


def f2_directed(dm: DistanceMatrix, k: int) -> tuple:
    """Directed F2 bounds and ball membership: d(i, j) / r_i inside B_i, 1 outside (and when r_i = 0)."""
    r = f2_radii(dm, k)
    ball = dm.d <= r[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(r[:, None] > 0, dm.d / r[:, None], 1.0)
    vals = np.where(ball, vals, 1.0)
    np.fill_diagonal(vals, 0.0)
    return vals, ball


def fairness_f2(dm: DistanceMatrix, k: int) -> FairnessConstraintSet:
    """Pairs inside some ball B_i; the bound is the smaller of the two directed values."""
    vals, ball = f2_directed(dm, k)
    return FairnessConstraintSet.from_matrix(vals, ball)


def fairness_metric(dm: DistanceMatrix) -> FairnessConstraintSet:
    """F = d on every pair."""
    return FairnessConstraintSet.from_matrix(dm.d)


# --------------------------------------------------------------------------- soft k-means


def softmax_assign(dm: DistanceMatrix, centers, beta: float) -> SoftClustering:
    centers = tuple(int(c) for c in centers)
    sq = dm.d[:, list(centers)] ** 2
    logits = -beta * (sq - sq.min(axis=1, keepdims=True))
    w = np.exp(logits)
    return SoftClustering.from_raw(centers, w / w.sum(axis=1, keepdims=True))


def soft_kmeans(points: PointSet, cfg: SoftKMeansConfig, dm: DistanceMatrix | None = None, centers=None) -> SoftClustering:
    """mu_x(c) proportional to exp(-beta d(c, x)^2) over the (snapped) Lloyd centers."""
    dm = dm if dm is not None else build_distance_matrix(points)
    if centers is None:
        centers = lloyd_kmeans(points, VanillaConfig(k=cfg.k, p=2, seed=cfg.seed, restarts=cfg.restarts), dm).centers
    return softmax_assign(dm, centers, cfg.beta)


def calibrate_beta(points: PointSet, k: int, target_cost: float, tol: float = 1e-3, seed: int = 0, beta_max: float = 1e8, steps: int = 200, dm: DistanceMatrix | None = None, centers=None, p: float = 2.0) -> float:
    """Bisection for the stiffness whose soft k-means cost matches ``target_cost``.

    The cost is non-increasing in beta (its derivative is minus a variance), so the
    achievable range is [cost(beta_max), cost(0)].
    """
    dm = dm if dm is not None else build_distance_matrix(points)
    if centers is None:
        centers = lloyd_kmeans(points, VanillaConfig(k=k, p=2, seed=seed), dm).centers

    def cost(beta):
        return soft_cost(softmax_assign(dm, centers, beta), dm, p)

    probe = [cost(b) for b in np.concatenate([[0.0], np.logspace(-4, math.log10(beta_max), 7)])]
    if any(b > a * (1 + 1e-9) + 1e-12 for a, b in zip(probe, probe[1:])):
        raise RuntimeError("soft k-means cost is not monotone in beta on this instance")
    hi_cost, lo_cost = probe[0], probe[-1]
    slack = tol * max(abs(target_cost), 1e-300)
    if target_cost >= hi_cost - slack:
        if target_cost > hi_cost + slack:
            raise ValueError(f"target {target_cost:.6g} above the uniform cost {hi_cost:.6g}")
        return 0.0
    if target_cost <= lo_cost + slack:
        if target_cost < lo_cost - slack:
            raise ValueError(f"target {target_cost:.6g} below the hard cost {lo_cost:.6g}")
        return beta_max
    lo, hi = 0.0, beta_max
    # bisect on log(beta); while the lower end is still 0, step down by decades
    for _ in range(steps):
        mid = math.sqrt(lo * hi) if lo > 0 else hi / 1000.0
        c = cost(mid)
        if abs(c - target_cost) <= slack * 1e-3:
            return mid
        if c > target_cost:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo if abs(cost(lo) - target_cost) <= abs(cost(hi) - target_cost) else hi


# --------------------------------------------------------------------------- audits


def count_violations(sc: SoftClustering, fairness: FairnessConstraintSet, kind: DivergenceKind = TV, tol: float = 1e-6) -> tuple:
    """(count, percent of constrained pairs, worst pair (j1, j2, divergence, bound)).

    A pair violates when D(mu_j1 || mu_j2) > F + tol; for asymmetric divergences
    both orientations are checked.
    """
    if fairness.n != sc.n:
        raise ValueError("fairness constraints cover a different point set")
    total = len(fairness)
    if total == 0:
        return 0, 0.0, None
    a, b = fairness.pairs[:, 0], fairness.pairs[:, 1]
    if kind.tag == "tv":
        div = 0.5 * np.abs(sc.mu[a] - sc.mu[b]).sum(axis=1)
    else:
        div = np.array([max(evaluate(kind, sc.mu[i], sc.mu[j]), evaluate(kind, sc.mu[j], sc.mu[i])) for i, j in zip(a, b)])
    excess = div - fairness.bounds
    bad = excess > tol
    w = int(np.argmax(excess))
    worst = (int(a[w]), int(b[w]), float(div[w]), float(fairness.bounds[w]))
    count = int(bad.sum())
    return count, 100.0 * count / total, worst


def mad(sc: SoftClustering, group, n: int | None = None) -> float:
    """max over centers of |group mass - p_r * total mass|, with p_r = |G_r| / n."""
    n = sc.n if n is None else n
    members = sorted(int(j) for j in group)
    if members and (members[0] < 0 or members[-1] >= n):
        raise ValueError("group members out of range")
    pr = len(members) / n
    mass_g = sc.mu[members].sum(axis=0)
    mass_v = sc.mu.sum(axis=0)
    return float(np.max(np.abs(mass_g - pr * mass_v)))


def emd_uniform_group(group, n: int, dm: DistanceMatrix) -> float:
    """Earthmover distance between the uniform law on the group and the uniform law on V."""
    members = sorted(int(j) for j in group)
    if not members:
        raise ValueError("group must be nonempty")
    if len(members) == n:
        return 0.0
    supply = np.zeros(n)
    supply[members] = 1.0 / len(members)
    demand = np.full(n, 1.0 / n)
    # only group points carry supply; restrict rows to them
    _, total = solve_transportation(supply[members], demand, dm.d[members])
    return total


def check_bias_bound(sc: SoftClustering, groups: GroupSpec, dm: DistanceMatrix, kind: DivergenceKind = TV, tol: float = 1e-6) -> AuditReport:
    """Per-group MAD_r against |G_r| * d_EM(nu_G, nu_V) for a solution fair under F = d on all pairs."""
    metric = fairness_metric(dm)
    viol, pct, worst = count_violations(sc, metric, kind, tol)
    if viol:
        raise ValueError(f"solution is not individually fair with respect to F = d ({viol} violated pairs)")
    if not tv_lower_bounds(kind):
        # the bound needs TV-fairness; a weaker divergence does not deliver it
        tv_viol, _, _ = count_violations(sc, metric, TV, tol)
        if tv_viol:
            raise ValueError("divergence does not dominate TV and the solution is not TV-fair under F = d")
    report = AuditReport(viol, pct, worst)
    for name, members in zip(groups.names, groups.members):
        mr = mad(sc, members, sc.n)
        bound = len(members) * emd_uniform_group(members, sc.n, dm)
        report.per_group.append(GroupAudit(str(name), len(members), mr, bound, mr <= bound + tol))
    return report


def make_price_instance(r: float, R: float, eps: float) -> tuple:
    """Ten points on a line: five within r of each other, a gap of R, five more within r.

    The fairness set constrains only the two middle points u (id 2) and v (id 7),
    with F(u, v) = eps; every other pair is unconstrained.
    """
    if not (0 < r < R):
        raise ValueError("need 0 < r < R")
    if eps <= 0:
        raise ValueError("eps must be positive")
    left = np.linspace(0.0, r, 5)
    right = left + r + R
    ps = PointSet(np.concatenate([left, right]).reshape(-1, 1))
    fair = FairnessConstraintSet.from_directed({(2, 7): eps}, 10)
    return ps, fair
