"""Rounding of fractional k-center solutions and the Dominating-Set reduction at toy scale."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import lp as lpmod
from .core import DistanceMatrix, FairnessConstraintSet, HardClustering, SoftClustering
from .divergence import tv_distance
from .fair_assign import _assignment_program

SUPPORT_EPS = 1e-9
BRUTEFORCE_MAX_N = 16
REDUCTION_MAX_N = 10
# strict "< 2" test on an LP optimum
STRICT_GAP = 1e-7


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("vertex count must be >= 0")
        norm = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) has an endpoint outside 0..{self.n - 1}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for u, v in self.edges:
            adj[u, v] = adj[v, u] = True
        return adj

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, frozenset(itertools.combinations(range(n), 2)))

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, frozenset((i, i + 1) for i in range(n - 1)))

    @classmethod
    def star(cls, n: int) -> "Graph":
        return cls(n, frozenset((0, i) for i in range(1, n)))

    @classmethod
    def random(cls, n: int, p: float, rng: np.random.Generator) -> "Graph":
        return cls(n, frozenset((u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p))

    def to_text(self) -> str:
        lines = [str(self.n)] + [f"{u} {v}" for u, v in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
        if not lines:
            raise ValueError("empty graph file")
        n = int(lines[0])
        edges = []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"bad edge line {ln!r}")
            edges.append((int(parts[0]), int(parts[1])))
        return cls(n, frozenset(edges))

    @classmethod
    def read(cls, path) -> "Graph":
        return cls.from_text(Path(path).read_text())


def round_support_nearest(sc: SoftClustering, dm: DistanceMatrix) -> HardClustering:
    """Send each point to the nearest center in the support of its distribution."""
    sub = dm.d[:, list(sc.centers)]
    masked = np.where(sc.mu > SUPPORT_EPS, sub, np.inf)
    # sc.centers may be unsorted; break distance ties by center id, not column
    order = np.argsort(sc.centers, kind="stable")
    pick = order[np.argmin(masked[:, order], axis=1)]
    assign = [sc.centers[c] for c in pick]
    return HardClustering(tuple(sc.centers), tuple(assign))


def domset_to_metric(g: Graph) -> DistanceMatrix:
    """1 between adjacent vertices, 2 between non-adjacent ones."""
    d = np.where(g.adjacency(), 1.0, 2.0)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d)


def _dominates(adj: np.ndarray, subset) -> bool:
    covered = np.zeros(adj.shape[0], dtype=bool)
    for s in subset:
        covered |= adj[s]
        covered[s] = True
    return bool(covered.all())


def domset_bruteforce(g: Graph, k: int) -> bool:
    """Whether some set of at most k vertices dominates the graph."""
    if g.n > BRUTEFORCE_MAX_N:
        raise ValueError(f"exhaustive search limited to n <= {BRUTEFORCE_MAX_N}")
    if g.n == 0:
        return True
    if k <= 0:
        return False
    adj = g.adjacency()
    # supersets of a dominating set dominate, so size exactly min(k, n) suffices
    return any(_dominates(adj, s) for s in itertools.combinations(range(g.n), min(k, g.n)))


def reduction_fairness(dm: DistanceMatrix) -> FairnessConstraintSet:
    """F = d / 2 on every pair, which maps the {1, 2} metric onto {0.5, 1}."""
    return FairnessConstraintSet.from_matrix(dm.d / 2.0)


def min_max_expected_distance(dm: DistanceMatrix, centers, fairness: FairnessConstraintSet, tol: float = lpmod.DEFAULT_TOL) -> tuple:
    """Smallest achievable max_j E_{mu_j}[d] over TV-fair families on ``centers``.

    Returns (value, SoftClustering) or (inf, None) when no fair family exists.
    """
    centers = tuple(centers)
    bld, xidx = _assignment_program(dm, centers, fairness, None)
    t = bld.add_vars(1, 0.0, np.inf, 1.0)[0]
    n, k = dm.n, len(centers)
    sub = dm.d[:, list(centers)]
    rows = np.repeat(np.arange(n), k + 1)
    cols = np.column_stack([xidx, np.full(n, t)]).reshape(-1)
    vals = np.column_stack([sub, -np.ones(n)]).reshape(-1)
    bld.add_rows(rows, cols, vals, lpmod.LE, np.zeros(n))
    sol = lpmod.solve_lp(bld.build(), tol)
    if not sol.optimal:
        return float("inf"), None
    mu = sol.x[xidx]
    return float(sol.objective), SoftClustering.from_raw(centers, mu)


def fair_side(g: Graph, k: int) -> bool:
    """Whether a TV-fair family under F = d/2 on at most k centers keeps every expected distance below 2."""
    if g.n > REDUCTION_MAX_N:
        raise ValueError(f"reduction check limited to n <= {REDUCTION_MAX_N}")
    if g.n == 0:
        return True
    if k <= 0:
        return False
    dm = domset_to_metric(g)
    fair = reduction_fairness(dm)
    for centers in itertools.combinations(range(g.n), min(k, g.n)):
        val, _ = min_max_expected_distance(dm, centers, fair)
        if val < 2.0 - STRICT_GAP:
            return True
    return False


def verify_reduction(g: Graph, k: int) -> bool:
    """Both sides of the reduction decided independently; true when they agree."""
    if g.n > REDUCTION_MAX_N:
        raise ValueError(f"reduction check limited to n <= {REDUCTION_MAX_N}")
    return domset_bruteforce(g, k) == fair_side(g, k)


def radius_one_solution(g: Graph, k: int) -> HardClustering | None:
    """A hard k-center solution of radius at most 1 on the reduction metric, if one exists."""
    if g.n > BRUTEFORCE_MAX_N:
        raise ValueError(f"exhaustive search limited to n <= {BRUTEFORCE_MAX_N}")
    adj = g.adjacency()
    dm = domset_to_metric(g)
    for size in range(1, min(k, g.n) + 1):
        for s in itertools.combinations(range(g.n), size):
            if _dominates(adj, s):
                return HardClustering.nearest(s, dm)
    return None


def half_mass_witness(hc: HardClustering, c_hat: int | None = None) -> SoftClustering:
    """Fair family built from a radius-1 solution.

    Points served by ``c_hat`` keep all their mass there; every other point splits
    its mass evenly between ``c_hat`` and its own center.
    """
    c_hat = hc.centers[0] if c_hat is None else int(c_hat)
    if c_hat not in hc.centers:
        raise ValueError("c_hat must be an open center")
    col = {c: i for i, c in enumerate(hc.centers)}
    mu = np.zeros((hc.n, hc.k))
    for j, c in enumerate(hc.assign):
        if c == c_hat:
            mu[j, col[c_hat]] = 1.0
        else:
            mu[j, col[c_hat]] = 0.5
            mu[j, col[c]] = 0.5
    return SoftClustering(hc.centers, mu)


def check_witness(sc: SoftClustering, dm: DistanceMatrix) -> tuple:
    """(every pair satisfies TV <= d/2, largest expected distance)."""
    fair = True
    for a, b in itertools.combinations(range(sc.n), 2):
        if tv_distance(sc.mu[a], sc.mu[b]) > dm.d[a, b] / 2.0 + 1e-12:
            fair = False
            break
    return fair, float(sc.expected_distances(dm).max())


def unit_or_far_metric(g: Graph, far: float = 1e6) -> DistanceMatrix:
    """1 on edges, ``far`` elsewhere: the classic k-center hard instance.

    Only a metric when the edges form disjoint cliques, so the triangle check is skipped.
    """
    d = np.where(g.adjacency(), 1.0, float(far))
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d, check=False)


def fair_radius_one_exists(g: Graph, k: int, far: float = 1e6) -> bool:
    """Radius-1 individually fair k-center under F = d on the unit-or-far metric.

    With F = d every off-diagonal bound is at least 1, so point masses are fair and
    the question is whether some k centers cover every point within distance 1.
    """
    if g.n > BRUTEFORCE_MAX_N:
        raise ValueError(f"exhaustive search limited to n <= {BRUTEFORCE_MAX_N}")
    dm = unit_or_far_metric(g, far)
    fair = FairnessConstraintSet.from_matrix(dm.d).active()
    if g.n == 0:
        return True
    for s in itertools.combinations(range(g.n), min(max(k, 0), g.n)):
        support = dm.d[:, list(s)] <= 1.0
        if not support.any(axis=1).all():
            continue
        bld, _ = _assignment_program(dm, s, fair, None, support=support)
        if lpmod.solve_lp(bld.build()).optimal:
            return True
    return False
