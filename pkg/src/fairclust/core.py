"""Metric instances, hard/soft clusterings, protected groups and cost functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

INF = math.inf

ROW_SUM_TOL = 1e-8
RENORMALIZE_TOL = 1e-6
TRIANGLE_TOL = 1e-9


def as_norm_order(p) -> float:
    """Parse a norm order; ``"inf"`` and ``math.inf`` both map to :data:`INF`."""
    if isinstance(p, str):
        if p.strip().lower() in ("inf", "infinity", "oo"):
            return INF
        p = float(p)
    p = float(p)
    if math.isnan(p) or p < 1:
        raise ValueError(f"norm order must be >= 1, got {p}")
    return p


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be an n x D array with n, D >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "PointSet":
        dims = {len(r) for r in rows}
        if len(dims) > 1:
            raise ValueError(f"dimension mismatch among points: {sorted(dims)}")
        return cls(np.array(rows, dtype=float))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)


@dataclass(frozen=True)
class DistanceMatrix:
    """Dense symmetric metric. Explicit matrices are checked for the metric axioms."""

    d: np.ndarray
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise ValueError(f"distance matrix must be square and nonempty, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("distances must be finite")
        if np.any(d < 0):
            raise ValueError("distances must be nonnegative")
        if np.any(np.diag(d) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix must be symmetric")
        if self.check:
            violation = triangle_violation(d)
            if violation > TRIANGLE_TOL * max(1.0, float(d.max())):
                raise ValueError(f"triangle inequality violated by {violation:.3g}")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def __getitem__(self, idx):
        return self.d[idx]


def triangle_violation(d: np.ndarray) -> float:
    """Largest amount by which d[i,k] exceeds d[i,j] + d[j,k]; O(n^3) time, O(n^2) memory."""
    worst = 0.0
    for j in range(d.shape[0]):
        slack = d[:, j][:, None] + d[j, :][None, :] - d
        worst = max(worst, float(-slack.min()))
    return worst


def build_distance_matrix(points: PointSet | np.ndarray | Sequence[Sequence[float]]) -> DistanceMatrix:
    if not isinstance(points, PointSet):
        if isinstance(points, np.ndarray):
            points = PointSet(points)
        else:
            points = PointSet.from_rows(points)
    x = points.points
    sq = np.einsum("ij,ij->i", x, x)
    g = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(g, 0.0, out=g)
    d = np.sqrt(g)
    # exact symmetry and zero diagonal; Euclidean distances need no triangle check
    d = np.triu(d, 1)
    d = d + d.T
    return DistanceMatrix(d, check=False)


@dataclass(frozen=True)
class HardClustering:
    centers: tuple
    assign: np.ndarray

    def __post_init__(self):
        centers = tuple(int(c) for c in self.centers)
        if len(centers) == 0:
            raise ValueError("a clustering needs at least one center")
        if len(set(centers)) != len(centers):
            raise ValueError("duplicate center ids")
        assign = np.asarray(self.assign, dtype=int)
        if assign.ndim != 1:
            raise ValueError("assign must be a vector over point ids")
        if not np.isin(assign, centers).all():
            raise ValueError("every assigned center must be an open center")
        assign.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "assign", assign)

    @property
    def n(self) -> int:
        return self.assign.shape[0]

    @property
    def k(self) -> int:
        return len(self.centers)

    @classmethod
    def nearest(cls, centers: Iterable[int], dm: DistanceMatrix) -> "HardClustering":
        """Assign every point to its closest center, ties to the lowest center id."""
        centers = tuple(sorted(int(c) for c in centers))
        sub = dm.d[:, list(centers)]
        idx = np.argmin(sub, axis=1)
        return cls(centers, np.asarray(centers)[idx])

    def to_soft(self) -> "SoftClustering":
        mu = np.zeros((self.n, self.k))
        col = {c: i for i, c in enumerate(self.centers)}
        mu[np.arange(self.n), [col[c] for c in self.assign]] = 1.0
        return SoftClustering(self.centers, mu)


@dataclass(frozen=True)
class SoftClustering:
    """A center set plus one probability row per point (row j is mu_j over ``centers``)."""

    centers: tuple
    mu: np.ndarray

    def __post_init__(self):
        centers = tuple(int(c) for c in self.centers)
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 2 or mu.shape[1] != len(centers) or len(centers) == 0:
            raise ValueError(f"mu must be n x {len(centers)}, got {mu.shape}")
        if len(set(centers)) != len(centers):
            raise ValueError("duplicate center ids")
        if np.any(mu < 0) or np.any(mu > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        dev = np.abs(mu.sum(axis=1) - 1.0)
        if dev.size and dev.max() > ROW_SUM_TOL:
            raise ValueError(f"rows must sum to 1 (max deviation {dev.max():.3g})")
        mu.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def k(self) -> int:
        return len(self.centers)

    @classmethod
    def from_raw(cls, centers: Sequence[int], mu: np.ndarray, tol: float = RENORMALIZE_TOL) -> "SoftClustering":
        """Clean solver output: clip round-off and renormalize rows off by at most ``tol``."""
        mu = np.array(mu, dtype=float)
        if np.any(mu < -tol) or np.any(mu > 1 + tol):
            raise ValueError("solver returned probabilities outside [0, 1] beyond tolerance")
        mu = np.clip(mu, 0.0, 1.0)
        sums = mu.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > tol):
            raise ValueError(f"row sums deviate from 1 by {np.abs(sums - 1).max():.3g} > {tol}")
        mu = mu / sums[:, None]
        return cls(tuple(centers), np.clip(mu, 0.0, 1.0))

    def expected_distances(self, dm: DistanceMatrix, p: float = 1.0) -> np.ndarray:
        sub = dm.d[:, list(self.centers)]
        return np.sum(self.mu * sub**p, axis=1)

    def support(self, j: int, eps: float = 1e-9) -> list:
        return [c for c, w in zip(self.centers, self.mu[j]) if w > eps]


@dataclass(frozen=True)
class GroupSpec:
    """Possibly overlapping protected groups with per-group bounds beta_r <= alpha_r."""

    names: tuple
    members: tuple
    alpha: np.ndarray
    beta: np.ndarray
    delta: float | None = None

    def __post_init__(self):
        members = tuple(frozenset(int(j) for j in m) for m in self.members)
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if not (len(self.names) == len(members) == alpha.size == beta.size):
            raise ValueError("names, members, alpha and beta must have one entry per group")
        if np.any(beta < 0) or np.any(alpha > 1) or np.any(beta > alpha):
            raise ValueError("group bounds must satisfy 0 <= beta <= alpha <= 1")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_delta(cls, members: Mapping[str, Iterable[int]] | Sequence[Iterable[int]], n: int, delta: float) -> "GroupSpec":
        """beta_r = p_r (1 - delta), alpha_r = p_r / (1 - delta), with p_r = |G_r| / n (alpha capped at 1)."""
        if not 0 <= delta < 1:
            raise ValueError("delta must lie in [0, 1)")
        if isinstance(members, Mapping):
            names, sets = list(members.keys()), [frozenset(v) for v in members.values()]
        else:
            sets = [frozenset(v) for v in members]
            names = [f"g{r}" for r in range(len(sets))]
        prop = np.array([len(s) / n for s in sets])
        return cls(tuple(names), tuple(sets), np.minimum(prop / (1 - delta), 1.0), prop * (1 - delta), delta)

    def __len__(self) -> int:
        return len(self.members)

    def proportions(self, n: int) -> np.ndarray:
        return np.array([len(m) / n for m in self.members])

    def indicator(self, n: int) -> np.ndarray:
        """ell x n 0/1 membership matrix."""
        ind = np.zeros((len(self), n))
        for r, m in enumerate(self.members):
            ind[r, sorted(m)] = 1.0
        return ind


@dataclass(frozen=True)
class FairnessConstraintSet:
    """Sparse symmetric pairwise divergence bounds F(j1, j2).

    Pairs are stored once as (i, j) with i < j; an absent pair is unconstrained.
    Asymmetric input is symmetrized by keeping the smaller of the two directed bounds.
    """

    pairs: np.ndarray
    bounds: np.ndarray
    n: int
    scope: str = "all-pairs"

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        bounds = np.asarray(self.bounds, dtype=float).reshape(-1)
        if pairs.shape[0] != bounds.size:
            raise ValueError("one bound per pair required")
        if np.any(bounds < 0) or not np.all(np.isfinite(bounds)):
            raise ValueError("fairness bounds must be finite and nonnegative")
        if pairs.size and (pairs.min() < 0 or pairs.max() >= self.n):
            raise ValueError("pair index out of range")
        if np.any(pairs[:, 0] >= pairs[:, 1]):
            raise ValueError("pairs must be stored as (i, j) with i < j; use from_directed")
        if self.scope not in ("all-pairs", "within-groups"):
            raise ValueError(f"unknown scope {self.scope!r}")
        pairs.setflags(write=False)
        bounds.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def from_directed(cls, entries: Mapping[tuple, float] | Iterable[tuple], n: int, scope: str = "all-pairs") -> "FairnessConstraintSet":
        """Build from (j1, j2) -> bound entries; diagonal entries are dropped."""
        items = entries.items() if isinstance(entries, Mapping) else ((e[0], e[1]) if len(e) == 2 else ((e[0], e[1]), e[2]) for e in entries)
        best: dict = {}
        for key, val in items:
            i, j = int(key[0]), int(key[1])
            if i == j:
                continue
            key = (min(i, j), max(i, j))
            val = float(val)
            best[key] = min(val, best.get(key, val))
        keys = sorted(best)
        return cls(np.array(keys, dtype=int).reshape(-1, 2), np.array([best[k] for k in keys]), n, scope)

    @classmethod
    def from_matrix(cls, f: np.ndarray, mask: np.ndarray | None = None, scope: str = "all-pairs") -> "FairnessConstraintSet":
        """Pairs (i < j) where ``mask`` is set (all pairs by default); symmetrized by min."""
        f = np.asarray(f, dtype=float)
        n = f.shape[0]
        fs = np.minimum(f, f.T)
        if mask is None:
            mask = np.ones((n, n), dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        mask = np.triu(mask | mask.T, 1)
        i, j = np.nonzero(mask)
        return cls(np.column_stack([i, j]), fs[i, j], n, scope)

    @classmethod
    def empty(cls, n: int) -> "FairnessConstraintSet":
        return cls(np.zeros((0, 2), dtype=int), np.zeros(0), n)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def bound(self, j1: int, j2: int) -> float | None:
        i, j = min(j1, j2), max(j1, j2)
        hit = np.nonzero((self.pairs[:, 0] == i) & (self.pairs[:, 1] == j))[0]
        return float(self.bounds[hit[0]]) if hit.size else None

    def as_dict(self) -> dict:
        """Both orientations, matching the per-ordered-pair statement of the constraint."""
        out = {}
        for (i, j), b in zip(self.pairs.tolist(), self.bounds.tolist()):
            out[(i, j)] = b
            out[(j, i)] = b
        return out

    def within_groups(self, groups: GroupSpec) -> "FairnessConstraintSet":
        """Keep pairs whose endpoints share at least one protected group."""
        ind = groups.indicator(self.n).astype(bool)
        if len(self):
            keep = np.any(ind[:, self.pairs[:, 0]] & ind[:, self.pairs[:, 1]], axis=0)
        else:
            keep = np.zeros(0, dtype=bool)
        return FairnessConstraintSet(self.pairs[keep], self.bounds[keep], self.n, "within-groups")

    def active(self, cap: float = 1.0) -> "FairnessConstraintSet":
        """Drop bounds >= ``cap``; TV never exceeds 1 so those pairs are vacuous."""
        keep = self.bounds < cap
        return FairnessConstraintSet(self.pairs[keep], self.bounds[keep], self.n, self.scope)


def soft_cost(sc: SoftClustering, dm: DistanceMatrix, p: float = 1.0) -> float:
    """(sum_j E_{c ~ mu_j} d(j, c)^p)^(1/p). Finite p only; k-center lives in fair_assign."""
    p = as_norm_order(p)
    if math.isinf(p):
        raise ValueError("soft_cost needs a finite norm order; use fair_kcenter for p = inf")
    if sc.n != dm.n:
        raise ValueError("clustering and distance matrix cover different point sets")
    total = float(np.sum(sc.expected_distances(dm, p)))
    return total ** (1.0 / p)


def hard_cost(hc: HardClustering, dm: DistanceMatrix, p: float = 1.0) -> float:
    p = as_norm_order(p)
    if hc.n != dm.n:
        raise ValueError("clustering and distance matrix cover different point sets")
    dist = dm.d[np.arange(hc.n), hc.assign]
    if math.isinf(p):
        return float(dist.max())
    return float(np.sum(dist**p)) ** (1.0 / p)
