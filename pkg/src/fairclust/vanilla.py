"""Approximation algorithms for unconstrained (k, p)-clustering with centers in V."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import DistanceMatrix, HardClustering, PointSet, as_norm_order, build_distance_matrix, hard_cost


@dataclass(frozen=True)
class VanillaConfig:
    k: int
    p: float = 2.0
    seed: int = 0
    restarts: int = 5
    max_iters: int = 100
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p", as_norm_order(self.p))
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be >= 1")

    def check_n(self, n: int) -> None:
        if self.k > n:
            raise ValueError(f"k = {self.k} exceeds the number of points n = {n}")


@dataclass
class LloydRun:
    centroids: np.ndarray
    labels: np.ndarray
    costs: list  # sum of squared distances after every assignment step
    iterations: int


def _dsquared_seeding(sqdist_to: callable, n: int, k: int, rng: np.random.Generator) -> list:
    """k-means++ seeding; ``sqdist_to(i)`` returns the squared distances of all points to point i."""
    first = int(rng.integers(n))
    chosen = [first]
    closest = sqdist_to(first).copy()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point coincides with a chosen seed; fill with the lowest unused ids
            rest = [i for i in range(n) if i not in chosen]
            chosen.extend(rest[: k - len(chosen)])
            break
        nxt = int(rng.choice(n, p=closest / total))
        chosen.append(nxt)
        np.minimum(closest, sqdist_to(nxt), out=closest)
    return chosen


def lloyd_run(x: np.ndarray, k: int, rng: np.random.Generator, max_iters: int = 100) -> LloydRun:
    """One k-means++ seeded run of Lloyd's iterations on continuous centroids."""
    n = x.shape[0]
    seeds = _dsquared_seeding(lambda i: np.sum((x - x[i]) ** 2, axis=1), n, k, rng)
    centroids = x[seeds].copy()
    labels = None
    costs = []
    it = 0
    for it in range(1, max_iters + 1):
        sq = np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(sq, axis=1)
        costs.append(float(sq[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = x[members].mean(axis=0)
    return LloydRun(centroids, labels, costs, it)


def snap_to_points(centroids: np.ndarray, x: np.ndarray) -> list:
    """Nearest input point (lowest id on ties) for every centroid, deduplicated and sorted."""
    sq = np.sum((centroids[:, None, :] - x[None, :, :]) ** 2, axis=2)
    return sorted(set(int(i) for i in np.argmin(sq, axis=1)))


def lloyd_kmeans(points: PointSet, cfg: VanillaConfig, dm: DistanceMatrix | None = None) -> HardClustering:
    """Best-of-restarts Lloyd k-means with centroids snapped to their nearest input point."""
    if not isinstance(points, PointSet):
        raise TypeError("Lloyd's algorithm needs Euclidean coordinates (a PointSet)")
    if cfg.p != 2:
        raise ValueError("lloyd_kmeans optimizes the p = 2 objective")
    cfg.check_n(points.n)
    dm = dm if dm is not None else build_distance_matrix(points)
    x = points.points
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)

    def one(ss):
        run = lloyd_run(x, cfg.k, np.random.default_rng(ss), cfg.max_iters)
        hc = HardClustering.nearest(snap_to_points(run.centroids, x), dm)
        return hard_cost(hc, dm, 2), hc

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(one, seqs))
    else:
        results = [one(ss) for ss in seqs]
    # min cost, then lowest restart index
    best = min(range(len(results)), key=lambda i: (results[i][0], i))
    return results[best][1]


def gonzalez_kcenter(dm: DistanceMatrix, cfg: VanillaConfig) -> HardClustering:
    """Farthest-first traversal from point 0; radius is at most twice the optimum."""
    cfg.check_n(dm.n)
    centers = [0]
    closest = dm.d[0].copy()
    while len(centers) < cfg.k:
        far = int(np.argmax(closest))
        if closest[far] <= 0:
            break
        centers.append(far)
        np.minimum(closest, dm.d[far], out=closest)
    return HardClustering.nearest(centers, dm)


def local_search_kmedian(dm: DistanceMatrix, cfg: VanillaConfig) -> HardClustering:
    """D^2-seeded single-swap local search on sum_j d(j, C)^p.

    Each pass applies the best improving (center out, point in) swap; ties go to
    the lowest (out, in) ids. Stops at a swap-local optimum.
    """
    p = 1.0 if math.isinf(cfg.p) else cfg.p
    cfg.check_n(dm.n)
    n, k = dm.n, cfg.k
    dp = dm.d**p
    rng = np.random.default_rng(cfg.seed)
    centers = sorted(_dsquared_seeding(lambda i: dm.d[i] ** 2, n, k, rng))

    def cost_of(cs):
        return float(dp[:, cs].min(axis=1).sum())

    current = cost_of(centers)
    for _ in range(100 * n * k + 100):
        sub = dp[:, centers]
        order = np.argsort(sub, axis=1, kind="stable")
        first = sub[np.arange(n), order[:, 0]]
        second = sub[np.arange(n), order[:, 1]] if k > 1 else np.full(n, np.inf)
        outside = np.array([i for i in range(n) if i not in set(centers)], dtype=int)
        if outside.size == 0:
            break
        best = (current, None, None)
        for slot in range(k):
            # distance to the remaining centers when centers[slot] is removed
            base = np.where(order[:, 0] == slot, second, first)
            trial = np.minimum(base[None, :], dp[outside, :]).sum(axis=1)
            arg = int(np.argmin(trial))
            if trial[arg] < best[0] - 1e-12 * max(1.0, current):
                best = (float(trial[arg]), slot, int(outside[arg]))
        if best[1] is None:
            break
        centers[best[1]] = best[2]
        centers.sort()
        current = cost_of(centers)
    return HardClustering.nearest(centers, dm)


def vanilla_cluster(data, cfg: VanillaConfig) -> HardClustering:
    """Dispatch on the norm order: Lloyd for p = 2 with coordinates, Gonzalez for p = inf, swaps otherwise."""
    if math.isinf(cfg.p):
        dm = data if isinstance(data, DistanceMatrix) else build_distance_matrix(data)
        return gonzalez_kcenter(dm, cfg)
    if cfg.p == 2 and isinstance(data, PointSet):
        return lloyd_kmeans(data, cfg)
    dm = data if isinstance(data, DistanceMatrix) else build_distance_matrix(data)
    return local_search_kmedian(dm, cfg)
