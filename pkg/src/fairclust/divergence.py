"""f-divergences between finite distributions.

Degenerate cells follow the usual conventions: ``0 * f(0/0) = 0`` and
``0 * f(a/0) = lim_{x->0+} x f(a/x) = a * lim_{t->inf} f(t)/t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DIST_TOL = 1e-8


@dataclass(frozen=True)
class DivergenceKind:
    tag: str
    generator: Callable[[float], float] | None = field(default=None, compare=False)
    # lim_{t->inf} f(t)/t; estimated numerically when not supplied
    slope_at_infinity: float | None = None

    def __post_init__(self):
        if self.tag not in ("tv", "kl", "generic"):
            raise ValueError(f"unknown divergence tag {self.tag!r}")
        if self.tag == "generic":
            if self.generator is None:
                raise ValueError("a generic f-divergence needs a generator")
            f1 = float(self.generator(1.0))
            if abs(f1) > 1e-12:
                raise ValueError(f"generator must satisfy f(1) = 0, got {f1}")
            if self.slope_at_infinity is None:
                object.__setattr__(self, "slope_at_infinity", _estimate_slope(self.generator))

    @property
    def linearizable(self) -> bool:
        return self.tag == "tv"


def _estimate_slope(f: Callable[[float], float]) -> float:
    s1 = f(1e6) / 1e6
    s2 = f(1e12) / 1e12
    if s2 - s1 > 1e-3 * max(1.0, abs(s1)):
        return math.inf
    return s2


TV = DivergenceKind("tv")
KL = DivergenceKind("kl")


def generic_f(f: Callable[[float], float], slope_at_infinity: float | None = None) -> DivergenceKind:
    return DivergenceKind("generic", f, slope_at_infinity)


def _check_distribution(x: np.ndarray, name: str) -> None:
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a nonempty vector")
    if np.any(x < 0) or abs(float(x.sum()) - 1.0) > DIST_TOL:
        raise ValueError(f"{name} is not a probability vector")


def tv_distance(P, Q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(P, float) - np.asarray(Q, float))))


def evaluate(kind: DivergenceKind, P, Q) -> float:
    """D_f(P || Q). KL with a cell where P > 0 = Q returns ``math.inf``."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ValueError(f"length mismatch: {P.shape} vs {Q.shape}")
    _check_distribution(P, "P")
    _check_distribution(Q, "Q")
    if kind.tag == "tv":
        # sum of |p - q| is order-independent of the arguments, so TV is exactly symmetric
        return 0.5 * float(np.sum(np.abs(P - Q)))
    if kind.tag == "kl":
        pos = P > 0
        if np.any(pos & (Q == 0)):
            return math.inf
        return max(0.0, float(np.sum(P[pos] * np.log(P[pos] / Q[pos]))))
    total = 0.0
    f = kind.generator
    for p, q in zip(P, Q):
        if q > 0:
            total += f(p / q) * q
        elif p > 0:
            if math.isinf(kind.slope_at_infinity):
                return math.inf
            total += p * kind.slope_at_infinity
    return max(0.0, total)


def tv_lower_bounds(kind: DivergenceKind, trials: int = 1000, seed: int = 0) -> bool:
    """Whether D_f >= TV held on every sampled pair (an empirical gate, not a proof).

    TV passes trivially. Pairs are drawn from flat Dirichlet distributions over
    2..6 cells. KL fails this gate: Pinsker only gives KL >= 2 TV^2, which is
    below TV whenever TV < 1/2.
    """
    if kind.tag == "tv":
        return True
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        m = int(rng.integers(2, 7))
        P, Q = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))
        if evaluate(kind, P, Q) < tv_distance(P, Q) - 1e-12:
            return False
    return True
