"""Independent reference implementations used by the tests.

Nothing here imports scorekit internals: the oracles are written from the
definitions so they can catch mistakes in the library code.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Discrete:
    """A finite distribution with atoms ``y`` and probabilities ``p``."""

    y: np.ndarray
    p: np.ndarray

    def mean(self) -> float:
        return float(np.dot(self.p, self.y))

    def cdf(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return (self.y[None, :] <= t[:, None]).astype(float) @ self.p

    def lower_quantile(self, alpha: float) -> float:
        order = np.argsort(self.y)
        cum = np.cumsum(self.p[order])
        for yi, c in zip(self.y[order], cum):
            if c >= alpha:
                return float(yi)
        return float(self.y[order][-1])

    def expectile(self, alpha: float) -> float:
        """Exact root of the piecewise linear map
        ``z -> sum p |1{z >= y} - alpha| (z - y)``."""
        atoms = np.sort(np.unique(self.y))
        for lo, hi in zip(atoms[:-1], atoms[1:]):
            # on (lo, hi] the weights are fixed: alpha-weights above z, (1-alpha) at or below
            below = self.y <= lo
            w = np.where(below, 1.0 - alpha, alpha) * self.p
            f_lo = float(np.sum(w * (lo - self.y)))
            f_hi = float(np.sum(w * (hi - self.y)))
            if f_lo <= 0.0 <= f_hi:
                if f_hi == f_lo:
                    return float(lo)
                return float(lo + (hi - lo) * (-f_lo) / (f_hi - f_lo))
        return float(atoms[0])


def random_discrete(rng: np.random.Generator, low: float, high: float, max_support: int = 5) -> Discrete:
    k = int(rng.integers(1, max_support + 1))
    y = rng.uniform(low, high, size=k)
    p = rng.dirichlet(np.ones(k))
    return Discrete(y, p)


def random_binary_like(rng: np.random.Generator, max_support: int = 5) -> Discrete:
    """Atoms in [0, 1] always including both 0 and 1."""
    k = int(rng.integers(0, max_support - 1))
    y = np.concatenate([[0.0, 1.0], rng.uniform(0.0, 1.0, size=k)])
    p = rng.dirichlet(np.ones(y.size))
    return Discrete(y, p)


def brute_force_isotonic(x, y, w=None) -> np.ndarray:
    """Weighted least-squares isotonic fit by exhaustive search over
    partitions of the distinct ``x`` values into contiguous blocks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    knots, inv = np.unique(x, return_inverse=True)
    k = knots.size
    sw = np.bincount(inv, weights=w, minlength=k)
    swy = np.bincount(inv, weights=w * y, minlength=k)
    best, best_fit = np.inf, None
    for cuts in itertools.product([False, True], repeat=k - 1):
        starts = [0] + [i + 1 for i, c in enumerate(cuts) if c]
        ends = starts[1:] + [k]
        means = [swy[s:e].sum() / sw[s:e].sum() for s, e in zip(starts, ends)]
        if any(b < a for a, b in zip(means[:-1], means[1:])):
            continue
        knot_fit = np.concatenate([np.full(e - s, m) for s, e, m in zip(starts, ends, means)])
        fit = knot_fit[inv]
        sse = float(np.sum(w * (y - fit) ** 2))
        if sse < best - 1e-15:
            best, best_fit = sse, fit
    return best_fit


def tweedie_closed_form(z, y, p):
    """Textbook unit deviance, written out per special case."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if p == 0:
        return (y - z) ** 2
    if p == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            ylog = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / z), 0.0)
        return 2.0 * (ylog - y + z)
    if p == 2:
        return 2.0 * (np.log(z / y) + y / z - 1.0)
    ymax = np.maximum(y, 0.0)
    return 2.0 * (ymax ** (2 - p) / ((1 - p) * (2 - p)) - y * z ** (1 - p) / (1 - p) + z ** (2 - p) / (2 - p))
