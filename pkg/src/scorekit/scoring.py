"""Catalog of scoring functions S(z, y) with domain enforcement.

All functions accept scalars or equally shaped arrays and return a float
for scalar input and an ndarray otherwise.  Smaller scores are better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np
from scipy.special import xlogy

from .core import Family, ScoreSpec
from .errors import DomainViolation, InvalidInterval, ValidationError

LOG_LOSS_EPS = 1e-15

# Taylor terms used by the Tweedie ratio form near z == y
_SERIES_RADIUS = 0.5
_SERIES_TERMS = 30


def _prepare(z, y):
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = z.ndim == 0 and y.ndim == 0
    z, y = np.broadcast_arrays(np.atleast_1d(z), np.atleast_1d(y))
    return z, y, scalar


def _finish(out: np.ndarray, scalar: bool):
    return float(out.reshape(-1)[0]) if scalar else out


def _require(ok, family: str, z, y, bound: str, scalar: bool) -> None:
    ok = np.asarray(ok)
    if ok.all():
        return
    i = int(np.flatnonzero(~ok.reshape(-1))[0])
    zi = float(np.asarray(z).reshape(-1)[i])
    yi = float(np.asarray(y).reshape(-1)[i])
    raise DomainViolation(family, zi, yi, bound, None if scalar else i)


def _bregman_ratio(b: float, r: np.ndarray) -> np.ndarray:
    """(r**b - 1 - b(r - 1)) / (b(b - 1)) with limits at b in {0, 1}.

    Uses the Taylor series in u = log r close to r == 1, where the direct
    form cancels catastrophically; the series coefficients
    1 + b + ... + b**(k-2) stay finite at b = 0 and b = 1.
    """
    out = np.empty_like(r)
    u = np.log(r)
    near = np.abs(u) * max(1.0, abs(b)) < _SERIES_RADIUS
    if near.any():
        un = u[near]
        term = un * un / 2.0
        coef = 1.0
        acc = coef * term
        for k in range(3, _SERIES_TERMS):
            term = term * un / k
            coef = 1.0 + b * coef
            acc = acc + coef * term
        out[near] = acc
    far = ~near
    if far.any():
        rf, uf = r[far], u[far]
        if b == 0.0:
            out[far] = rf - 1.0 - uf
        elif b == 1.0:
            out[far] = rf * uf - rf + 1.0
        elif abs(b - 1.0) < 0.5:
            # r**b - r = r expm1((b-1)u) keeps the 1/(b-1) factor exact
            out[far] = (rf * _expm1_over(b - 1.0, uf) - (rf - 1.0)) / b
        elif abs(b) < 0.5:
            out[far] = (_expm1_over(b, uf) - (rf - 1.0)) / (b - 1.0)
        else:
            out[far] = (rf**b - 1.0 - b * (rf - 1.0)) / (b * (b - 1.0))
    return out


def _expm1_over(c: float, u):
    """expm1(c u) / c, accurate for small nonzero c."""
    return np.expm1(c * u) / c


def _tweedie(z: np.ndarray, y: np.ndarray, p: float, family: str, scalar: bool) -> np.ndarray:
    if 0.0 < p < 1.0:
        raise DomainViolation(family, bound=f"power p={p:g} in (0, 1) where no Tweedie distribution exists")
    if p == 0.0:
        return (y - z) ** 2
    _require(z > 0, family, z, y, "prediction must be > 0", scalar)
    if 1.0 <= p < 2.0:
        _require(y >= 0, family, z, y, "observation must be >= 0", scalar)
    elif p >= 2.0:
        _require(y > 0, family, z, y, "observation must be > 0", scalar)
    b = 2.0 - p
    out = np.empty(np.broadcast(z, y).shape)
    pos = y > 0
    if pos.any():
        zp = z[pos]
        out[pos] = 2.0 * zp**b * _bregman_ratio(b, y[pos] / zp)
    if (~pos).any():
        # max(0, y)**(2-p) vanishes; y log y -> 0 for p == 1
        zn, yn = z[~pos], y[~pos]
        if p == 1.0:
            out[~pos] = 2.0 * (zn - yn)
        else:
            out[~pos] = 2.0 * (-yn * zn ** (1.0 - p) / (1.0 - p) + zn**b / b)
    return out


def tweedie_deviance(z, y, p: float):
    """Unit Tweedie deviance d_p(y, z) with power ``p``.

    ``p = 0, 1, 2, 3`` give the squared error, Poisson, Gamma and inverse
    Gaussian deviances.  Powers in ``(0, 1)`` raise :class:`DomainViolation`.
    The deviance is positively homogeneous of degree ``2 - p``.
    """
    z, y, scalar = _prepare(z, y)
    return _finish(_tweedie(z, y, float(p), "tweedie", scalar), scalar)


def _homogeneous(z, y, a):
    return np.abs(y) ** a - np.abs(z) ** a - a * np.sign(z) * np.abs(z) ** (a - 1.0) * (y - z)


def _log_loss(z, y, clip: bool, scalar: bool):
    _require((y >= 0) & (y <= 1), "log_loss", z, y, "observation must lie in [0, 1]", scalar)
    _require((z >= 0) & (z <= 1), "log_loss", z, y, "prediction must lie in [0, 1]", scalar)
    if clip:
        z = np.clip(z, LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS)
    else:
        edge = (z == 0) | (z == 1)
        _require(~edge | (z == y), "log_loss", z, y, "certain prediction with a different outcome scores infinity", scalar)
    out = np.zeros(np.broadcast(z, y).shape)
    # exact zero for z == y in {0, 1}; 0 log 0 = 0 elsewhere
    inner = (z > 0) & (z < 1)
    zi, yi = z[inner], y[inner]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(yi > 0, yi * (np.log(np.where(yi > 0, yi, 1.0)) - np.log(zi)), 0.0)
        t0 = np.where(
            yi < 1, (1.0 - yi) * (np.log1p(-np.where(yi < 1, yi, 0.0)) - np.log1p(-zi)), 0.0
        )
    out[inner] = t1 + t0
    return out


def _binary(y, family, z, scalar):
    _require((y == 0) | (y == 1), family, z, y, "observation must be 0 or 1", scalar)


def score(spec: ScoreSpec, z, y):
    """Evaluate the scoring function ``spec`` at prediction ``z`` and
    observation ``y``.

    For the interval score ``z`` is the pair ``(lower, upper)``; for the
    mean-variance score it is ``(mu, sigma)``.

    Raises
    ------
    DomainViolation
        If a pair lies outside the family's domain.  For array input the
        exception carries the index of the first offending row.
    """
    fam = spec.family
    if fam is Family.INTERVAL:
        lower, upper = z
        return score_interval(lower, upper, y, spec.alpha)
    if fam is Family.MEAN_VARIANCE_PAIR:
        mu, sigma = z
        return score_mean_variance(mu, sigma, y)
    if fam is Family.ELEMENTARY_EXPECTATION:
        return score_elementary(spec.theta, z, y)

    z, y, scalar = _prepare(z, y)
    name = fam.value
    if fam is Family.SQUARED_ERROR:
        out = (y - z) ** 2
    elif fam is Family.POISSON_DEVIANCE:
        out = _tweedie(z, y, 1.0, name, scalar)
    elif fam is Family.GAMMA_DEVIANCE:
        out = _tweedie(z, y, 2.0, name, scalar)
    elif fam is Family.TWEEDIE_DEVIANCE:
        out = _tweedie(z, y, spec.p, name, scalar)
    elif fam is Family.HOMOGENEOUS:
        out = _homogeneous(z, y, spec.a)
    elif fam is Family.LOG_LOSS:
        out = _log_loss(z, y, spec.clip, scalar)
    elif fam is Family.PINBALL:
        out = ((z >= y) - spec.alpha) * (z - y)
    elif fam is Family.APQSF:
        out = np.abs((z >= y) - spec.alpha) * (z - y) ** 2
    elif fam is Family.ABSOLUTE_ERROR:
        out = np.abs(z - y)
    elif fam is Family.ZERO_ONE:
        out = (z != y).astype(float)
    elif fam is Family.COST_WEIGHTED:
        out = cost_weighted(z, y, spec.c, _scalar=scalar)
    elif fam is Family.HINGE:
        _binary(y, name, z, scalar)
        out = np.maximum(0.0, 1.0 - (2.0 * y - 1.0) * z)
    elif fam in (Family.APE, Family.RE):
        _require((z > 0) & (y > 0), name, z, y, "prediction and observation must be > 0", scalar)
        out = np.abs((z - y) / (y if fam is Family.APE else z))
    else:  # pragma: no cover - enum is exhaustive
        raise ValidationError(f"unsupported family {fam}")
    return _finish(np.asarray(out, dtype=float), scalar)


def cost_weighted(z, y, c: float, _scalar=None):
    """Thresholded cost-weighted misclassification error.

    ``y (1 - c) 1{z <= c} + (1 - y) c 1{z > c}`` for ``z`` in [0, 1] and
    binary ``y``.  Twice the value at ``c = 1/2`` is the zero-one loss of the
    Bayes classification.
    """
    if _scalar is None:
        z, y, scalar = _prepare(z, y)
    else:
        scalar = _scalar
    _binary(y, "cost_weighted", z, scalar)
    _require((z >= 0) & (z <= 1), "cost_weighted", z, y, "prediction must lie in [0, 1]", scalar)
    out = y * (1.0 - c) * (z <= c) + (1.0 - y) * c * (z > c)
    return out if _scalar is not None else _finish(out, scalar)


def score_elementary(theta, z, y):
    """Elementary score for the mean:
    ``0.5 |theta - y| 1{min(z, y) <= theta < max(z, y)}``."""
    z, y, scalar = _prepare(z, y)
    theta = np.asarray(theta, dtype=float)
    inside = (np.minimum(z, y) <= theta) & (theta < np.maximum(z, y))
    out = 0.5 * np.abs(theta - y) * inside
    return _finish(np.asarray(out, dtype=float), scalar and theta.ndim == 0)


def score_interval(lower, upper, y, alpha: float):
    """Interval score of a central ``(1 - alpha)`` prediction interval."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = lower.ndim == 0 and upper.ndim == 0 and y.ndim == 0
    lower, upper, y = np.broadcast_arrays(np.atleast_1d(lower), np.atleast_1d(upper), np.atleast_1d(y))
    bad = np.flatnonzero(lower > upper)
    if bad.size:
        i = int(bad[0])
        raise InvalidInterval(f"lower bound {lower[i]!r} exceeds upper bound {upper[i]!r}" + ("" if scalar else f" in row {i}"))
    out = 0.5 * alpha * (upper - lower) + (lower - y) * (y < lower) + (y - upper) * (y > upper)
    return _finish(out, scalar)


def score_mean_variance(mu, sigma, y):
    """Score for the (mean, standard deviation) pair built from the squared
    error and the Poisson deviance; zero at ``(y, 0, y)``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = mu.ndim == 0 and sigma.ndim == 0 and y.ndim == 0
    mu, sigma, y = np.broadcast_arrays(np.atleast_1d(mu), np.atleast_1d(sigma), np.atleast_1d(y))
    _require(sigma >= 0, "mean_variance", mu, y, "sigma must be >= 0", scalar)
    second = mu**2 + sigma**2
    _require(second > 0, "mean_variance", mu, y, "mu**2 + sigma**2 must be > 0", scalar)
    y2 = y**2
    out = (mu - y) ** 2 + xlogy(y2, y2 / second) + second - y2
    return _finish(out, scalar)


def _spot_points(domain: Tuple[float, float], n: int = 64) -> np.ndarray:
    lo, hi = domain
    lo = max(lo, -10.0) if math.isinf(lo) else lo
    hi = min(hi, 10.0) if math.isinf(hi) else hi
    if hi <= lo:
        hi = lo + 10.0
    width = hi - lo
    return np.linspace(lo + 1e-3 * width, hi - 1e-3 * width, n)


def _in_domain(domain, closed, v):
    lo, hi = domain
    lo_ok = (v >= lo) if closed[0] else (v > lo)
    hi_ok = (v <= hi) if closed[1] else (v < hi)
    return lo_ok & hi_ok


@dataclass(frozen=True)
class BregmanGenerator:
    """Strictly convex ``phi`` with a subgradient selection ``phi_prime``.

    Convexity (midpoint test) and monotonicity of ``phi_prime`` are
    spot-checked on a grid inside ``domain`` at construction.
    """

    phi: Callable[[np.ndarray], np.ndarray]
    phi_prime: Callable[[np.ndarray], np.ndarray]
    domain: Tuple[float, float] = (-math.inf, math.inf)
    closed: Tuple[bool, bool] = (False, False)
    name: str = "bregman"

    def __post_init__(self):
        x = _spot_points(self.domain)
        fx = np.asarray(self.phi(x), dtype=float)
        mid = np.asarray(self.phi(0.5 * (x[:-1] + x[1:])), dtype=float)
        if np.any(mid > 0.5 * (fx[:-1] + fx[1:]) + 1e-12 * (1 + np.abs(fx[1:]))):
            raise ValidationError(f"{self.name}: phi fails the midpoint convexity check")
        d = np.asarray(self.phi_prime(x), dtype=float)
        if np.any(np.diff(d) < -1e-12 * (1 + np.abs(d[1:]))):
            raise ValidationError(f"{self.name}: phi_prime is not nondecreasing")

    @classmethod
    def squared(cls) -> "BregmanGenerator":
        return cls(lambda x: x**2, lambda x: 2.0 * x, name="squared")

    @classmethod
    def homogeneous(cls, a: float) -> "BregmanGenerator":
        if not a > 1:
            raise ValidationError("homogeneous generator needs a > 1")
        return cls(
            lambda x: np.abs(x) ** a,
            lambda x: a * np.sign(x) * np.abs(x) ** (a - 1.0),
            name=f"homogeneous:{a:g}",
        )


def bregman_score(gen: BregmanGenerator, z, y):
    """``phi(y) - phi(z) + phi'(z) (z - y)``; nonnegative by convexity."""
    z, y, scalar = _prepare(z, y)
    _require(_in_domain(gen.domain, gen.closed, z) & _in_domain(gen.domain, gen.closed, y), gen.name, z, y, f"arguments must lie in {gen.domain}", scalar)
    out = gen.phi(y) - gen.phi(z) + gen.phi_prime(z) * (z - y)
    return _finish(np.asarray(out, dtype=float), scalar)


@dataclass(frozen=True)
class GplGenerator:
    """Strictly increasing ``g`` and level ``alpha`` of a generalised
    piecewise linear score."""

    g: Callable[[np.ndarray], np.ndarray]
    alpha: float
    domain: Tuple[float, float] = (-math.inf, math.inf)
    closed: Tuple[bool, bool] = (False, False)
    name: str = "gpl"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        gx = np.asarray(self.g(_spot_points(self.domain)), dtype=float)
        if np.any(np.diff(gx) <= 0):
            raise ValidationError(f"{self.name}: g is not strictly increasing")


def gpl_score(gen: GplGenerator, z, y):
    """``(1{y <= z} - alpha)(g(z) - g(y))``; the pinball loss for g = id."""
    z, y, scalar = _prepare(z, y)
    _require(_in_domain(gen.domain, gen.closed, z) & _in_domain(gen.domain, gen.closed, y), gen.name, z, y, f"arguments must lie in {gen.domain}", scalar)
    out = ((y <= z) - gen.alpha) * (gen.g(z) - gen.g(y))
    return _finish(np.asarray(out, dtype=float), scalar)


def patton_score(b: float, z, y):
    """Homogeneous Bregman score S_b on the positive half line.

    Written out case by case, independently of :func:`tweedie_deviance`;
    ``y = 0`` is admitted for ``b > 0``.
    """
    z, y, scalar = _prepare(z, y)
    _require(z > 0, "patton", z, y, "prediction must be > 0", scalar)
    _require((y > 0) | ((y == 0) & (b > 0)), "patton", z, y, "observation must be > 0 (or 0 for b > 0)", scalar)
    if b == 1.0:
        out = xlogy(y, y / z) - y + z
    elif b == 0.0:
        out = y / z - np.log(y / z) - 1.0
    elif abs(b - 1.0) < 0.5 or abs(b) < 0.5:
        # the textbook form loses digits like |b (b - 1)| near these powers
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(y / z)
            if abs(b - 1.0) < 0.5:
                core = y * np.expm1((b - 1.0) * lr) / (b - 1.0) - (y - z)
                out = z ** (b - 1.0) * core / b
            else:
                core = z**b * np.expm1(b * lr) / b - z ** (b - 1.0) * (y - z)
                out = core / (b - 1.0)
        out = np.where(y == 0, z**b / b, out)
    else:
        out = (y**b - z**b) / (b * (b - 1.0)) - z ** (b - 1.0) * (y - z) / (b - 1.0)
    return _finish(np.asarray(out, dtype=float), scalar)


def tweedie_bregman_check(p: float, z, y):
    """Return ``(d_p(y, z), 2 S_{2-p}(z, y))``, which agree on the common
    domain."""
    if 0.0 < p < 1.0:
        raise DomainViolation("tweedie", z, y, f"power p={p:g} in (0, 1) where no Tweedie distribution exists")
    return tweedie_deviance(z, y, p), 2.0 * patton_score(2.0 - p, z, y)
