"""Synthetic Gamma data, a small IRLS GLM fitter and the test-set-size
efficiency study for Tweedie scores."""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import scoring
from .core import EvaluationSample, Family, ScoreSpec
from .errors import DomainViolation, NoConvergence, SingularDesign, ValidationError

MAX_ITER = 100
GRADIENT_TOL = 1e-10
_LOG_LOSS = ScoreSpec(Family.LOG_LOSS)


@dataclass(frozen=True)
class GammaSimConfig:
    """Settings of the synthetic data generator.

    ``y | x ~ Gamma(shape=1/dispersion, scale=mu*dispersion)`` with
    ``log mu = intercept + effect * 1{color=blue} + slope * length``.
    """

    n_samples: int = 1000
    seed: int = 0
    dispersion: float = 2.0
    category_probs: tuple = (0.2, 0.8)
    categories: tuple = ("red", "blue")
    length_range: tuple = (-2.0, 2.0)
    coefficients: tuple = (0.5, -0.5, 0.3)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if not self.dispersion > 0:
            raise ValidationError("dispersion must be > 0")
        if len(self.category_probs) != len(self.categories) or len(self.categories) != 2:
            raise ValidationError("need exactly two categories with one probability each")
        if any(p < 0 for p in self.category_probs) or not math.isclose(sum(self.category_probs), 1.0):
            raise ValidationError("category probabilities must be nonnegative and sum to 1")
        lo, hi = self.length_range
        if not lo < hi:
            raise ValidationError("length_range needs lower < upper")
        if len(self.coefficients) != 3:
            raise ValidationError("coefficients are (intercept, category effect, slope)")

    def true_mean(self, color: np.ndarray, length: np.ndarray) -> np.ndarray:
        b0, b1, b2 = self.coefficients
        return np.exp(b0 + b1 * (color == self.categories[1]) + b2 * length)


def _draw(cfg: GammaSimConfig, n: int, rng: np.random.Generator) -> EvaluationSample:
    color = rng.choice(np.asarray(cfg.categories, dtype=object), size=n, p=cfg.category_probs)
    length = rng.uniform(*cfg.length_range, size=n)
    mu = cfg.true_mean(color, length)
    y = rng.gamma(shape=1.0 / cfg.dispersion, scale=mu * cfg.dispersion)
    return EvaluationSample(y=y, predictions={"true_mean": mu}, features={"color": color, "length": length})


def generate_gamma_data(cfg: GammaSimConfig) -> EvaluationSample:
    """Draw ``cfg.n_samples`` rows with features ``color`` and ``length``.

    The true conditional mean is attached as prediction ``true_mean``.
    Uses numpy's PCG64 generator seeded with ``cfg.seed``.
    """
    return _draw(cfg, cfg.n_samples, np.random.default_rng(cfg.seed))


class GlmFamily(enum.Enum):
    POISSON = "poisson"
    GAMMA = "gamma"
    BINOMIAL = "binomial"


class Link(enum.Enum):
    LOG = "log"
    LOGIT = "logit"


_ADMISSIBLE = {(GlmFamily.POISSON, Link.LOG), (GlmFamily.GAMMA, Link.LOG), (GlmFamily.BINOMIAL, Link.LOGIT)}


@dataclass(frozen=True)
class DesignSpec:
    """How features map to design columns: intercept, numeric columns as
    is, and treatment dummies for categorical levels after the first."""

    numeric: tuple
    categorical: tuple  # (name, levels) pairs

    @classmethod
    def from_sample(cls, sample: EvaluationSample, features: Sequence[str]) -> "DesignSpec":
        numeric, categorical = [], []
        for name in features:
            if sample.is_numeric_feature(name):
                numeric.append(name)
            else:
                categorical.append((name, tuple(sorted(set(sample.feature(name))))))
        return cls(tuple(numeric), tuple(categorical))

    @property
    def column_names(self) -> list[str]:
        names = ["intercept"] + list(self.numeric)
        for name, levels in self.categorical:
            names += [f"{name}={lvl}" for lvl in levels[1:]]
        return names

    def matrix(self, sample: EvaluationSample) -> np.ndarray:
        cols = [np.ones(sample.n)]
        cols += [sample.feature(name) for name in self.numeric]
        for name, levels in self.categorical:
            x = sample.feature(name)
            unknown = set(x) - set(levels)
            if unknown:
                raise ValidationError(f"feature {name!r} has levels unseen in training: {sorted(unknown)}")
            cols += [(x == lvl).astype(float) for lvl in levels[1:]]
        return np.column_stack(cols)


def _inverse_link(link: Link, eta):
    if link is Link.LOG:
        return np.exp(eta)
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _variance(family: GlmFamily, mu):
    if family is GlmFamily.POISSON:
        return mu
    if family is GlmFamily.GAMMA:
        return mu**2
    return mu * (1.0 - mu)


def _dmu_deta(link: Link, mu):
    return mu if link is Link.LOG else mu * (1.0 - mu)


def _deviance(family: GlmFamily, mu, y, w) -> float:
    if family is GlmFamily.BINOMIAL:
        dev = scoring.score(_LOG_LOSS, mu, y)
    else:
        dev = scoring.tweedie_deviance(mu, y, 1.0 if family is GlmFamily.POISSON else 2.0)
    return float(np.sum(w * dev))


@dataclass(frozen=True)
class GlmFit:
    family: GlmFamily
    link: Link
    coefficients: np.ndarray
    design: DesignSpec
    iterations: int
    gradient_norm: float

    @property
    def names(self) -> list[str]:
        return self.design.column_names

    def predict(self, sample: EvaluationSample) -> np.ndarray:
        return _inverse_link(self.link, self.design.matrix(sample) @ self.coefficients)


def _check_response(family: GlmFamily, y: np.ndarray) -> None:
    if family is GlmFamily.POISSON and np.any(y < 0):
        raise ValidationError("Poisson response must be >= 0")
    if family is GlmFamily.GAMMA and np.any(y <= 0):
        raise ValidationError("Gamma response must be > 0")
    if family is GlmFamily.BINOMIAL and np.any((y < 0) | (y > 1)):
        raise ValidationError("binomial response must lie in [0, 1]")


def fit_glm_irls(
    family,
    link,
    sample: EvaluationSample,
    response: str = "y",
    features: Sequence[str] = (),
    max_iter: int = MAX_ITER,
    tol: float = GRADIENT_TOL,
) -> GlmFit:
    """Fit a GLM by iteratively reweighted least squares.

    Iterates until the weight-normalized score vector
    ``X' w (y - mu) mu' / V(mu) / sum(w)`` has max-norm below ``tol``.
    With a canonical link (Poisson/log, binomial/logit) this makes the
    mean residual vanish overall and on every categorical level.

    Raises
    ------
    SingularDesign
        If the design matrix is rank deficient.
    NoConvergence
        If ``max_iter`` iterations do not reach ``tol``.
    """
    family, link = GlmFamily(family), Link(link)
    if (family, link) not in _ADMISSIBLE:
        raise ValidationError(f"unsupported family/link pair {family.value}/{link.value}")
    y = np.asarray(sample.column(response), dtype=float)
    _check_response(family, y)
    w = np.ones(sample.n) if sample.weights is None else sample.weights
    design = DesignSpec.from_sample(sample, features)
    X = design.matrix(sample)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesign(f"design matrix with columns {design.column_names} is rank deficient")

    total = float(np.sum(w))
    ybar = float(np.sum(w * y) / total)
    mu = 0.5 * (y + ybar)
    eta = np.log(mu) if link is Link.LOG else np.log(mu / (1.0 - mu))
    beta = np.zeros(X.shape[1])
    dev = math.inf
    grad_norm = math.inf
    for it in range(1, max_iter + 1):
        d = _dmu_deta(link, mu)
        var = _variance(family, mu)
        working_w = w * d**2 / var
        z = eta + (y - mu) / d
        sw = np.sqrt(working_w)
        new_beta, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
        # step halving guards the non-canonical Gamma/log fit
        step = new_beta - beta
        for _ in range(30):
            cand = beta + step
            eta_c = np.clip(X @ cand, -700.0, 700.0)
            mu_c = _inverse_link(link, eta_c)
            ok = np.all(mu_c > 0) and (link is Link.LOG or np.all(mu_c < 1))
            if ok:
                dev_c = _deviance(family, mu_c, y, w)
                if dev_c <= dev * (1 + 1e-12):
                    break
            step *= 0.5
        else:
            raise NoConvergence("IRLS step halving failed to decrease the deviance")
        beta, eta, mu, dev = cand, eta_c, mu_c, dev_c
        grad = X.T @ (w * (y - mu) * _dmu_deta(link, mu) / _variance(family, mu)) / total
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < tol:
            return GlmFit(family, link, beta, design, it, grad_norm)
    raise NoConvergence(f"IRLS did not converge in {max_iter} iterations (gradient norm {grad_norm:.3g})")


@dataclass(frozen=True)
class EfficiencyResult:
    """Coefficient of variation of the mean score difference by test size.

    ``cv`` is NaN where it is undefined (mean difference zero or fewer
    than two replications); ``undefined`` flags those entries.
    """

    power: float
    n_grid: np.ndarray
    cv: np.ndarray
    sqrt_n_cv: np.ndarray
    replications: int
    undefined: np.ndarray = field(default=None)

    @property
    def score(self) -> str:
        return f"tweedie:{self.power:g}"

    def log_log_slope(self) -> float:
        """Least-squares slope of ``log cv`` on ``log n``."""
        ok = ~self.undefined & (self.cv > 0)
        if ok.sum() < 2:
            return math.nan
        return float(np.polyfit(np.log(self.n_grid[ok]), np.log(self.cv[ok]), 1)[0])


DEFAULT_N_GRID = (1_000, 3_000, 10_000, 30_000, 100_000)
DEFAULT_POWERS = (0.0, 1.0, 2.0, 3.0)


def _thread_cap() -> int:
    raw = os.environ.get("SCOREKIT_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = os.cpu_count() or 1
    return max(1, cap)


def _replication(cfg, train_size, n_max, n_idx, powers, seed_seq, fixed_models):
    rng = np.random.default_rng(seed_seq)
    if fixed_models is None:
        train = _draw(cfg, train_size, rng)
        trivial = float(np.mean(train.y))
        glm = fit_glm_irls(GlmFamily.GAMMA, Link.LOG, train, features=("color", "length"))
    else:
        trivial, glm = fixed_models
    test = _draw(cfg, n_max, rng)
    m_a = np.full(n_max, trivial)
    m_b = glm.predict(test)
    out = np.empty((len(powers), len(n_idx)))
    for k, p in enumerate(powers):
        d = scoring.tweedie_deviance(m_a, test.y, p) - scoring.tweedie_deviance(m_b, test.y, p)
        out[k] = np.cumsum(d)[n_idx] / (n_idx + 1)
    return out


def efficiency_study(
    cfg: GammaSimConfig = GammaSimConfig(),
    train_size: int = 1000,
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    replications: int = 50,
    powers: Sequence[float] = DEFAULT_POWERS,
    refit: bool = False,
    threads: Optional[int] = None,
) -> list[EfficiencyResult]:
    """Speed of convergence of mean Tweedie score differences.

    Model A is the trivial mean and model B a Gamma GLM with log link, both
    fitted on ``train_size`` rows.  Each replication draws a test set of
    ``max(n_grid)`` rows and evaluates ``Zbar_n`` on its nested prefixes.
    By default the models are fitted once from ``cfg.seed``; with
    ``refit`` every replication draws its own training set.

    Replication ``r`` uses child ``r`` of ``SeedSequence(cfg.seed)`` (the
    fixed training set uses a separate extra child), so results do not
    depend on thread scheduling.  ``SCOREKIT_THREADS`` caps the worker
    count.
    """
    grid = np.asarray(n_grid, dtype=int)
    if grid.size == 0 or np.any(grid < 1) or np.any(np.diff(grid) <= 0):
        raise ValidationError("n_grid must be a nonempty increasing sequence of positive sizes")
    if replications < 1:
        raise ValidationError("need at least one replication")
    if train_size < 2:
        raise ValidationError("train_size must be >= 2")
    powers = [float(p) for p in powers]
    for p in powers:
        if 0.0 < p < 1.0:
            raise DomainViolation("tweedie_power", bound=f"p={p:g} lies in the excluded interval (0, 1)")

    children = np.random.SeedSequence(cfg.seed).spawn(replications + 1)
    fixed = None
    if not refit:
        train = _draw(cfg, train_size, np.random.default_rng(children[-1]))
        fixed = (float(np.mean(train.y)), fit_glm_irls(GlmFamily.GAMMA, Link.LOG, train, features=("color", "length")))
    n_max = int(grid[-1])
    n_idx = grid - 1
    workers = min(threads or _thread_cap(), _thread_cap(), replications)

    def job(r):
        return _replication(cfg, train_size, n_max, n_idx, powers, children[r], fixed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            zbar = np.stack(list(pool.map(job, range(replications))))
    else:
        zbar = np.stack([job(r) for r in range(replications)])

    results = []
    for k, p in enumerate(powers):
        z = zbar[:, k, :]
        if replications < 2:
            cv = np.full(grid.size, np.nan)
        else:
            mean = z.mean(axis=0)
            sd = z.std(axis=0, ddof=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                cv = np.where(mean != 0, sd / np.abs(mean), np.nan)
        undefined = ~np.isfinite(cv)
        results.append(EfficiencyResult(p, grid, cv, np.sqrt(grid) * cv, replications, undefined))
    return results


def efficiency_csv(results: Sequence[EfficiencyResult], digits: Optional[int] = None) -> str:
    """Long CSV with columns ``score, n, cv, sqrt_n_cv, replications``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["score", "n", "cv", "sqrt_n_cv", "replications"])

    def fmt(v):
        if not math.isfinite(v):
            return "nan"
        return repr(float(v)) if digits is None else f"{v:.{digits}g}"

    for res in results:
        for n, cv, scv in zip(res.n_grid, res.cv, res.sqrt_n_cv):
            writer.writerow([res.score, int(n), fmt(cv), fmt(scv), res.replications])
    return buf.getvalue()
