"""Identification functions, generalized residuals and calibration tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .core import EvaluationSample, Kind, TargetFunctional, weighted_lower_quantile
from .errors import (
    DegenerateVariance,
    EmptySubsample,
    NonNumericFeature,
    SingularCovariance,
    UnknownModel,
    ValidationError,
)


def identification_value(f: TargetFunctional, z, y):
    """Canonical strict identification function V(z, y).

    mean: ``z - y``; quantile: ``1{z >= y} - alpha``; expectile:
    ``2 |1{z >= y} - alpha| (z - y)``; median: quantile at 1/2.  For the
    beta-median the median identification is reweighted by ``y**beta``.
    """
    z_arr = np.asarray(z, dtype=float)
    y_arr = np.asarray(y, dtype=float)
    if f.kind is Kind.MEAN:
        out = z_arr - y_arr
    elif f.kind in (Kind.QUANTILE, Kind.MEDIAN):
        out = (z_arr >= y_arr) - f.alpha
    elif f.kind is Kind.EXPECTILE:
        out = 2.0 * np.abs((z_arr >= y_arr) - f.alpha) * (z_arr - y_arr)
    else:
        if np.any(y_arr <= 0):
            raise ValidationError("beta-median identification needs y > 0")
        out = y_arr**f.beta * ((z_arr >= y_arr) - 0.5)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def generalized_residuals(f: TargetFunctional, sample: EvaluationSample, model: str) -> np.ndarray:
    """``V(m(x_i), y_i)`` for every row."""
    return identification_value(f, sample.prediction(model), sample.y)


class TestFunction:
    """A map from sample rows to real test-function values phi(x_i)."""

    __test__ = False  # keep pytest from collecting this class

    def evaluate(self, sample: EvaluationSample, model: str) -> np.ndarray:
        raise NotImplementedError

    @property
    def label(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class Constant(TestFunction):
    def evaluate(self, sample, model):
        return np.ones(sample.n)

    @property
    def label(self):
        return "constant"


@dataclass(frozen=True)
class FeatureProjection(TestFunction):
    name: str

    def evaluate(self, sample, model):
        if not sample.is_numeric_feature(self.name):
            raise NonNumericFeature(f"feature {self.name!r} is categorical; use CategoryIndicator")
        return np.asarray(sample.feature(self.name), dtype=float)

    @property
    def label(self):
        return f"col:{self.name}"


@dataclass(frozen=True)
class CategoryIndicator(TestFunction):
    name: str
    level: str

    def evaluate(self, sample, model):
        col = sample.feature(self.name)
        if col.dtype.kind == "f":
            return (col == float(self.level)).astype(float)
        return (col == str(self.level)).astype(float)

    @property
    def label(self):
        return f"cat:{self.name}={self.level}"


@dataclass(frozen=True)
class BinIndicator(TestFunction):
    """``1{lower < x <= upper}``, or ``lower <= x`` when ``include_lower``.

    ``lower == upper`` is only allowed for a closed bin, which holds a
    single value (a constant feature)."""

    name: str
    lower: float
    upper: float
    include_lower: bool = False

    def __post_init__(self):
        if not (self.lower < self.upper or (self.lower == self.upper and self.include_lower)):
            raise ValidationError(f"bin for {self.name!r} needs lower < upper")

    def evaluate(self, sample, model):
        if not sample.is_numeric_feature(self.name):
            raise NonNumericFeature(f"cannot bin categorical feature {self.name!r}")
        x = sample.feature(self.name)
        low_ok = x >= self.lower if self.include_lower else x > self.lower
        return (low_ok & (x <= self.upper)).astype(float)

    @property
    def label(self):
        left = "[" if self.include_lower else "("
        return f"bin:{self.name}{left}{self.lower:.6g},{self.upper:.6g}]"


@dataclass(frozen=True)
class ModelPrediction(TestFunction):
    """phi(x) = m(x); assesses auto-calibration."""

    def evaluate(self, sample, model):
        return np.asarray(sample.prediction(model), dtype=float)

    @property
    def label(self):
        return "model"


@dataclass(frozen=True)
class Product(TestFunction):
    factors: tuple

    def __post_init__(self):
        if not self.factors:
            raise ValidationError("product of no test functions")

    def evaluate(self, sample, model):
        out = np.ones(sample.n)
        for f in self.factors:
            out = out * f.evaluate(sample, model)
        return out

    @property
    def label(self):
        return "*".join(f.label for f in self.factors)


@dataclass(frozen=True)
class Custom(TestFunction):
    """Arbitrary ``func(sample, model) -> array`` under a display name."""

    func: Callable[[EvaluationSample, str], np.ndarray]
    name: str = "custom"

    def evaluate(self, sample, model):
        out = np.asarray(self.func(sample, model), dtype=float)
        if out.shape != (sample.n,):
            raise ValidationError(f"custom test function {self.name!r} returned shape {out.shape}")
        return out

    @property
    def label(self):
        return self.name


def parse_test_function(text: str) -> TestFunction:
    """Parse ``constant``, ``model``, ``col:NAME``, ``cat:NAME=LABEL``,
    ``bin:NAME:LOWER:UPPER`` or ``product:A*B*...``."""
    text = text.strip()
    if text == "constant":
        return Constant()
    if text == "model":
        return ModelPrediction()
    kind, _, rest = text.partition(":")
    if kind == "col" and rest:
        return FeatureProjection(rest)
    if kind == "cat" and "=" in rest:
        name, _, level = rest.partition("=")
        return CategoryIndicator(name, level)
    if kind == "bin":
        name, lo, hi = rest.rsplit(":", 2)
        return BinIndicator(name, float(lo), float(hi))
    if kind == "product" and rest:
        return Product(tuple(parse_test_function(part) for part in rest.split("*")))
    raise ValidationError(f"cannot parse test function {text!r}")


@dataclass(frozen=True)
class CalibrationRow:
    test_function: str
    v_bar: float
    std_error: Optional[float]
    t_stat: Optional[float]
    p_value: Optional[float]
    n_effective: int


def t_test(values: np.ndarray, alternative: str = "two-sided"):
    """One-sample t-test of ``mean(values) = 0``.

    Returns ``(mean, std_error, t, p)``.  All-zero values give ``t = 0``
    and ``p = 1``; identical nonzero values raise
    :class:`DegenerateVariance`.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(np.mean(values))
    if n < 2:
        raise DegenerateVariance("a t-test needs at least two rows")
    if np.all(values == values[0]):
        if values[0] == 0.0:
            return 0.0, 0.0, 0.0, 1.0
        raise DegenerateVariance("all values identical and nonzero; variance is zero")
    # t is scale free; rescaling keeps squared deviations from under/overflowing
    scale = float(np.max(np.abs(values)))
    scaled = values / scale
    t = float(np.mean(scaled)) / (float(np.std(scaled, ddof=1)) / math.sqrt(n))
    se = scale * float(np.std(scaled, ddof=1)) / math.sqrt(n)
    if alternative == "two-sided":
        p = 2.0 * stats.t.sf(abs(t), df=n - 1)
    elif alternative == "greater":
        p = stats.t.sf(t, df=n - 1)
    elif alternative == "less":
        p = stats.t.cdf(t, df=n - 1)
    else:
        raise ValidationError(f"unknown alternative {alternative!r}")
    return mean, se, float(t), float(min(1.0, p))


def v_bar(f: TargetFunctional, sample: EvaluationSample, model: str, phi: TestFunction) -> CalibrationRow:
    """Mean of ``phi(x_i) V(m(x_i), y_i)`` with a two-sided t-test.

    The average runs over all ``n`` rows, so an indicator test function
    yields the restricted sum divided by ``n``.  For ``n = 1`` only
    ``v_bar`` is reported.
    """
    phi_values = phi.evaluate(sample, model)
    values = phi_values * generalized_residuals(f, sample, model)
    n_eff = int(np.count_nonzero(phi_values))
    if sample.n < 2:
        return CalibrationRow(phi.label, float(np.mean(values)), None, None, None, n_eff)
    mean, se, t, p = t_test(values)
    return CalibrationRow(phi.label, mean, se, t, p, n_eff)


def subsample_bias(f: TargetFunctional, sample: EvaluationSample, model: str, selector: TestFunction) -> float:
    """Mean generalized residual over the rows where ``selector`` is 1."""
    sel = selector.evaluate(sample, model)
    if not np.all((sel == 0) | (sel == 1)):
        raise ValidationError(f"selector {selector.label} is not a 0/1 indicator")
    mask = sel == 1
    if not mask.any():
        raise EmptySubsample(f"selector {selector.label} selects no rows")
    return float(np.mean(generalized_residuals(f, sample, model)[mask]))


def default_test_functions(sample: EvaluationSample, drop_first_level: bool = False) -> list[TestFunction]:
    """Constant, every numeric feature, every level of every categorical
    feature, and the model prediction.

    The level indicators of a feature sum to the constant, so a joint test
    over all of them is singular; ``drop_first_level`` omits the first
    (sorted) level of each categorical feature.
    """
    phis: list[TestFunction] = [Constant()]
    for name in sample.features:
        if sample.is_numeric_feature(name):
            phis.append(FeatureProjection(name))
    for name, col in sample.features.items():
        if not sample.is_numeric_feature(name):
            levels = sorted(set(col))[1 if drop_first_level else 0 :]
            phis.extend(CategoryIndicator(name, level) for level in levels)
    phis.append(ModelPrediction())
    return phis


def calibration_report(
    f: TargetFunctional,
    sample: EvaluationSample,
    model: str,
    phis: Optional[Sequence[TestFunction]] = None,
    include_defaults: bool = True,
) -> list[CalibrationRow]:
    """One :class:`CalibrationRow` per test function.

    With ``include_defaults`` the rows of :func:`default_test_functions`
    come first, followed by ``phis``.
    """
    chosen = list(default_test_functions(sample)) if include_defaults else []
    chosen += list(phis or [])
    if not chosen:
        raise ValidationError("no test functions given")
    sample.prediction(model)
    return [v_bar(f, sample, model, phi) for phi in chosen]


def wald_joint_test(f: TargetFunctional, sample: EvaluationSample, model: str, phis: Sequence[TestFunction]):
    """Joint Wald test that all ``E[phi_j V] = 0``.

    ``W = n vbar' S^{-1} vbar`` with the sample covariance ``S`` of the
    per-row vectors; the p-value is from chi-square with ``k`` degrees of
    freedom.  Returns ``(W, p)``.
    """
    k = len(phis)
    if k == 0:
        raise ValidationError("no test functions given")
    resid = generalized_residuals(f, sample, model)
    g = np.column_stack([phi.evaluate(sample, model) * resid for phi in phis])
    n = sample.n
    if not np.any(g):
        return 0.0, 1.0
    if n <= k:
        raise SingularCovariance(f"need more rows ({n}) than test functions ({k})")
    mean = g.mean(axis=0)
    cov = np.atleast_2d(np.cov(g, rowvar=False, ddof=1))
    if np.linalg.matrix_rank(cov) < k:
        raise SingularCovariance("covariance of phi*V is singular (duplicate or collinear test functions?)")
    w = float(n * mean @ np.linalg.solve(cov, mean))
    return w, float(stats.chi2.sf(w, df=k))


def quantile_bins(sample: EvaluationSample, feature: str, k: int) -> list[BinIndicator]:
    """Bins of ``feature`` delimited by its lower empirical quantiles at
    ``j/k``; coinciding edges are merged, so fewer than ``k`` bins may
    result.  The lowest bin includes its lower edge."""
    if k < 2:
        raise ValidationError("need k >= 2 bins")
    if not sample.is_numeric_feature(feature):
        raise NonNumericFeature(f"cannot bin categorical feature {feature!r}")
    x = sample.feature(feature)
    edges = [float(x.min())]
    edges += [weighted_lower_quantile(x, j / k) for j in range(1, k)]
    edges.append(float(x.max()))
    edges = sorted(set(edges))
    if len(edges) == 1:
        return [BinIndicator(feature, edges[0], edges[0], include_lower=True)]
    return [
        BinIndicator(feature, lo, hi, include_lower=(i == 0))
        for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:]))
    ]
