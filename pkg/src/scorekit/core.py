"""Domain types shared across scorekit: target functionals, score
specifications and evaluation samples."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    EmptySample,
    LengthMismatch,
    NonFiniteValue,
    NonPositiveWeight,
    UnknownModel,
    ValidationError,
)

EXPECTILE_TOL = 1e-12


class Kind(enum.Enum):
    MEAN = "mean"
    QUANTILE = "quantile"
    EXPECTILE = "expectile"
    MEDIAN = "median"
    BETA_MEDIAN = "beta_median"


@dataclass(frozen=True)
class TargetFunctional:
    """The property of ``F(Y|X)`` a model predicts.

    Use the constructors :meth:`mean`, :meth:`quantile`, :meth:`expectile`,
    :meth:`median` and :meth:`beta_median` rather than the raw fields.
    """

    kind: Kind
    level: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.kind in (Kind.QUANTILE, Kind.EXPECTILE):
            if self.level is None or not 0.0 < self.level < 1.0:
                raise ValidationError(f"{self.kind.value} needs a level in (0, 1), got {self.level!r}")
        elif self.level is not None:
            raise ValidationError(f"{self.kind.value} takes no level")
        if self.kind is Kind.BETA_MEDIAN:
            if self.beta is None or not math.isfinite(self.beta):
                raise ValidationError("beta_median needs a finite beta")
        elif self.beta is not None:
            raise ValidationError(f"{self.kind.value} takes no beta")

    @classmethod
    def mean(cls) -> "TargetFunctional":
        return cls(Kind.MEAN)

    @classmethod
    def quantile(cls, level: float) -> "TargetFunctional":
        return cls(Kind.QUANTILE, level=float(level))

    @classmethod
    def expectile(cls, level: float) -> "TargetFunctional":
        return cls(Kind.EXPECTILE, level=float(level))

    @classmethod
    def median(cls) -> "TargetFunctional":
        return cls(Kind.MEDIAN)

    @classmethod
    def beta_median(cls, beta: float) -> "TargetFunctional":
        return cls(Kind.BETA_MEDIAN, beta=float(beta))

    @classmethod
    def parse(cls, text: str) -> "TargetFunctional":
        """Parse ``mean``, ``median``, ``quantile:A``, ``expectile:A`` or
        ``beta_median:B``."""
        name, _, arg = text.strip().lower().partition(":")
        try:
            if name == "mean" and not arg:
                return cls.mean()
            if name == "median" and not arg:
                return cls.median()
            if name == "quantile":
                return cls.quantile(float(arg))
            if name == "expectile":
                return cls.expectile(float(arg))
            if name in ("beta_median", "beta-median"):
                return cls.beta_median(float(arg))
        except ValueError as exc:
            raise ValidationError(f"bad functional {text!r}: {exc}") from None
        raise ValidationError(f"unknown functional {text!r}")

    @property
    def alpha(self) -> float:
        """Quantile/expectile level; 0.5 for the median and the mean."""
        if self.level is not None:
            return self.level
        return 0.5

    def is_quantile_like(self) -> bool:
        return self.kind in (Kind.QUANTILE, Kind.MEDIAN)

    def __str__(self) -> str:
        if self.kind in (Kind.QUANTILE, Kind.EXPECTILE):
            return f"{self.kind.value}:{self.level:g}"
        if self.kind is Kind.BETA_MEDIAN:
            return f"beta_median:{self.beta:g}"
        return self.kind.value


def _as_float_array(values, what: str) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what}: {exc}") from None
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValidationError(f"{what} must be one-dimensional")
    return arr


def _as_feature_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind in "biuf":
        return arr.astype(float)
    return np.asarray([str(v) for v in arr], dtype=object)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class EvaluationSample:
    """Aligned observations, model predictions, weights and features.

    Arrays are copied and made read-only on construction, and the sample is
    validated with :func:`validate_sample`.  Numeric features are stored as
    float arrays, everything else as object arrays of strings.
    """

    y: np.ndarray
    predictions: Mapping[str, np.ndarray] = field(default_factory=dict)
    weights: Optional[np.ndarray] = None
    features: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "y", _freeze(_as_float_array(self.y, "y")))
        set_(
            self,
            "predictions",
            {str(k): _freeze(_as_float_array(v, f"prediction {k!r}")) for k, v in self.predictions.items()},
        )
        if self.weights is not None:
            set_(self, "weights", _freeze(_as_float_array(self.weights, "weights")))
        set_(self, "features", {str(k): _freeze(_as_feature_array(v)) for k, v in self.features.items()})
        validate_sample(self)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def models(self) -> list[str]:
        return list(self.predictions)

    def prediction(self, model: str) -> np.ndarray:
        try:
            return self.predictions[model]
        except KeyError:
            raise UnknownModel(f"unknown model {model!r}; available: {sorted(self.predictions)}") from None

    def feature(self, name: str) -> np.ndarray:
        try:
            return self.features[name]
        except KeyError:
            raise UnknownModel(f"unknown feature {name!r}; available: {sorted(self.features)}") from None

    def is_numeric_feature(self, name: str) -> bool:
        return self.feature(name).dtype.kind == "f"

    def column(self, name: str) -> np.ndarray:
        """Look up ``y``, a feature, or a prediction column by name."""
        if name == "y":
            return self.y
        if name in self.features:
            return self.features[name]
        if name in self.predictions:
            return self.predictions[name]
        raise UnknownModel(f"unknown column {name!r}")

    def subset(self, rows) -> "EvaluationSample":
        rows = np.asarray(rows)
        return EvaluationSample(
            y=self.y[rows],
            predictions={k: v[rows] for k, v in self.predictions.items()},
            weights=None if self.weights is None else self.weights[rows],
            features={k: v[rows] for k, v in self.features.items()},
        )

    def with_predictions(self, **extra: Sequence[float]) -> "EvaluationSample":
        preds = dict(self.predictions)
        for name, values in extra.items():
            values = np.asarray(values, dtype=float)
            preds[name] = np.broadcast_to(values, self.y.shape) if values.ndim == 0 else values
        return EvaluationSample(y=self.y, predictions=preds, weights=self.weights, features=self.features)


def validate_sample(sample: EvaluationSample) -> None:
    """Check the invariants of an :class:`EvaluationSample`.

    Raises
    ------
    EmptySample
        If there are no rows.
    LengthMismatch
        If any column differs in length from ``y``.
    NonFiniteValue
        If ``y``, a prediction or a weight is NaN or infinite.
    NonPositiveWeight
        If any weight is not strictly positive.
    """
    n = len(sample.y)
    if n == 0:
        raise EmptySample("sample has no rows")
    columns = [("prediction " + repr(k), v) for k, v in sample.predictions.items()]
    columns += [("feature " + repr(k), v) for k, v in sample.features.items()]
    if sample.weights is not None:
        columns.append(("weights", sample.weights))
    for name, col in columns:
        if len(col) != n:
            raise LengthMismatch(f"{name} has length {len(col)}, expected {n}")
    for name, col in [("y", sample.y)] + [(f"prediction {k!r}", v) for k, v in sample.predictions.items()]:
        bad = np.flatnonzero(~np.isfinite(col))
        if bad.size:
            raise NonFiniteValue(f"{name} has a non-finite value in row {bad[0]}")
    if sample.weights is not None:
        w = sample.weights
        if not np.all(np.isfinite(w)):
            raise NonFiniteValue("weights contain a non-finite value")
        bad = np.flatnonzero(w <= 0)
        if bad.size:
            raise NonPositiveWeight(f"weight in row {bad[0]} is {w[bad[0]]!r}, must be > 0")


def _weights_or_ones(y: np.ndarray, weights) -> np.ndarray:
    if weights is None:
        return np.ones_like(y)
    w = _as_float_array(weights, "weights")
    if w.shape != y.shape:
        raise LengthMismatch(f"weights have length {w.size}, expected {y.size}")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise NonPositiveWeight("weights must be finite and > 0")
    return w


def weighted_lower_quantile(y, alpha: float, weights=None) -> float:
    """Lower quantile ``inf{t : F(t) >= alpha}`` of a weighted empirical law."""
    y = _as_float_array(y, "y")
    if y.size == 0:
        raise EmptySample("cannot take a quantile of an empty sample")
    w = _weights_or_ones(y, weights)
    order = np.argsort(y, kind="stable")
    ys, cum = y[order], np.cumsum(w[order])
    total = cum[-1]
    # relative slack so that e.g. 0.3 * 10 still selects the third order statistic
    idx = int(np.searchsorted(cum, alpha * total - 1e-12 * total, side="left"))
    return float(ys[min(idx, ys.size - 1)])


def expectile(y, alpha: float, weights=None, tol: float = EXPECTILE_TOL) -> float:
    """Root of ``z -> sum w |1{z >= y} - alpha| (z - y)`` by bisection."""
    y = _as_float_array(y, "y")
    if y.size == 0:
        raise EmptySample("cannot take an expectile of an empty sample")
    w = _weights_or_ones(y, weights)
    lo, hi = float(y.min()), float(y.max())

    def ident(z: float) -> float:
        return float(np.sum(w * np.abs((z >= y) - alpha) * (z - y)))

    for _ in range(2000):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if ident(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    # the identification sum is piecewise linear: one secant step on the
    # final bracket is exact unless a data point sits inside it
    f_lo, f_hi = ident(lo), ident(hi)
    if f_lo < 0.0 < f_hi:
        return float(min(max(lo - f_lo * (hi - lo) / (f_hi - f_lo), lo), hi))
    return hi if f_hi == 0.0 else (lo if f_lo == 0.0 else 0.5 * (lo + hi))


def functional_of_empirical(f: TargetFunctional, y, weights=None) -> float:
    """Evaluate ``f`` on the (weighted) empirical distribution of ``y``.

    Quantiles follow the lower-quantile convention, so the result is always
    an element of ``y``.  The beta-median is the median of the law
    reweighted by ``y**beta`` and requires ``y > 0``.
    """
    y = _as_float_array(y, "y")
    if y.size == 0:
        raise EmptySample("empty sample")
    if f.kind is Kind.MEAN:
        w = _weights_or_ones(y, weights)
        return float(np.sum(w * y) / np.sum(w))
    if f.kind in (Kind.QUANTILE, Kind.MEDIAN):
        return weighted_lower_quantile(y, f.alpha, weights)
    if f.kind is Kind.EXPECTILE:
        return expectile(y, f.alpha, weights)
    if np.any(y <= 0):
        raise ValidationError("beta-median requires positive observations")
    w = _weights_or_ones(y, weights) * y ** f.beta
    return weighted_lower_quantile(y, 0.5, w)


class Family(enum.Enum):
    SQUARED_ERROR = "squared_error"
    POISSON_DEVIANCE = "poisson"
    GAMMA_DEVIANCE = "gamma"
    TWEEDIE_DEVIANCE = "tweedie"
    HOMOGENEOUS = "homogeneous"
    LOG_LOSS = "log_loss"
    PINBALL = "pinball"
    APQSF = "apqsf"
    ABSOLUTE_ERROR = "absolute_error"
    ZERO_ONE = "zero_one"
    ELEMENTARY_EXPECTATION = "elementary"
    COST_WEIGHTED = "cost_weighted"
    HINGE = "hinge"
    INTERVAL = "interval"
    MEAN_VARIANCE_PAIR = "mean_variance"
    APE = "ape"
    RE = "re"


# parameter each family requires (None: parameter-free)
_REQUIRED_PARAM = {
    Family.TWEEDIE_DEVIANCE: "p",
    Family.HOMOGENEOUS: "a",
    Family.PINBALL: "alpha",
    Family.APQSF: "alpha",
    Family.INTERVAL: "alpha",
    Family.COST_WEIGHTED: "c",
    Family.ELEMENTARY_EXPECTATION: "theta",
}

_ALIASES = {
    "squared_error": Family.SQUARED_ERROR,
    "se": Family.SQUARED_ERROR,
    "mse": Family.SQUARED_ERROR,
    "brier": Family.SQUARED_ERROR,
    "poisson": Family.POISSON_DEVIANCE,
    "poisson_deviance": Family.POISSON_DEVIANCE,
    "gamma": Family.GAMMA_DEVIANCE,
    "gamma_deviance": Family.GAMMA_DEVIANCE,
    "tweedie": Family.TWEEDIE_DEVIANCE,
    "homogeneous": Family.HOMOGENEOUS,
    "log_loss": Family.LOG_LOSS,
    "logloss": Family.LOG_LOSS,
    "pinball": Family.PINBALL,
    "apqsf": Family.APQSF,
    "absolute_error": Family.ABSOLUTE_ERROR,
    "mae": Family.ABSOLUTE_ERROR,
    "zero_one": Family.ZERO_ONE,
    "elementary": Family.ELEMENTARY_EXPECTATION,
    "cost_weighted": Family.COST_WEIGHTED,
    "hinge": Family.HINGE,
    "interval": Family.INTERVAL,
    "mean_variance": Family.MEAN_VARIANCE_PAIR,
    "ape": Family.APE,
    "re": Family.RE,
}


@dataclass(frozen=True)
class ScoreSpec:
    """A scoring function together with its parameters.

    Only the parameter the family needs may be set: ``p`` for Tweedie,
    ``a`` for the homogeneous score, ``alpha`` for pinball/APQSF/interval,
    ``c`` for the cost-weighted loss and ``theta`` for the elementary score.
    ``clip`` opts the log loss into clipping predictions to
    ``[1e-15, 1 - 1e-15]``.
    """

    family: Family
    p: Optional[float] = None
    a: Optional[float] = None
    alpha: Optional[float] = None
    c: Optional[float] = None
    theta: Optional[float] = None
    clip: bool = False

    def __post_init__(self):
        needed = _REQUIRED_PARAM.get(self.family)
        for name in ("p", "a", "alpha", "c", "theta"):
            value = getattr(self, name)
            if name == needed:
                if value is None or not math.isfinite(value):
                    raise ValidationError(f"{self.family.value} requires a finite parameter {name}")
            elif value is not None:
                raise ValidationError(f"{self.family.value} takes no parameter {name}")
        if self.family is Family.HOMOGENEOUS and not self.a > 1:
            raise ValidationError("homogeneous score requires a > 1")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.c is not None and not 0.0 <= self.c <= 1.0:
            raise ValidationError("cost ratio c must lie in [0, 1]")
        if self.clip and self.family is not Family.LOG_LOSS:
            raise ValidationError("clip only applies to the log loss")

    @classmethod
    def parse(cls, text: str) -> "ScoreSpec":
        """Parse ``NAME`` or ``NAME:PARAM``, e.g. ``gamma``, ``tweedie:1.5``,
        ``pinball:0.9``."""
        name, _, arg = text.strip().lower().partition(":")
        family = _ALIASES.get(name.replace("-", "_"))
        if family is None:
            raise ValidationError(f"unknown score {text!r}")
        param = _REQUIRED_PARAM.get(family)
        if param is None:
            if arg:
                raise ValidationError(f"score {name!r} takes no parameter")
            return cls(family)
        if not arg:
            raise ValidationError(f"score {name!r} needs a parameter: {name}:{param.upper()}")
        try:
            value = float(arg)
        except ValueError:
            raise ValidationError(f"bad parameter in {text!r}") from None
        return cls(family, **{param: value})

    @property
    def name(self) -> str:
        param = _REQUIRED_PARAM.get(self.family)
        if param is None:
            return self.family.value
        return f"{self.family.value}:{getattr(self, param):g}"

    def functional(self) -> Optional[TargetFunctional]:
        """The functional this score is strictly consistent for, if any."""
        f = self.family
        if f in (
            Family.SQUARED_ERROR,
            Family.POISSON_DEVIANCE,
            Family.GAMMA_DEVIANCE,
            Family.TWEEDIE_DEVIANCE,
            Family.HOMOGENEOUS,
            Family.LOG_LOSS,
        ):
            return TargetFunctional.mean()
        if f is Family.PINBALL:
            return TargetFunctional.quantile(self.alpha)
        if f is Family.APQSF:
            return TargetFunctional.expectile(self.alpha)
        if f is Family.ABSOLUTE_ERROR:
            return TargetFunctional.median()
        if f is Family.APE:
            return TargetFunctional.beta_median(-1.0)
        if f is Family.RE:
            return TargetFunctional.beta_median(1.0)
        return None

    def is_bregman(self) -> bool:
        """True for the Bregman-type scores of the mean."""
        f = self.functional()
        return f is not None and f.kind is Kind.MEAN
