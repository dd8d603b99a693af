"""Empirical scores, Diebold-Mariano tests, skill scores and Murphy diagrams."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import scoring
from .core import EvaluationSample, ScoreSpec, TargetFunctional, functional_of_empirical
from .errors import DegenerateVariance, DomainViolation, EmptyGrid, UnknownModel, ValidationError, ZeroReferenceScore
from .identification import t_test

# Rows of the (theta x n) elementary-score matrix evaluated at once.
_MURPHY_CHUNK = 256


@dataclass(frozen=True)
class ScoreSummary:
    model: str
    mean_score: float
    weighted: bool
    n: int
    std_error: float


def per_row_scores(spec: ScoreSpec, sample: EvaluationSample, model: str) -> np.ndarray:
    """Score of every row; the domain check reports the first bad row."""
    z = sample.prediction(model)
    try:
        return np.atleast_1d(scoring.score(spec, z, sample.y))
    except DomainViolation as exc:
        raise exc.for_model(model) from None


def _weighted_mean_se(values: np.ndarray, weights: Optional[np.ndarray]):
    n = values.size
    if weights is None:
        mean = float(np.mean(values))
        se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return mean, se
    total = float(np.sum(weights))
    mean = float(np.sum(weights * values) / total)
    if n < 2:
        return mean, 0.0
    # sandwich variance of a ratio estimator; reduces to s/sqrt(n) for equal weights
    var = n / (n - 1) * float(np.sum((weights * (values - mean)) ** 2)) / total**2
    return mean, math.sqrt(var)


def empirical_score(spec: ScoreSpec, sample: EvaluationSample, model: str, weights=None) -> ScoreSummary:
    """Average score of ``model`` on ``sample``.

    Parameters
    ----------
    weights : array_like, optional
        Case weights; defaults to the sample's own weights.  The weighted
        mean is ``sum(w S) / sum(w)``.

    Raises
    ------
    DomainViolation
        With the index of the first row outside the score's domain.
    """
    values = per_row_scores(spec, sample, model)
    w = sample.weights if weights is None else np.asarray(weights, dtype=float)
    if w is not None:
        if w.shape != values.shape:
            raise ValidationError(f"weights have length {w.size}, expected {values.size}")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and positive")
    mean, se = _weighted_mean_se(values, w)
    return ScoreSummary(model, mean, w is not None, sample.n, se)


class Alternative(enum.Enum):
    """Alternative hypothesis of a Diebold-Mariano test.

    ``A_GREATER`` asserts that model A has greater predictive performance,
    i.e. a smaller expected score; it rejects the null
    ``E[S(A) - S(B)] >= 0``.
    """

    TWO_SIDED = "two-sided"
    A_GREATER = "a-greater"
    B_GREATER = "b-greater"

    @classmethod
    def parse(cls, text: str) -> "Alternative":
        key = text.strip().lower().replace("_", "-")
        aliases = {"a-better": cls.A_GREATER, "b-better": cls.B_GREATER, "two": cls.TWO_SIDED}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"unknown alternative {text!r}") from None


@dataclass(frozen=True)
class DMResult:
    mean_diff: float
    t_stat: float
    p_value: float
    n: int


def dm_test(
    spec: ScoreSpec,
    sample: EvaluationSample,
    model_a: str,
    model_b: str,
    alternative: Alternative = Alternative.TWO_SIDED,
) -> DMResult:
    """Diebold-Mariano t-test on ``d_i = S(a_i, y_i) - S(b_i, y_i)``.

    Uses the i.i.d. sample variance and a t distribution with ``n - 1``
    degrees of freedom.  If all ``d_i`` are zero the models are
    indistinguishable and ``(0, 0, 1)`` is returned.

    Raises
    ------
    DegenerateVariance
        For ``n < 2`` or when all ``d_i`` are equal and nonzero.
    """
    if isinstance(alternative, str):
        alternative = Alternative.parse(alternative)
    if sample.n < 2:
        raise DegenerateVariance("Diebold-Mariano test needs at least two rows")
    d = per_row_scores(spec, sample, model_a) - per_row_scores(spec, sample, model_b)
    tail = {
        Alternative.TWO_SIDED: "two-sided",
        Alternative.A_GREATER: "less",
        Alternative.B_GREATER: "greater",
    }[alternative]
    mean, _, t, p = t_test(d, alternative=tail)
    return DMResult(mean, t, p, sample.n)


def skill_score(spec: ScoreSpec, sample: EvaluationSample, model: str, reference: str) -> float:
    """``1 - S(model) / S(reference)``, the relative score improvement."""
    ref = empirical_score(spec, sample, reference).mean_score
    if not ref > 0:
        raise ZeroReferenceScore(f"reference model {reference!r} has mean score {ref!r}; need > 0")
    if model == reference:
        return 0.0
    return 1.0 - empirical_score(spec, sample, model).mean_score / ref


def trivial_model(f: TargetFunctional, train_y, weights=None) -> float:
    """Best constant prediction: the empirical functional of ``train_y``."""
    return functional_of_empirical(f, train_y, weights)


@dataclass(frozen=True)
class MurphyCurve:
    """Mean scores of several models along a parameter grid.

    ``parameter`` is ``"theta"`` for elementary scores or ``"p"`` for
    Tweedie powers.
    """

    parameter_grid: np.ndarray
    values: Mapping[str, np.ndarray]
    rescaled: bool = False
    parameter: str = "theta"

    def __post_init__(self):
        grid = np.asarray(self.parameter_grid, dtype=float)
        if grid.size == 0:
            raise EmptyGrid("parameter grid is empty")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("parameter grid must be strictly increasing")
        object.__setattr__(self, "parameter_grid", grid)

    @property
    def models(self) -> list[str]:
        return list(self.values)

    def rows(self):
        """Long format ``(parameter, model, mean_score)``, grid-major."""
        for i, x in enumerate(self.parameter_grid):
            for m, v in self.values.items():
                yield float(x), m, float(v[i])

    def to_csv(self, digits: Optional[int] = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["parameter", "model", "mean_score"])
        for x, m, v in self.rows():
            if digits is None:
                writer.writerow([repr(x), m, repr(v)])
            else:
                writer.writerow([f"{x:.{digits}g}", m, f"{v:.{digits}g}"])
        return buf.getvalue()


def _resolve_models(sample: EvaluationSample, models: Optional[Sequence[str]]) -> list[str]:
    models = list(sample.models if models is None else models)
    if not models:
        raise ValidationError("no models given")
    for m in models:
        sample.prediction(m)
    return models


def _average(values: np.ndarray, weights: Optional[np.ndarray], axis: int = -1):
    if weights is None:
        return values.mean(axis=axis)
    return (values * weights).sum(axis=axis) / weights.sum()


def murphy_elementary(
    sample: EvaluationSample,
    models: Optional[Sequence[str]] = None,
    theta_grid=None,
    window: Optional[tuple] = None,
) -> MurphyCurve:
    """Mean elementary scores for the mean over a grid of ``theta``.

    The default grid is the sorted set of all observations and
    predictions; the mean elementary score is piecewise linear between
    these knots.  ``window = (lo, hi)`` keeps only grid points inside it.
    Sample weights, if any, are used.
    """
    models = _resolve_models(sample, models)
    if theta_grid is None:
        grid = np.unique(np.concatenate([sample.y] + [sample.prediction(m) for m in models]))
    else:
        grid = np.unique(np.asarray(theta_grid, dtype=float))
    if window is not None:
        lo, hi = window
        if lo > hi:
            raise ValidationError(f"window lower bound {lo} exceeds upper bound {hi}")
        grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size == 0:
        raise EmptyGrid("no theta values in grid" + ("" if window is None else f" within window {window}"))
    y = sample.y
    values = {}
    for m in models:
        z = sample.prediction(m)
        out = np.empty(grid.size)
        for start in range(0, grid.size, _MURPHY_CHUNK):
            theta = grid[start : start + _MURPHY_CHUNK, None]
            out[start : start + theta.shape[0]] = _average(scoring.score_elementary(theta, z, y), sample.weights)
        values[m] = out
    return MurphyCurve(grid, values, rescaled=False, parameter="theta")


def murphy_tweedie(
    sample: EvaluationSample,
    models: Optional[Sequence[str]] = None,
    p_grid: Sequence[float] = (0.0, 1.0, 1.5, 2.0, 3.0),
    rescale: bool = True,
) -> MurphyCurve:
    """Mean Tweedie deviances over a grid of powers ``p``.

    With ``rescale`` each deviance is multiplied by ``ybar**(p - 2)``,
    which makes the curve invariant to the unit of ``y``.

    Raises
    ------
    DomainViolation
        If a power lies in the gap (0, 1), or data violate a power's
        domain.
    """
    models = _resolve_models(sample, models)
    grid = np.asarray(p_grid, dtype=float)
    gap = grid[(grid > 0) & (grid < 1)]
    if gap.size:
        raise DomainViolation("tweedie_power", bound=f"p={gap[0]:g} lies in the excluded interval (0, 1)")
    if np.any(np.diff(grid) <= 0):
        grid = np.unique(grid)
    if grid.size == 0:
        raise EmptyGrid("no Tweedie powers given")
    ybar = float(_average(sample.y, sample.weights))
    values = {m: np.empty(grid.size) for m in models}
    for i, p in enumerate(grid):
        factor = ybar ** (p - 2.0) if rescale else 1.0
        for m in models:
            dev = scoring.tweedie_deviance(sample.prediction(m), sample.y, float(p))
            values[m][i] = factor * float(_average(np.atleast_1d(dev), sample.weights))
    return MurphyCurve(grid, values, rescaled=rescale, parameter="p")


class Dominance(enum.Enum):
    A_DOMINATES = "a-dominates"
    B_DOMINATES = "b-dominates"
    CROSSING = "crossing"


def dominance_check(curve: MurphyCurve, model_a: str, model_b: str, tol: float = 1e-12) -> Dominance:
    """Pointwise dominance of two Murphy curves.

    A dominates if its curve is nowhere above B's (up to ``tol``) and
    strictly below somewhere.
    """
    for m in (model_a, model_b):
        if m not in curve.values:
            raise UnknownModel(f"model {m!r} not in curve; available: {curve.models}")
    a = np.asarray(curve.values[model_a])
    b = np.asarray(curve.values[model_b])
    if np.all(a <= b + tol) and np.any(a < b - tol):
        return Dominance.A_DOMINATES
    if np.all(b <= a + tol) and np.any(b < a - tol):
        return Dominance.B_DOMINATES
    return Dominance.CROSSING
