"""Binary classification: Bayes rules, confusion statistics and ROC/AUC."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.stats import rankdata

from . import scoring
from .core import EvaluationSample, Family, ScoreSpec
from .errors import EmptySample, LengthMismatch, SingleClassSample, UnknownModel, ValidationError


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BinarySample:
    """Binary outcomes with per-model event probabilities."""

    y: np.ndarray
    probabilities: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if y.size == 0:
            raise EmptySample("binary sample has no rows")
        if not np.all((y == 0) | (y == 1)):
            raise ValidationError("binary outcomes must be 0 or 1")
        probs = {}
        for name, p in self.probabilities.items():
            p = np.asarray(p, dtype=float).ravel()
            if p.shape != y.shape:
                raise LengthMismatch(f"model {name!r} has {p.size} probabilities, expected {y.size}")
            if not np.all((p >= 0) & (p <= 1)):
                raise ValidationError(f"probabilities of model {name!r} must lie in [0, 1]")
            probs[str(name)] = _freeze(p)
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_sample(cls, sample: EvaluationSample) -> "BinarySample":
        return cls(sample.y, dict(sample.predictions))

    @property
    def n(self) -> int:
        return int(self.y.size)

    def probability(self, model: str) -> np.ndarray:
        try:
            return self.probabilities[model]
        except KeyError:
            raise UnknownModel(f"unknown model {model!r}; available: {sorted(self.probabilities)}") from None


def bayes_classifier(p_hat, c: float = 0.5):
    """Cost-optimal class: 1 iff ``p_hat > c``.  Ties go to class 0."""
    out = (np.asarray(p_hat, dtype=float) > c).astype(int)
    return int(out) if out.ndim == 0 else out


def cost_weighted_loss(z, y, c: float):
    """Cost-weighted misclassification error of the Bayes rule at ``c``."""
    return scoring.cost_weighted(z, y, c)


def log_loss(sample: BinarySample, model: str) -> float:
    return float(np.mean(scoring.score(ScoreSpec(Family.LOG_LOSS), sample.probability(model), sample.y)))


def brier_score(sample: BinarySample, model: str) -> float:
    return float(np.mean(scoring.score(ScoreSpec(Family.SQUARED_ERROR), sample.probability(model), sample.y)))


@dataclass(frozen=True)
class ConfusionStats:
    """Hit rate, false alarm rate and accuracy of ``1{p > c}``.

    ``hr`` (``far``) is None if the sample has no positives (negatives).
    """

    hr: Optional[float]
    far: Optional[float]
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def missing(self) -> list[str]:
        return [name for name in ("hr", "far") if getattr(self, name) is None]


def confusion_stats(sample: BinarySample, model: str, c: float = 0.5) -> ConfusionStats:
    pred = bayes_classifier(sample.probability(model), c)
    y = sample.y
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    hr = tp / (tp + fn) if tp + fn else None
    far = fp / (fp + tn) if fp + tn else None
    return ConfusionStats(hr, far, (tp + tn) / sample.n, tp, fp, tn, fn)


def trivial_accuracy(sample: BinarySample) -> float:
    """Accuracy of always predicting the majority class."""
    ybar = float(np.mean(sample.y))
    return max(ybar, 1.0 - ybar)


@dataclass(frozen=True)
class RocCurve:
    """ROC points ``(far(c), hr(c))`` for classification ``1{p > c}``.

    The first threshold is ``-inf`` (point (1, 1)); the last is the
    largest probability (point (0, 0)).
    """

    thresholds: np.ndarray
    far: np.ndarray
    hr: np.ndarray

    def to_csv(self, digits: Optional[int] = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["c", "far", "hr"])
        for row in zip(self.thresholds, self.far, self.hr):
            if digits is None:
                writer.writerow([repr(float(v)) for v in row])
            else:
                writer.writerow([f"{float(v):.{digits}g}" for v in row])
        return buf.getvalue()

    def trapezoid_area(self) -> float:
        x, h = self.far[::-1], self.hr[::-1]
        return float(np.sum(np.diff(x) * (h[1:] + h[:-1]) / 2.0))


@dataclass(frozen=True)
class RocResult:
    curve: RocCurve
    auc: float
    mann_whitney_u: float


def roc_auc(sample: BinarySample, model: str) -> RocResult:
    """ROC curve and area under it.

    The AUC is the Mann-Whitney statistic with midranks, i.e. the
    probability that a random positive scores above a random negative,
    ties counting one half.  It equals the trapezoid area of the curve.
    """
    p = sample.probability(model)
    y = sample.y
    n_pos = int(np.sum(y == 1))
    n_neg = sample.n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassSample(f"ROC needs both classes; got {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(p)
    u = float(np.sum(ranks[y == 1])) - n_pos * (n_pos + 1) / 2.0
    auc = u / (n_pos * n_neg)

    levels = np.unique(p)
    order = np.searchsorted(levels, p)
    pos_at = np.bincount(order, weights=(y == 1), minlength=levels.size)
    neg_at = np.bincount(order, weights=(y == 0), minlength=levels.size)
    # rows with p > levels[j] are those at higher levels
    pos_above = n_pos - np.cumsum(pos_at)
    neg_above = n_neg - np.cumsum(neg_at)
    thresholds = np.concatenate([[-np.inf], levels])
    hr = np.concatenate([[1.0], pos_above / n_pos])
    far = np.concatenate([[1.0], neg_above / n_neg])
    return RocResult(RocCurve(thresholds, far, hr), auc, u)
