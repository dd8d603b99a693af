"""Isotonic recalibration and the CORP miscalibration/discrimination/
uncertainty decomposition of mean scores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import isotonic_regression

from . import scoring
from .core import EvaluationSample, ScoreSpec
from .errors import EmptySample, LengthMismatch, ValidationError

IDENTITY_RTOL = 1e-10


@dataclass(frozen=True)
class IsotonicFit:
    """Isotonic regression of responses on predictions.

    Attributes
    ----------
    knots : ndarray
        Sorted distinct prediction values.
    knot_cep : ndarray
        Fitted conditional event probability (or conditional mean) at each
        knot; nondecreasing.
    knot_block : ndarray
        Block id of each knot; knots in one block share a fitted value.
    row_knot : ndarray
        Knot index of every input row.
    block_prediction, block_cep, block_weight : ndarray
        Weighted mean prediction, fitted value and total weight per block.
    """

    knots: np.ndarray
    knot_cep: np.ndarray
    knot_block: np.ndarray
    row_knot: np.ndarray
    block_prediction: np.ndarray
    block_cep: np.ndarray
    block_weight: np.ndarray

    @property
    def fitted(self) -> np.ndarray:
        """Recalibrated value of every input row."""
        return self.knot_cep[self.row_knot]

    @property
    def n_blocks(self) -> int:
        return int(self.block_cep.size)


def pav_isotonic(predictions, y, weights=None) -> IsotonicFit:
    """Weighted least-squares isotonic regression of ``y`` on the order of
    ``predictions`` (pool adjacent violators).

    Rows with equal predictions are pooled first, so the fit is a function
    of the prediction value.  Each block's value is its weighted mean
    response.
    """
    z = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if z.size == 0:
        raise EmptySample("isotonic regression of an empty sample")
    if z.shape != y.shape:
        raise LengthMismatch(f"{z.size} predictions but {y.size} observations")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != y.shape:
        raise LengthMismatch(f"{w.size} weights but {y.size} observations")

    knots, row_knot = np.unique(z, return_inverse=True)
    k_w = np.bincount(row_knot, weights=w, minlength=knots.size)
    k_wy = np.bincount(row_knot, weights=w * y, minlength=knots.size)
    k_wz = np.bincount(row_knot, weights=w * z, minlength=knots.size)

    res = isotonic_regression(k_wy / k_w, weights=k_w, increasing=True)
    starts = np.asarray(res.blocks[:-1])
    b_w = np.add.reduceat(k_w, starts)
    b_wy = np.add.reduceat(k_wy, starts)
    b_wz = np.add.reduceat(k_wz, starts)
    k_lo = np.full(knots.size, np.inf)
    k_hi = np.full(knots.size, -np.inf)
    np.minimum.at(k_lo, row_knot, y)
    np.maximum.at(k_hi, row_knot, y)
    b_lo = np.minimum.reduceat(k_lo, starts)
    b_hi = np.maximum.reduceat(k_hi, starts)
    # rounding may push a block mean outside its responses; a block of
    # identical responses must reproduce them exactly
    block_cep = np.clip(b_wy / b_w, b_lo, b_hi)
    knot_block = np.repeat(np.arange(starts.size), np.diff(res.blocks))
    return IsotonicFit(
        knots=knots,
        knot_cep=block_cep[knot_block],
        knot_block=knot_block,
        row_knot=row_knot,
        block_prediction=b_wz / b_w,
        block_cep=block_cep,
        block_weight=b_w,
    )


def reliability_points(fit: IsotonicFit) -> list[tuple[float, float]]:
    """``(mean prediction, CEP)`` for every block of an isotonic fit."""
    return [(float(p), float(c)) for p, c in zip(fit.block_prediction, fit.block_cep)]


@dataclass(frozen=True)
class DecompositionResult:
    """``mean_score = mcb - dsc + unc``."""

    mean_score: float
    mcb: float
    dsc: float
    unc: float

    def identity_error(self) -> float:
        """Relative deviation from the decomposition identity."""
        lhs = self.mcb - self.dsc + self.unc
        return abs(lhs - self.mean_score) / max(abs(self.mean_score), math.ulp(1.0))


def _mean(values, weights):
    values = np.atleast_1d(values)
    if weights is None:
        return float(np.mean(values))
    return float(np.sum(weights * values) / np.sum(weights))


def corp_decomposition(spec: ScoreSpec, sample: EvaluationSample, model: str, fit: Optional[IsotonicFit] = None):
    """Decompose the mean score of ``model`` via isotonic recalibration.

    ``UNC`` is the mean score of the constant prediction ``ybar``,
    ``DSC = UNC - S(recalibrated)`` and ``MCB = S(raw) - S(recalibrated)``.
    For Bregman scores of the mean both components are nonnegative.

    Returns
    -------
    result : DecompositionResult
    fit : IsotonicFit
    """
    if not spec.is_bregman():
        raise ValidationError(f"score {spec.name} is not a consistent score for the mean")
    z = sample.prediction(model)
    w = sample.weights
    if fit is None:
        fit = pav_isotonic(z, sample.y, w)
    ybar = _mean(sample.y, w)
    s_raw = _mean(scoring.score(spec, z, sample.y), w)
    s_rc = _mean(scoring.score(spec, fit.fitted, sample.y), w)
    s_mg = _mean(scoring.score(spec, np.full(sample.n, ybar), sample.y), w)
    result = DecompositionResult(mean_score=s_raw, mcb=s_raw - s_rc, dsc=s_mg - s_rc, unc=s_mg)
    return result, fit
