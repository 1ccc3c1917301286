"""Predictive performance metrics.

Calibration comes in two fitted forms that are kept distinct on purpose: the
joint logistic regression of outcomes on the linear predictor (intercept and
slope), and the calibration-in-the-large offset form where the linear
predictor enters with its coefficient fixed at 1. Discrimination is the
Mann-Whitney AUC with midrank tie handling. Allocation curves report the
fraction of individuals whose predicted risk exceeds each decision threshold.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .logistic import (
    DegenerateOutcomeError,
    DesignMatrix,
    fit_weighted_logistic,
    logit,
)

DEFAULT_THRESHOLDS = tuple(round(0.05 * k, 2) for k in range(1, 15))


class ConstantPredictorError(ValueError):
    """The linear predictor is constant, leaving the slope undefined."""


@dataclass(frozen=True)
class PredictionSet:
    """Aligned predictions, outcomes, and linear predictors for one evaluation."""

    predictions: np.ndarray
    outcomes: np.ndarray
    linear_predictors: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.predictions, dtype=float)
        y = np.asarray(self.outcomes, dtype=float)
        lp = np.asarray(self.linear_predictors, dtype=float)
        object.__setattr__(self, "predictions", p)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "linear_predictors", lp)
        n = p.shape[0]
        if p.ndim != 1 or y.shape != (n,) or lp.shape != (n,):
            raise ValueError("predictions, outcomes, and linear predictors must align")
        if n < 2:
            raise ValueError("at least two observations are required")
        if not ((p > 0) & (p < 1)).all():
            raise ValueError("predictions must lie strictly in (0, 1)")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("outcomes must be binary 0/1")
        if not np.isfinite(lp).all():
            raise ValueError("linear predictors must be finite")

    @classmethod
    def from_probabilities(
        cls, predictions: np.ndarray, outcomes: np.ndarray
    ) -> "PredictionSet":
        predictions = np.asarray(predictions, dtype=float)
        # out-of-range probabilities are rejected by the constructor; keep the
        # intermediate logit quiet about them
        with np.errstate(divide="ignore"):
            lp = logit(predictions)
        return cls(predictions, np.asarray(outcomes), lp)

    def __len__(self) -> int:
        return self.predictions.shape[0]


class CalibrationResult(NamedTuple):
    intercept: float
    slope: float
    citl_offset: float


def _require_both_classes(y: np.ndarray) -> None:
    if y.min() == y.max():
        raise DegenerateOutcomeError("both outcome classes are required")


def calibration(prediction_set: PredictionSet) -> CalibrationResult:
    """Calibration intercept and slope (joint fit) plus the offset-form CITL.

    The joint form regresses outcomes on 1 + LP; the offset form refits the
    intercept alone with the LP coefficient pinned to 1.
    """
    y = prediction_set.outcomes
    lp = prediction_set.linear_predictors
    _require_both_classes(y)
    if lp.min() == lp.max():
        raise ConstantPredictorError(
            "calibration slope is undefined for a constant linear predictor"
        )
    joint = fit_weighted_logistic(
        DesignMatrix.from_columns({"lp": lp}), y
    )
    offset_fit = fit_weighted_logistic(
        DesignMatrix(np.ones((len(y), 1)), ("intercept",)), y, offset=lp
    )
    return CalibrationResult(
        intercept=joint.coefficients["intercept"],
        slope=joint.coefficients["lp"],
        citl_offset=offset_fit.coefficients["intercept"],
    )


def auc(prediction_set: PredictionSet) -> float:
    """Mann-Whitney AUC with midranks, exact under ties."""
    y = prediction_set.outcomes
    _require_both_classes(y)
    ranks = rankdata(prediction_set.predictions, method="average")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    rank_sum = float(ranks[y == 1.0].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def brier(prediction_set: PredictionSet) -> float:
    """Mean squared difference between predicted probability and outcome."""
    diff = prediction_set.predictions - prediction_set.outcomes
    return float(np.mean(diff * diff))


def allocation_curve(
    risks: np.ndarray, thresholds: Sequence[float] = DEFAULT_THRESHOLDS
) -> list[tuple[float, float]]:
    """Fraction of risks strictly above each threshold, per threshold."""
    risks = np.asarray(risks, dtype=float)
    if risks.ndim != 1 or risks.size == 0:
        raise ValueError("risks must be a non-empty vector")
    if not ((risks > 0) & (risks < 1)).all():
        raise ValueError("risks must lie strictly in (0, 1)")
    thresholds = [float(t) for t in thresholds]
    if any(not 0.0 <= t <= 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in [0, 1]")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    return [(t, float(np.mean(risks > t))) for t in thresholds]
