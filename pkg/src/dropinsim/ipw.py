"""Stabilized inverse-probability-of-treatment weights.

For each timepoint k the observed treatment a_k gets two fitted probability
models: a numerator conditioning on prior treatment and the baseline covariate
only, and a denominator conditioning on prior treatment and the full covariate
history up to k. The stabilized weight is the product over k of the ratio of
observed-treatment densities, numerator over denominator.

Strata where a_k is structurally constant given a_{k-1} (for example trial
patients untreated at baseline can never start treatment) are handled outside
the logistic fits: the fitted probability is the empirical 0/1 rate and the
weight factor for consistent individuals is exactly 1. Logistic models are
fitted within informative strata only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np
import pandas as pd

from .cohort import Cohort
from .logistic import DesignMatrix, FitResult, expit, fit_weighted_logistic

A_PREV = "a_prev"


class PositivityError(RuntimeError):
    """An observed treatment has probability zero under the denominator model."""


@dataclass(frozen=True)
class TreatmentHistoryTable:
    """Treatment and covariate histories as (n, K+1) arrays."""

    a: np.ndarray
    x: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a)
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", x)
        if a.ndim != 2 or a.shape != x.shape:
            raise ValueError("treatment and covariate histories must share shape (n, K+1)")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("treatment history must be binary")
        if not np.isfinite(x).all():
            raise ValueError("covariate history must be finite")

    @classmethod
    def from_cohort(cls, cohort: Cohort) -> "TreatmentHistoryTable":
        return cls(
            a=np.column_stack([cohort.a0, cohort.a1]),
            x=np.column_stack([cohort.x0, cohort.x1]),
        )

    @property
    def n_rows(self) -> int:
        return self.a.shape[0]

    @property
    def n_timepoints(self) -> int:
        return self.a.shape[1]

    def lagged_treatment(self, k: int) -> np.ndarray:
        """a_{k-1}, with the convention a_{-1} = 0 for everyone."""
        if k == 0:
            return np.zeros(self.n_rows, dtype=self.a.dtype)
        return self.a[:, k - 1]


@dataclass(frozen=True)
class TimepointTreatmentModel:
    """P(a_k = 1 | history) with constant strata resolved empirically.

    Exactly one of three shapes applies: a pooled logistic fit over both
    a_{k-1} strata (fit set, stratum None), a fit within the single
    informative stratum (fit set, stratum set), or no fit at all when a_k is
    constant everywhere (fit None).
    """

    k: int
    covariates: tuple[str, ...]
    fit: FitResult | None
    stratum: int | None
    constant_strata: Mapping[int, float]

    def _design_columns(self, table: TreatmentHistoryTable, rows: np.ndarray) -> dict:
        columns = {}
        for name in self.covariates:
            if name == A_PREV:
                columns[name] = table.lagged_treatment(self.k)[rows]
            else:
                columns[name] = table.x[rows, int(name[1:])]
        return columns

    def predict(self, table: TreatmentHistoryTable) -> np.ndarray:
        """Fitted P(a_k = 1) for every row of the table."""
        a_prev = table.lagged_treatment(self.k)
        prob = np.full(table.n_rows, np.nan)
        for value, rate in self.constant_strata.items():
            prob[a_prev == value] = rate
        if self.fit is not None:
            rows = np.ones(table.n_rows, dtype=bool) if self.stratum is None \
                else a_prev == self.stratum
            if rows.any():
                columns = self._design_columns(table, rows)
                eta = np.full(rows.sum(), self.fit.coefficients["intercept"])
                for name, coef in self.fit.coefficients.items():
                    if name != "intercept":
                        eta = eta + coef * columns[name]
                prob[rows] = expit(eta)
        if np.isnan(prob).any():
            raise PositivityError(
                f"timepoint {self.k}: rows fall in an a_prev stratum unseen at fit time"
            )
        return prob


@dataclass(frozen=True)
class TreatmentModelPair:
    """Numerator and denominator model sequences, one entry per timepoint."""

    numerator_fits: tuple[TimepointTreatmentModel, ...]
    denominator_fits: tuple[TimepointTreatmentModel, ...]

    def __post_init__(self) -> None:
        if len(self.numerator_fits) != len(self.denominator_fits):
            raise ValueError("numerator and denominator sequences must align")


class WeightSummary(NamedTuple):
    mean: float
    minimum: float
    maximum: float
    p01: float
    p99: float


@dataclass(frozen=True)
class StabilizedWeightVector:
    sw: np.ndarray
    summary: WeightSummary

    @classmethod
    def from_weights(cls, sw: np.ndarray) -> "StabilizedWeightVector":
        sw = np.asarray(sw, dtype=float)
        if not np.isfinite(sw).all() or (sw <= 0).any():
            raise ValueError("stabilized weights must be finite and strictly positive")
        summary = WeightSummary(
            mean=float(sw.mean()),
            minimum=float(sw.min()),
            maximum=float(sw.max()),
            p01=float(np.percentile(sw, 1)),
            p99=float(np.percentile(sw, 99)),
        )
        return cls(sw=sw, summary=summary)

    def __len__(self) -> int:
        return self.sw.shape[0]

    def to_csv(self, path) -> None:
        pd.DataFrame({"id": np.arange(len(self)), "sw": self.sw}).to_csv(
            path, index=False
        )


def _fit_timepoint(
    table: TreatmentHistoryTable, k: int, covariate_names: tuple[str, ...]
) -> TimepointTreatmentModel:
    """Fit P(a_k | a_{k-1}, covariates) honoring structurally constant strata."""
    a_k = table.a[:, k].astype(float)
    a_prev = table.lagged_treatment(k)
    strata = sorted(int(v) for v in np.unique(a_prev))

    constant: dict[int, float] = {}
    informative: list[int] = []
    for value in strata:
        outcomes = a_k[a_prev == value]
        if outcomes.min() == outcomes.max():
            constant[value] = float(outcomes[0])
        else:
            informative.append(value)

    def build_design(rows: np.ndarray, names: tuple[str, ...]) -> DesignMatrix:
        columns = {}
        for name in names:
            if name == A_PREV:
                columns[name] = a_prev[rows].astype(float)
            else:
                columns[name] = table.x[rows, int(name[1:])]
        return DesignMatrix.from_columns(columns)

    if not informative:
        return TimepointTreatmentModel(
            k=k, covariates=(), fit=None, stratum=None, constant_strata=constant
        )
    if len(informative) == len(strata) and len(strata) == 2:
        names = (A_PREV, *covariate_names)
        rows = np.ones(table.n_rows, dtype=bool)
        fit = fit_weighted_logistic(build_design(rows, names), a_k)
        return TimepointTreatmentModel(
            k=k, covariates=names, fit=fit, stratum=None, constant_strata={}
        )
    # a single informative stratum: a_prev is constant there, drop its column
    stratum = informative[0]
    rows = a_prev == stratum
    fit = fit_weighted_logistic(build_design(rows, covariate_names), a_k[rows])
    return TimepointTreatmentModel(
        k=k, covariates=covariate_names, fit=fit, stratum=stratum,
        constant_strata=constant,
    )


def fit_treatment_models(table: TreatmentHistoryTable) -> TreatmentModelPair:
    """Fit numerator (baseline covariate) and denominator (full history) models."""
    numerators = []
    denominators = []
    for k in range(table.n_timepoints):
        numerators.append(_fit_timepoint(table, k, ("x0",)))
        denominators.append(
            _fit_timepoint(table, k, tuple(f"x{j}" for j in range(k + 1)))
        )
    return TreatmentModelPair(
        numerator_fits=tuple(numerators), denominator_fits=tuple(denominators)
    )


def _observed_log_density(
    prob: np.ndarray, a_k: np.ndarray, k: int, side: str
) -> np.ndarray:
    density = np.where(a_k == 1, prob, 1.0 - prob)
    if (density <= 0).any():
        bad = int((density <= 0).sum())
        raise PositivityError(
            f"timepoint {k}: {side} density is zero for {bad} row(s); observed "
            "treatment contradicts a structurally constant stratum"
        )
    return np.log(density)


def compute_stabilized_weights(
    table: TreatmentHistoryTable, models: TreatmentModelPair
) -> StabilizedWeightVector:
    """sw_i = prod_k num_k(a_ki) / den_k(a_ki), accumulated in log space."""
    if len(models.numerator_fits) != table.n_timepoints:
        raise ValueError("model pair does not match the table's timepoints")
    log_sw = np.zeros(table.n_rows)
    for k in range(table.n_timepoints):
        a_k = table.a[:, k]
        den_prob = models.denominator_fits[k].predict(table)
        log_sw -= _observed_log_density(den_prob, a_k, k, "denominator")
        num_prob = models.numerator_fits[k].predict(table)
        log_sw += _observed_log_density(num_prob, a_k, k, "numerator")
    return StabilizedWeightVector.from_weights(np.exp(log_sw))
