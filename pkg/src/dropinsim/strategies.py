"""The four outcome-modelling strategies compared by the simulation.

IgnoreTreatment fits y ~ x0 on everyone. TreatmentNaive fits y ~ x0 on the
baseline-untreated subset. BaselineTreatment fits y ~ x0 + a0 on everyone.
MSM fits y ~ x0 + a0 + a1 on everyone under stabilized
inverse-probability-of-treatment weights, optionally with a0:x0 and a1:x0
interactions.

Counterfactual predictions are requested through estimands E1..E5; a strategy
that cannot realize an estimand from its covariate schema raises rather than
guessing. E4 (treated now, follow-up unspecified) is never a point prediction;
the MSM exposes its two bounding paths through e4_envelope.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .cohort import Cohort, CohortMode
from .ipw import (
    StabilizedWeightVector,
    TreatmentHistoryTable,
    WeightSummary,
    compute_stabilized_weights,
    fit_treatment_models,
)
from .logistic import (
    DesignMatrix,
    FitResult,
    expit,
    fit_weighted_logistic,
)


class UnsupportedEstimandError(RuntimeError):
    """The strategy's covariate schema cannot realize the requested estimand."""


class EmptySubsetError(RuntimeError):
    """The treatment-naive development subset contains no rows."""


class StrategyKind(enum.Enum):
    IGNORE_TREATMENT = "IgnoreTreatment"
    TREATMENT_NAIVE = "TreatmentNaive"
    BASELINE_TREATMENT = "BaselineTreatment"
    MSM = "MSM"


class EstimandKind(enum.Enum):
    E1 = "E1"  # risk disregarding intervention
    E2 = "E2"  # risk under no treatment now
    E3 = "E3"  # risk under no treatment ever
    E4 = "E4"  # risk under treatment now, follow-up unspecified
    E5 = "E5"  # risk under treatment always


STRATEGY_ORDER = (
    StrategyKind.IGNORE_TREATMENT,
    StrategyKind.TREATMENT_NAIVE,
    StrategyKind.BASELINE_TREATMENT,
    StrategyKind.MSM,
)

X0, A0, A1 = "x0", "a0", "a1"
A0_X0, A1_X0 = "a0:x0", "a1:x0"


@dataclass(frozen=True)
class FittedCPM:
    """One fitted prediction model: strategy, coefficients, fitted terms."""

    strategy: StrategyKind
    fit: FitResult
    terms: tuple[str, ...]
    weight_summary: WeightSummary | None = None


def _term_arrays(cohort: Cohort, terms: tuple[str, ...]) -> dict[str, np.ndarray]:
    source = {
        X0: cohort.x0.astype(float),
        A0: cohort.a0.astype(float),
        A1: cohort.a1.astype(float),
    }
    columns: dict[str, np.ndarray] = {}
    for term in terms:
        if term in source:
            columns[term] = source[term]
        elif term == A0_X0:
            columns[term] = source[A0] * source[X0]
        elif term == A1_X0:
            columns[term] = source[A1] * source[X0]
        else:
            raise ValueError(f"unknown model term {term!r}")
    return columns


def _drop_constant_treatment_terms(
    cohort: Cohort, terms: tuple[str, ...]
) -> tuple[str, ...]:
    # a constant treatment column carries no signal and breaks the fit; its
    # interaction would duplicate x0 when the constant is 1
    kept = list(terms)
    for indicator, interaction in ((A0, A0_X0), (A1, A1_X0)):
        column = getattr(cohort, indicator)
        if column.min() == column.max():
            kept = [t for t in kept if t not in (indicator, interaction)]
    return tuple(kept)


def fit_strategy(
    kind: StrategyKind, development: Cohort, *, interactions: bool = False
) -> FittedCPM:
    """Fit one strategy's outcome model on a development cohort."""
    if development.mode is not CohortMode.DEVELOPMENT:
        raise ValueError("strategies are fitted on development cohorts only")

    if kind is StrategyKind.IGNORE_TREATMENT:
        terms: tuple[str, ...] = (X0,)
        data = development
        weights = None
        weight_summary = None
    elif kind is StrategyKind.TREATMENT_NAIVE:
        terms = (X0,)
        data = development.subset(development.a0 == 0)
        if len(data) == 0:
            raise EmptySubsetError("no baseline-untreated rows to fit on")
        weights = None
        weight_summary = None
    elif kind is StrategyKind.BASELINE_TREATMENT:
        terms = _drop_constant_treatment_terms(development, (X0, A0))
        data = development
        weights = None
        weight_summary = None
    elif kind is StrategyKind.MSM:
        wanted: tuple[str, ...] = (X0, A0, A1)
        if interactions:
            wanted = (X0, A0, A1, A0_X0, A1_X0)
        terms = _drop_constant_treatment_terms(development, wanted)
        data = development
        history = TreatmentHistoryTable.from_cohort(development)
        sw = compute_stabilized_weights(history, fit_treatment_models(history))
        weights = sw.sw
        weight_summary = sw.summary
    else:
        raise ValueError(f"unknown strategy {kind!r}")

    design = DesignMatrix.from_columns(_term_arrays(data, terms))
    fit = fit_weighted_logistic(design, data.y.astype(float), weights)
    return FittedCPM(
        strategy=kind, fit=fit, terms=terms, weight_summary=weight_summary
    )


def _treatment_settings(
    model: FittedCPM, estimand: EstimandKind
) -> tuple[float, float]:
    """(a0, a1) values realizing the estimand, or raise if unrealizable."""
    kind = model.strategy
    if estimand is EstimandKind.E4:
        raise UnsupportedEstimandError(
            "E4 leaves follow-up treatment unspecified; see e4_envelope for "
            "the MSM's bounding paths"
        )
    if kind in (StrategyKind.IGNORE_TREATMENT, StrategyKind.TREATMENT_NAIVE):
        # no treatment terms: E1/E2/E3/E5 all collapse to the same x0-only risk
        return (0.0, 0.0)
    if kind is StrategyKind.BASELINE_TREATMENT:
        if estimand is EstimandKind.E1:
            raise UnsupportedEstimandError(
                "BaselineTreatment predicts at a chosen a0; E1 has none"
            )
        if estimand in (EstimandKind.E2, EstimandKind.E3):
            return (0.0, 0.0)
        return (1.0, 0.0)  # E5: its only treatment term is a0
    # MSM
    if estimand is EstimandKind.E3:
        return (0.0, 0.0)
    if estimand is EstimandKind.E5:
        return (1.0, 1.0)
    raise UnsupportedEstimandError(
        f"MSM cannot realize {estimand.value}: a1 is unspecified"
    )


def _risk_at(
    model: FittedCPM, x0: np.ndarray | float, a0: float, a1: float
) -> np.ndarray | float:
    x0 = np.asarray(x0, dtype=float)
    coef = model.fit.coefficients
    eta = coef["intercept"] + np.zeros(x0.shape)
    values = {
        X0: x0,
        A0: a0,
        A1: a1,
        A0_X0: a0 * x0,
        A1_X0: a1 * x0,
    }
    for term in model.terms:
        eta = eta + coef[term] * values[term]
    risk = expit(eta)
    return risk if risk.shape else float(risk)


def predict_risk(
    model: FittedCPM, x0: np.ndarray | float, estimand: EstimandKind
) -> np.ndarray | float:
    """Counterfactual risk at baseline covariate x0 under the estimand."""
    a0, a1 = _treatment_settings(model, estimand)
    return _risk_at(model, x0, a0, a1)


def predict_observed(model: FittedCPM, cohort: Cohort) -> np.ndarray:
    """Risk on observed covariates, using the model's own schema."""
    columns = _term_arrays(cohort, model.terms)
    coef = model.fit.coefficients
    eta = np.full(len(cohort), coef["intercept"])
    for term in model.terms:
        eta = eta + coef[term] * columns[term]
    return np.asarray(expit(eta))


def e4_envelope(
    model: FittedCPM, x0: np.ndarray | float
) -> tuple[np.ndarray | float, np.ndarray | float]:
    """The MSM's bounding risks for E4: treated now, a1 either value."""
    if model.strategy is not StrategyKind.MSM:
        raise UnsupportedEstimandError("the E4 envelope is defined for the MSM only")
    stop = _risk_at(model, x0, 1.0, 0.0)
    continue_ = _risk_at(model, x0, 1.0, 1.0)
    return np.minimum(stop, continue_), np.maximum(stop, continue_)


def counterfactual_effect(
    model: FittedCPM, x0: np.ndarray | float
) -> np.ndarray | float:
    """Risk reduction from never-treated to always-treated, E3 - E5 (MSM only)."""
    if model.strategy is not StrategyKind.MSM:
        raise UnsupportedEstimandError(
            "the counterfactual treatment effect is defined for the MSM only"
        )
    return predict_risk(model, x0, EstimandKind.E3) - predict_risk(
        model, x0, EstimandKind.E5
    )
