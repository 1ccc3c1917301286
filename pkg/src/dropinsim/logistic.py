"""Weighted logistic regression fitted by Newton's method (IRLS).

The solver is deliberately self-contained: maximum-likelihood fitting with
nonnegative observation weights, an optional offset term, step-halving for
global stability, and explicit failure modes (separation, singular design,
degenerate outcome). It is the single fitting routine used everywhere in the
package: outcome models, treatment models, and calibration regressions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

MAX_ITER = 100
GRADIENT_TOL = 1e-8
COEF_BOUND = 30.0
LINEAR_PREDICTOR_CLAMP = 36.0

INTERCEPT = "intercept"


class FitError(RuntimeError):
    """Base class for fitting failures."""


class SeparationError(FitError):
    """A coefficient ran away; the data are (quasi-)separated."""


class SingularDesignError(FitError):
    """The weighted information matrix is singular (collinear design)."""


class DegenerateOutcomeError(FitError):
    """The outcome is constant on the rows that carry positive weight."""


class SchemaError(LookupError):
    """A prediction input does not supply every term of the fit."""


def expit(eta: np.ndarray | float) -> np.ndarray | float:
    """Inverse logit with the linear predictor clamped to +/-36.

    The clamp keeps results strictly inside (0, 1) in float64, so downstream
    log-densities and weight ratios never see an exact 0 or 1.
    """
    eta = np.clip(eta, -LINEAR_PREDICTOR_CLAMP, LINEAR_PREDICTOR_CLAMP)
    return 1.0 / (1.0 + np.exp(-eta))


def logit(p: np.ndarray | float) -> np.ndarray | float:
    p = np.asarray(p, dtype=float)
    out = np.log(p) - np.log1p(-p)
    return out if out.shape else float(out)


@dataclass(frozen=True)
class DesignMatrix:
    """A dense design with named columns; the first column is the intercept."""

    values: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))
        if values.ndim != 2:
            raise ValueError("design must be 2-dimensional")
        n, p = values.shape
        if len(self.columns) != p:
            raise ValueError("column names do not match design width")
        if len(set(self.columns)) != p:
            raise ValueError("duplicate column names")
        if n < p:
            raise ValueError(f"need at least as many rows ({n}) as columns ({p})")
        if not np.isfinite(values).all():
            raise ValueError("design contains non-finite values")
        if self.columns[0] != INTERCEPT or not np.all(values[:, 0] == 1.0):
            raise ValueError("first column must be an all-ones intercept")

    @classmethod
    def from_columns(cls, columns: Mapping[str, np.ndarray]) -> "DesignMatrix":
        """Build a design from named covariate columns, prepending the intercept."""
        names = list(columns)
        if not names:
            raise ValueError("at least one covariate column is required")
        arrays = [np.asarray(columns[name], dtype=float) for name in names]
        n = arrays[0].shape[0]
        values = np.column_stack([np.ones(n)] + arrays)
        return cls(values, (INTERCEPT, *names))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FitResult:
    """Coefficients and convergence diagnostics of one logistic fit."""

    coefficients: dict[str, float]
    converged: bool
    iterations: int
    final_gradient_norm: float


def _log_likelihood(prob: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    # prob comes from the clamped expit, so it is strictly inside (0, 1)
    return float(np.sum(w * (y * np.log(prob) + (1.0 - y) * np.log1p(-prob))))


def fit_weighted_logistic(
    design: DesignMatrix,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    *,
    offset: np.ndarray | None = None,
    max_iter: int = MAX_ITER,
    tol: float = GRADIENT_TOL,
) -> FitResult:
    """Maximize the weighted Bernoulli likelihood by damped Newton steps.

    Raises SeparationError if any coefficient exceeds +/-30 during iteration,
    SingularDesignError if the information matrix cannot be solved, and
    DegenerateOutcomeError if y is constant on positively weighted rows.
    """
    X = design.values
    n, p = X.shape
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise ValueError("outcome length does not match design")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("outcome must be binary 0/1")

    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise ValueError("weights length does not match design")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("weights must be finite and nonnegative")
        if int((w > 0).sum()) < p:
            raise ValueError("fewer strictly positive weights than columns")

    if offset is None:
        off = np.zeros(n)
    else:
        off = np.asarray(offset, dtype=float)
        if off.shape != (n,):
            raise ValueError("offset length does not match design")
        if not np.isfinite(off).all():
            raise ValueError("offset contains non-finite values")

    active = w > 0
    y_active = y[active]
    if y_active.size == 0 or y_active.min() == y_active.max():
        raise DegenerateOutcomeError(
            "outcome is constant on positively weighted rows"
        )

    beta = np.zeros(p)
    prob = expit(off)
    ll = _log_likelihood(prob, y, w)
    iterations = 0
    grad_norm = np.inf

    for _ in range(max_iter):
        grad = X.T @ (w * (y - prob))
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            break
        info = X.T @ (X * (w * prob * (1.0 - prob))[:, None])
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError("information matrix is singular") from exc

        # step-halving: reject likelihood decreases, with slack proportional
        # to |ll| so float noise near the optimum cannot stall the iteration
        slack = 1e-9 * (1.0 + abs(ll))
        new_beta = beta + step
        new_prob = expit(X @ new_beta + off)
        new_ll = _log_likelihood(new_prob, y, w)
        halvings = 0
        while new_ll < ll - slack and halvings < 30:
            step *= 0.5
            new_beta = beta + step
            new_prob = expit(X @ new_beta + off)
            new_ll = _log_likelihood(new_prob, y, w)
            halvings += 1

        beta, prob, ll = new_beta, new_prob, new_ll
        iterations += 1
        if np.abs(beta).max() > COEF_BOUND:
            raise SeparationError(
                f"coefficient exceeded bound {COEF_BOUND}; data look separated"
            )
    else:
        grad = X.T @ (w * (y - prob))
        grad_norm = float(np.linalg.norm(grad))

    return FitResult(
        coefficients={name: float(b) for name, b in zip(design.columns, beta)},
        converged=bool(grad_norm < tol),
        iterations=iterations,
        final_gradient_norm=grad_norm,
    )


def linear_predictor(
    fit: FitResult, columns: Mapping[str, np.ndarray], n: int
) -> np.ndarray:
    """Vectorized X @ beta for named columns; the intercept is implicit."""
    eta = np.full(n, fit.coefficients.get(INTERCEPT, 0.0))
    for name, coef in fit.coefficients.items():
        if name == INTERCEPT:
            continue
        if name not in columns:
            raise SchemaError(f"prediction input missing term {name!r}")
        eta = eta + coef * np.asarray(columns[name], dtype=float)
    return eta


def predict_prob(fit: FitResult, row: Mapping[str, float]) -> float:
    """Predicted probability for a single row given as a term -> value map."""
    eta = fit.coefficients.get(INTERCEPT, 0.0)
    for name, coef in fit.coefficients.items():
        if name == INTERCEPT:
            continue
        if name not in row:
            raise SchemaError(f"row is missing term {name!r}")
        eta += coef * float(row[name])
    return float(expit(eta))
