"""Synthetic cohort generation for the treatment drop-in simulation.

One cohort is a cross-section of (x0, a0, x1, a1, y): a baseline covariate,
baseline treatment, a follow-up covariate, follow-up treatment (the drop-in),
and a binary outcome. Two scenario families are supported: a trial where
baseline treatment is randomized and untreated patients never start treatment,
and an observational setting where sicker patients are treated at both times.

Intercepts (alpha0, alpha1, alpha_y) are not free parameters; they are solved
by bisection against target marginal probabilities on a fixed Monte Carlo
sample so that treated fractions and outcome prevalence hit their targets.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np
import pandas as pd

from .logistic import expit

INTERCEPT_SOLVER_SEED = 615351172  # fixed internal stream for intercept solving
INTERCEPT_MC_DRAWS = 1_000_000
INTERCEPT_TOL = 0.002
_BRACKET = (-40.0, 40.0)

COHORT_CSV_COLUMNS = ("x0", "a0", "x1", "a1", "y")

RCT_NAME = "RCT: 10% dropout"
OBS50_NAME = "Observational: 50% treated"
OBS20_NAME = "Observational: 20% treated"


class ConfigError(ValueError):
    """A scenario configuration is inconsistent or unsolvable."""


class ScenarioKind(enum.Enum):
    RCT = "RCT"
    OBSERVATIONAL = "Observational"


class CohortMode(enum.Enum):
    DEVELOPMENT = "Development"
    TEST_MT = "TestMT"
    TEST_NTT = "TestNTT"


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one simulation scenario at one value of gamma.

    The alpha fields start as None and are filled by
    solve_scenario_intercepts; generation refuses unsolved configs.
    """

    name: str
    kind: ScenarioKind
    phi: float
    gamma: float = 0.0
    theta_rct: float | None = None
    theta_obs: float | None = None
    target_pa0: float = 0.5
    target_pa1: float | None = None
    target_py: float = 0.2
    beta_x0: float = np.log(1.5)
    beta_x1: float = np.log(1.5)
    beta_a0: float = np.log(0.5)
    beta_a1: float = np.log(0.5)
    n_dev: int = 10_000
    n_test: int = 100_000
    alpha0: float | None = None
    alpha1: float | None = None
    alpha_y: float | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("scenario name must be non-empty")
        if self.gamma > 0:
            raise ConfigError(f"gamma must be <= 0, got {self.gamma}")
        if self.kind is ScenarioKind.RCT:
            if self.theta_rct is None or not 0.0 <= self.theta_rct <= 1.0:
                raise ConfigError("RCT scenarios need theta_rct in [0, 1]")
            if self.theta_obs is not None:
                raise ConfigError("theta_obs is only valid for observational scenarios")
        else:
            if self.theta_obs is None:
                raise ConfigError("observational scenarios need theta_obs")
            if self.theta_rct is not None:
                raise ConfigError("theta_rct is only valid for RCT scenarios")
            if self.target_pa1 is None:
                raise ConfigError("observational scenarios need target_pa1")
        for label, target in (
            ("target_pa0", self.target_pa0),
            ("target_py", self.target_py),
        ):
            if not 0.0 < target < 1.0:
                raise ConfigError(f"{label} must lie strictly in (0, 1)")
        if self.target_pa1 is not None and not 0.0 < self.target_pa1 < 1.0:
            raise ConfigError("target_pa1 must lie strictly in (0, 1)")
        if self.n_dev < 1 or self.n_test < 1:
            raise ConfigError("cohort sizes must be positive")

    @property
    def solved(self) -> bool:
        if self.alpha0 is None or self.alpha_y is None:
            return False
        if self.kind is ScenarioKind.OBSERVATIONAL and self.alpha1 is None:
            return False
        return True

    def with_gamma(self, gamma: float) -> "ScenarioConfig":
        """Same scenario at another gamma, with intercepts cleared for re-solving."""
        return replace(self, gamma=gamma, alpha0=None, alpha1=None, alpha_y=None)


def rct_10pct_dropout(**overrides) -> ScenarioConfig:
    """Randomized baseline treatment (50%), 10% of the treated drop out."""
    defaults = dict(
        name=RCT_NAME,
        kind=ScenarioKind.RCT,
        phi=0.0,
        theta_rct=0.9,
        target_pa0=0.5,
        target_pa1=None,
        target_py=0.2,
    )
    defaults.update(overrides)
    return ScenarioConfig(**defaults)


def observational_50(**overrides) -> ScenarioConfig:
    """Confounded treatment, 50% treated at each timepoint."""
    defaults = dict(
        name=OBS50_NAME,
        kind=ScenarioKind.OBSERVATIONAL,
        phi=np.log(2.0),
        theta_obs=np.log(2.0),
        target_pa0=0.5,
        target_pa1=0.5,
        target_py=0.2,
    )
    defaults.update(overrides)
    return ScenarioConfig(**defaults)


def observational_20(**overrides) -> ScenarioConfig:
    """Confounded treatment, 20% treated at each timepoint."""
    defaults = dict(
        name=OBS20_NAME,
        kind=ScenarioKind.OBSERVATIONAL,
        phi=np.log(2.0),
        theta_obs=np.log(2.0),
        target_pa0=0.2,
        target_pa1=0.2,
        target_py=0.2,
    )
    defaults.update(overrides)
    return ScenarioConfig(**defaults)


def default_scenarios() -> tuple[ScenarioConfig, ScenarioConfig, ScenarioConfig]:
    return (rct_10pct_dropout(), observational_50(), observational_20())


def _solve_on_sample(
    target_prob: float, lp_sample: np.ndarray, tol: float
) -> float:
    """Bisect alpha so that mean(expit(alpha + lp_sample)) hits target_prob."""
    lo, hi = _BRACKET

    def marginal(alpha: float) -> float:
        return float(np.mean(expit(alpha + lp_sample)))

    if not marginal(lo) <= target_prob <= marginal(hi):
        raise ConfigError(
            f"target probability {target_prob} is unreachable within alpha "
            f"bracket {_BRACKET}"
        )
    while hi - lo > 1e-7:
        mid = 0.5 * (lo + hi)
        if marginal(mid) < target_prob:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    if abs(marginal(alpha) - target_prob) > tol:
        raise ConfigError(
            f"intercept solver did not reach target {target_prob} within "
            f"tolerance {tol}"
        )
    return alpha


def solve_intercept(
    target_prob: float,
    draw_linear_predictor: Callable[[int], np.ndarray],
    *,
    n_mc: int = INTERCEPT_MC_DRAWS,
    tol: float = INTERCEPT_TOL,
) -> float:
    """Solve alpha with E[expit(alpha + L)] = target_prob by Monte Carlo bisection.

    The sampler is called once for n_mc draws of the non-intercept linear
    predictor L; the result is deterministic given the sampler's seed.
    """
    if not 0.0 < target_prob < 1.0:
        raise ConfigError("target probability must lie strictly in (0, 1)")
    lp_sample = np.asarray(draw_linear_predictor(n_mc), dtype=float)
    if lp_sample.shape != (n_mc,):
        raise ConfigError("sampler must return n_mc draws")
    if not np.isfinite(lp_sample).all():
        raise ConfigError("sampler returned non-finite draws")
    return _solve_on_sample(target_prob, lp_sample, tol)


def solve_scenario_intercepts(
    config: ScenarioConfig,
    *,
    n_mc: int = INTERCEPT_MC_DRAWS,
    tol: float = INTERCEPT_TOL,
    seed: int = INTERCEPT_SOLVER_SEED,
) -> ScenarioConfig:
    """Fill alpha0 (then alpha1 for observational, then alpha_y) sequentially.

    Each intercept is solved on Monte Carlo trajectories generated with the
    intercepts already solved upstream, so every target is hit under the full
    mechanism at this config's gamma.
    """
    ss = np.random.SeedSequence(seed)
    r_x0, r_a0, r_x1, r_a1 = (np.random.default_rng(s) for s in ss.spawn(4))
    x0 = r_x0.standard_normal(n_mc)

    alpha0 = _solve_on_sample(config.target_pa0, config.phi * x0, tol)
    a0 = (r_a0.random(n_mc) < expit(alpha0 + config.phi * x0)).astype(float)
    x1 = x0 + config.gamma * a0 + r_x1.standard_normal(n_mc)

    if config.kind is ScenarioKind.RCT:
        alpha1 = None
        a1 = ((r_a1.random(n_mc) < config.theta_rct) & (a0 == 1.0)).astype(float)
    else:
        lp_a1 = config.phi * x1 + config.theta_obs * a0
        alpha1 = _solve_on_sample(config.target_pa1, lp_a1, tol)
        a1 = (r_a1.random(n_mc) < expit(alpha1 + lp_a1)).astype(float)

    lp_y = (
        config.beta_x0 * x0
        + config.beta_x1 * x1
        + config.beta_a0 * a0
        + config.beta_a1 * a1
    )
    alpha_y = _solve_on_sample(config.target_py, lp_y, tol)
    return replace(config, alpha0=alpha0, alpha1=alpha1, alpha_y=alpha_y)


class CohortRow(NamedTuple):
    x0: float
    a0: int
    x1: float
    a1: int
    y: int


@dataclass(frozen=True)
class Cohort:
    """Columnar cohort data plus generation metadata."""

    x0: np.ndarray
    a0: np.ndarray
    x1: np.ndarray
    a1: np.ndarray
    y: np.ndarray
    scenario: str
    gamma: float
    seed: object
    mode: CohortMode

    def __post_init__(self) -> None:
        n = self.x0.shape[0]
        for name in ("a0", "x1", "a1", "y"):
            if getattr(self, name).shape != (n,):
                raise ValueError("cohort columns must share one length")
        for name in ("a0", "a1", "y"):
            column = getattr(self, name)
            if not np.isin(column, (0, 1)).all():
                raise ValueError(f"{name} must be binary")

    def __len__(self) -> int:
        return self.x0.shape[0]

    def row(self, i: int) -> CohortRow:
        return CohortRow(
            float(self.x0[i]), int(self.a0[i]), float(self.x1[i]),
            int(self.a1[i]), int(self.y[i]),
        )

    def subset(self, mask: np.ndarray) -> "Cohort":
        return Cohort(
            x0=self.x0[mask], a0=self.a0[mask], x1=self.x1[mask],
            a1=self.a1[mask], y=self.y[mask],
            scenario=self.scenario, gamma=self.gamma, seed=self.seed,
            mode=self.mode,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {name: getattr(self, name) for name in COHORT_CSV_COLUMNS}
        )

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def _require_solved(config: ScenarioConfig) -> None:
    if not config.solved:
        raise ConfigError(
            "scenario intercepts are unsolved; call solve_scenario_intercepts first"
        )


def _generate(
    config: ScenarioConfig,
    seed: int | np.random.SeedSequence,
    n: int,
    mode: CohortMode,
    *,
    withhold_treatment: bool = False,
) -> Cohort:
    _require_solved(config)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    # one substream per variable: changing n or skipping a draw never shifts
    # the streams of the other variables
    r_x0, r_a0, r_x1, r_a1, r_y = (np.random.default_rng(s) for s in ss.spawn(5))

    x0 = r_x0.standard_normal(n)
    if withhold_treatment:
        a0 = np.zeros(n, dtype=np.int8)
    else:
        a0 = (r_a0.random(n) < expit(config.alpha0 + config.phi * x0)).astype(np.int8)
    x1 = x0 + config.gamma * a0 + r_x1.standard_normal(n)
    if withhold_treatment:
        a1 = np.zeros(n, dtype=np.int8)
    elif config.kind is ScenarioKind.RCT:
        # untreated at baseline stay untreated; the treated continue w.p. theta
        a1 = ((r_a1.random(n) < config.theta_rct) & (a0 == 1)).astype(np.int8)
    else:
        lp_a1 = config.alpha1 + config.phi * x1 + config.theta_obs * a0
        a1 = (r_a1.random(n) < expit(lp_a1)).astype(np.int8)

    lp_y = (
        config.alpha_y
        + config.beta_x0 * x0
        + config.beta_x1 * x1
        + config.beta_a0 * a0
        + config.beta_a1 * a1
    )
    y = (r_y.random(n) < expit(lp_y)).astype(np.int8)
    return Cohort(
        x0=x0, a0=a0, x1=x1, a1=a1, y=y,
        scenario=config.name, gamma=config.gamma, seed=ss, mode=mode,
    )


def generate_development(
    config: ScenarioConfig, seed: int | np.random.SeedSequence
) -> Cohort:
    return _generate(config, seed, config.n_dev, CohortMode.DEVELOPMENT)


def generate_test_mt(
    config: ScenarioConfig, seed: int | np.random.SeedSequence
) -> Cohort:
    """Test set drawn from the same mechanism as development (mixed treatment)."""
    return _generate(config, seed, config.n_test, CohortMode.TEST_MT)


def generate_test_ntt(
    config: ScenarioConfig, seed: int | np.random.SeedSequence
) -> Cohort:
    """Counterfactual test set with treatment withheld at both timepoints."""
    return _generate(
        config, seed, config.n_test, CohortMode.TEST_NTT, withhold_treatment=True
    )


def filter_nbt(cohort: Cohort) -> Cohort:
    """Baseline-untreated subset of a mixed-treatment test cohort."""
    if cohort.mode is not CohortMode.TEST_MT:
        raise ValueError("the baseline-untreated filter applies to TestMT cohorts")
    return cohort.subset(cohort.a0 == 0)
