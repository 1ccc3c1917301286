"""Monte Carlo experiment harness.

An experiment plan is a grid of scenarios x gamma values, each cell run for a
fixed number of iterations. One iteration generates a development cohort and
two test cohorts, fits all four strategies, and evaluates each in three
performance settings: MT (the full mixed-treatment test set), NBT (its
baseline-untreated subset), and NTT (the withheld-treatment test set, where
predictions are the never-treated counterfactual risk E3). Allocation curves
are computed on the NTT risks.

Reproducibility contract: the cohort seeds for cell (s, g) iteration i derive
from SeedSequence(master_seed, spawn_key=(s, g, i)), so results are identical
for any worker count, and merged output order is deterministic.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from multiprocessing import Pool
from typing import Iterable, NamedTuple

import numpy as np
import pandas as pd

from .cohort import (
    ConfigError,
    ScenarioConfig,
    default_scenarios,
    filter_nbt,
    generate_development,
    generate_test_mt,
    generate_test_ntt,
    solve_scenario_intercepts,
)
from .ipw import PositivityError, WeightSummary
from .logistic import FitError
from .metrics import (
    ConstantPredictorError,
    DEFAULT_THRESHOLDS,
    PredictionSet,
    allocation_curve,
    auc,
    brier,
    calibration,
)
from .strategies import (
    EmptySubsetError,
    EstimandKind,
    STRATEGY_ORDER,
    StrategyKind,
    fit_strategy,
    predict_observed,
    predict_risk,
)

DEFAULT_GAMMA_GRID = (-3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0)
DEFAULT_MASTER_SEED = 20260815
PROFILES = {"desk": 200, "full": 1000}

SETTING_MT = "MT"
SETTING_NBT = "NBT"
SETTING_NTT = "NTT"
SETTINGS = (SETTING_MT, SETTING_NBT, SETTING_NTT)

METRIC_CAL_INTERCEPT = "cal_intercept"
METRIC_CAL_SLOPE = "cal_slope"
METRIC_CITL_OFFSET = "citl_offset"
METRIC_AUC = "auc"
METRIC_BRIER = "brier"
METRIC_ALLOCATION = "allocation"
SCALAR_METRICS = (
    METRIC_CAL_INTERCEPT,
    METRIC_CAL_SLOPE,
    METRIC_CITL_OFFSET,
    METRIC_AUC,
    METRIC_BRIER,
)

RESULT_COLUMNS = (
    "scenario", "gamma", "iteration", "strategy", "setting",
    "metric", "threshold", "value",
)
SUMMARY_COLUMNS = (
    "scenario", "gamma", "strategy", "setting", "metric", "threshold",
    "mean", "sd", "se", "n",
)

# errors that mark one iteration as failed instead of aborting the run
RECOVERABLE_ERRORS = (
    FitError,
    PositivityError,
    EmptySubsetError,
    ConstantPredictorError,
    ConfigError,
    np.linalg.LinAlgError,
)


class ResultRecord(NamedTuple):
    scenario: str
    gamma: float
    iteration: int
    strategy: str
    setting: str
    metric: str
    threshold: float  # NaN for scalar metrics
    value: float


@dataclass(frozen=True)
class IterationOutcome:
    scenario: str
    gamma: float
    iteration: int
    records: tuple[ResultRecord, ...]
    msm_weight_summary: WeightSummary | None
    error: str | None


@dataclass(frozen=True)
class ExperimentPlan:
    scenarios: tuple[ScenarioConfig, ...] = field(default_factory=default_scenarios)
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    iterations: int = PROFILES["desk"]
    master_seed: int = DEFAULT_MASTER_SEED
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    workers: int = 1
    msm_interactions: bool = False
    resolve_intercepts_per_gamma: bool = True
    intercept_mc: int = 1_000_000
    intercept_tol: float = 0.002

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if not self.scenarios:
            raise ConfigError("plan needs at least one scenario")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError("scenario names must be unique")
        if not self.gamma_grid:
            raise ConfigError("plan needs at least one gamma")
        if any(g > 0 for g in self.gamma_grid):
            raise ConfigError("gamma values must be <= 0")
        if len(set(self.gamma_grid)) != len(self.gamma_grid):
            raise ConfigError("gamma values must be distinct")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if any(not 0.0 <= t <= 1.0 for t in self.thresholds):
            raise ConfigError("thresholds must lie in [0, 1]")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ConfigError("thresholds must be strictly increasing")


def default_plan(
    profile: str = "desk",
    *,
    master_seed: int = DEFAULT_MASTER_SEED,
    workers: int = 1,
) -> ExperimentPlan:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    return ExperimentPlan(
        iterations=PROFILES[profile], master_seed=master_seed, workers=workers
    )


def _evaluate_observed(
    records: list[ResultRecord],
    base: tuple[str, float, int, str],
    setting: str,
    predictions: np.ndarray,
    outcomes: np.ndarray,
) -> None:
    prediction_set = PredictionSet.from_probabilities(predictions, outcomes)
    cal = calibration(prediction_set)
    scenario, gamma, iteration, strategy = base
    for metric, value in (
        (METRIC_CAL_INTERCEPT, cal.intercept),
        (METRIC_CAL_SLOPE, cal.slope),
        (METRIC_CITL_OFFSET, cal.citl_offset),
        (METRIC_AUC, auc(prediction_set)),
        (METRIC_BRIER, brier(prediction_set)),
    ):
        records.append(ResultRecord(
            scenario, gamma, iteration, strategy, setting, metric, np.nan, value
        ))


def run_iteration(
    scenario: ScenarioConfig,
    iteration_index: int,
    master_seed: int,
    *,
    scenario_index: int = 0,
    gamma_index: int = 0,
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
    msm_interactions: bool = False,
) -> IterationOutcome:
    """One simulation iteration for a solved scenario config.

    Cohort seeds derive from (master_seed, scenario_index, gamma_index,
    iteration_index), making the outcome a pure function of its arguments.
    """
    ss = np.random.SeedSequence(
        master_seed, spawn_key=(scenario_index, gamma_index, iteration_index)
    )
    seed_dev, seed_mt, seed_ntt = ss.spawn(3)
    gamma = float(scenario.gamma)
    records: list[ResultRecord] = []
    weight_summary: WeightSummary | None = None
    try:
        development = generate_development(scenario, seed_dev)
        test_mt = generate_test_mt(scenario, seed_mt)
        test_nbt = filter_nbt(test_mt)
        test_ntt = generate_test_ntt(scenario, seed_ntt)

        for kind in STRATEGY_ORDER:
            model = fit_strategy(kind, development, interactions=msm_interactions)
            if kind is StrategyKind.MSM:
                weight_summary = model.weight_summary
            base = (scenario.name, gamma, iteration_index, kind.value)

            mt_predictions = predict_observed(model, test_mt)
            _evaluate_observed(
                records, base, SETTING_MT, mt_predictions, test_mt.y.astype(float)
            )
            nbt_predictions = predict_observed(model, test_nbt)
            _evaluate_observed(
                records, base, SETTING_NBT, nbt_predictions, test_nbt.y.astype(float)
            )
            ntt_risks = np.asarray(
                predict_risk(model, test_ntt.x0, EstimandKind.E3)
            )
            _evaluate_observed(
                records, base, SETTING_NTT, ntt_risks, test_ntt.y.astype(float)
            )
            for threshold, proportion in allocation_curve(ntt_risks, thresholds):
                records.append(ResultRecord(
                    scenario.name, gamma, iteration_index, kind.value,
                    SETTING_NTT, METRIC_ALLOCATION, threshold, proportion,
                ))
    except RECOVERABLE_ERRORS as exc:
        return IterationOutcome(
            scenario=scenario.name, gamma=gamma, iteration=iteration_index,
            records=(), msm_weight_summary=None,
            error=f"{type(exc).__name__}: {exc}",
        )
    return IterationOutcome(
        scenario=scenario.name, gamma=gamma, iteration=iteration_index,
        records=tuple(records), msm_weight_summary=weight_summary, error=None,
    )


def _run_task(task) -> IterationOutcome:
    scenario, iteration_index, master_seed, s_idx, g_idx, thresholds, interactions = task
    return run_iteration(
        scenario, iteration_index, master_seed,
        scenario_index=s_idx, gamma_index=g_idx,
        thresholds=thresholds, msm_interactions=interactions,
    )


def solve_plan_cells(plan: ExperimentPlan) -> dict[tuple[int, int], ScenarioConfig]:
    """Solved config per (scenario index, gamma index) cell.

    With resolve_intercepts_per_gamma off, each scenario is solved once at
    gamma = 0 and those intercepts are reused across the grid.
    """
    solved: dict[tuple[int, int], ScenarioConfig] = {}
    for s_idx, scenario in enumerate(plan.scenarios):
        if plan.resolve_intercepts_per_gamma:
            for g_idx, gamma in enumerate(plan.gamma_grid):
                solved[(s_idx, g_idx)] = solve_scenario_intercepts(
                    scenario.with_gamma(gamma),
                    n_mc=plan.intercept_mc, tol=plan.intercept_tol,
                )
        else:
            anchor = solve_scenario_intercepts(
                scenario.with_gamma(0.0),
                n_mc=plan.intercept_mc, tol=plan.intercept_tol,
            )
            for g_idx, gamma in enumerate(plan.gamma_grid):
                solved[(s_idx, g_idx)] = replace(
                    anchor.with_gamma(gamma),
                    alpha0=anchor.alpha0, alpha1=anchor.alpha1,
                    alpha_y=anchor.alpha_y,
                )
    return solved


@dataclass(frozen=True)
class ExperimentResult:
    plan: ExperimentPlan
    results: pd.DataFrame
    summary: pd.DataFrame
    outcomes: tuple[IterationOutcome, ...]
    report: str
    wall_seconds: float


def results_frame(records: Iterable[ResultRecord]) -> pd.DataFrame:
    frame = pd.DataFrame(list(records), columns=RESULT_COLUMNS)
    return frame.astype({
        "gamma": float, "iteration": int, "threshold": float, "value": float,
    })


def summarize_results(results: pd.DataFrame) -> pd.DataFrame:
    """Across-iteration mean, SD, and SE of the mean per result group.

    Group order follows first appearance in the results frame, so the summary
    is deterministic for a deterministically ordered input.
    """
    if list(results.columns) != list(RESULT_COLUMNS):
        raise ValueError(f"results must have columns {RESULT_COLUMNS}")
    if results.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    keys = ["scenario", "gamma", "strategy", "setting", "metric", "threshold"]
    grouped = results.groupby(keys, sort=False, dropna=False)["value"]
    summary = grouped.agg(mean="mean", sd=lambda v: v.std(ddof=1), n="count")
    summary["se"] = summary["sd"] / np.sqrt(summary["n"])
    summary = summary.reset_index()
    summary["n"] = summary["n"].astype(int)
    return summary[list(SUMMARY_COLUMNS)]


def _format_weight_line(summaries: list[WeightSummary]) -> str:
    mean = np.mean([s.mean for s in summaries])
    minimum = min(s.minimum for s in summaries)
    maximum = max(s.maximum for s in summaries)
    p01 = np.mean([s.p01 for s in summaries])
    p99 = np.mean([s.p99 for s in summaries])
    return (
        f"sw mean={mean:.4f} min={minimum:.4f} p01={p01:.4f} "
        f"p99={p99:.4f} max={maximum:.4f}"
    )


def build_report(
    plan: ExperimentPlan,
    solved: dict[tuple[int, int], ScenarioConfig],
    outcomes: tuple[IterationOutcome, ...],
    wall_seconds: float,
) -> str:
    lines = ["treatment drop-in simulation: run report", ""]
    lines.append(f"master seed:       {plan.master_seed}")
    lines.append(f"iterations/cell:   {plan.iterations}")
    lines.append(f"workers:           {plan.workers}")
    lines.append(f"gamma grid:        {list(plan.gamma_grid)}")
    lines.append(f"thresholds:        {list(plan.thresholds)}")
    lines.append(f"msm interactions:  {plan.msm_interactions}")
    lines.append(
        f"intercepts:        {'re-solved per gamma' if plan.resolve_intercepts_per_gamma else 'solved at gamma=0 and held fixed'}"
        f" (mc={plan.intercept_mc}, tol={plan.intercept_tol})"
    )
    lines.append(f"wall time:         {wall_seconds:.1f} s")
    lines.append("")

    degraded_cells = []
    for s_idx, scenario in enumerate(plan.scenarios):
        lines.append(f"scenario: {scenario.name}")
        for g_idx, gamma in enumerate(plan.gamma_grid):
            config = solved[(s_idx, g_idx)]
            cell = [
                o for o in outcomes
                if o.scenario == scenario.name and o.gamma == float(gamma)
            ]
            failures = [o for o in cell if o.error is not None]
            alpha1 = "none" if config.alpha1 is None else f"{config.alpha1:.4f}"
            lines.append(
                f"  gamma={gamma:g}: alpha0={config.alpha0:.4f} "
                f"alpha1={alpha1} alpha_y={config.alpha_y:.4f}; "
                f"iterations ok={len(cell) - len(failures)} failed={len(failures)}"
            )
            weight_summaries = [
                o.msm_weight_summary for o in cell if o.msm_weight_summary is not None
            ]
            if weight_summaries:
                lines.append(f"    {_format_weight_line(weight_summaries)}")
            if failures:
                counts: dict[str, int] = {}
                for o in failures:
                    counts[o.error] = counts.get(o.error, 0) + 1
                for message, count in sorted(counts.items()):
                    lines.append(f"    failure x{count}: {message}")
            if len(failures) > 0.05 * max(len(cell), 1):
                degraded_cells.append((scenario.name, gamma))
        lines.append("")

    if degraded_cells:
        lines.append("DEGRADED RUN: cells with >5% failed iterations:")
        for name, gamma in degraded_cells:
            lines.append(f"  {name} at gamma={gamma:g}")
    else:
        lines.append("no degraded cells (all cells within the 5% failure budget)")
    lines.append("")
    return "\n".join(lines)


def run_experiment(
    plan: ExperimentPlan, out_dir: str | None = None
) -> ExperimentResult:
    """Execute the full plan; optionally emit all output files to out_dir."""
    start = time.perf_counter()
    solved = solve_plan_cells(plan)
    tasks = [
        (
            solved[(s_idx, g_idx)], iteration, plan.master_seed,
            s_idx, g_idx, plan.thresholds, plan.msm_interactions,
        )
        for s_idx in range(len(plan.scenarios))
        for g_idx in range(len(plan.gamma_grid))
        for iteration in range(plan.iterations)
    ]

    if plan.workers == 1:
        outcomes = tuple(_run_task(task) for task in tasks)
    else:
        chunksize = max(1, len(tasks) // (plan.workers * 8))
        with Pool(processes=plan.workers) as pool:
            # imap preserves task order, keeping the merge deterministic
            outcomes = tuple(pool.imap(_run_task, tasks, chunksize=chunksize))

    records: list[ResultRecord] = []
    for outcome in outcomes:
        records.extend(outcome.records)
    results = results_frame(records)
    summary = summarize_results(results)
    wall_seconds = time.perf_counter() - start
    report = build_report(plan, solved, outcomes, wall_seconds)
    result = ExperimentResult(
        plan=plan, results=results, summary=summary,
        outcomes=outcomes, report=report, wall_seconds=wall_seconds,
    )
    if out_dir is not None:
        from .outputs import emit_outputs

        emit_outputs(result, out_dir)
    return result
