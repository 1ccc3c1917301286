"""Output files: results, summaries, run report, and plot-ready figure CSVs.

Figure CSVs are long-format tables carrying the summary statistics a plotting
script needs, one file per figure:

- figure 3: calibration intercept by scenario, setting, gamma, strategy
- figure 4: calibration slope, same layout
- figure 5: allocation curves, observational 50% treated scenario
- figure S1: AUC and Brier by setting and gamma, RCT scenario
- figure S2: allocation curves, RCT scenario
- figure S3: allocation curves, observational 20% treated scenario

Allocation figures keep the decluttered gamma subset (the half-integer gammas
-2.5, -1.5, -0.5 are dropped when present).
"""
from __future__ import annotations

import os

import pandas as pd

from .cohort import OBS20_NAME, OBS50_NAME, RCT_NAME
from .harness import (
    ExperimentResult,
    METRIC_ALLOCATION,
    METRIC_AUC,
    METRIC_BRIER,
    METRIC_CAL_INTERCEPT,
    METRIC_CAL_SLOPE,
    SUMMARY_COLUMNS,
)

RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.csv"
REPORT_FILE = "run_report.txt"

ALLOCATION_GAMMA_DROP = (-2.5, -1.5, -0.5)

FIGURE_FILES = {
    "3": "fig3_calibration_intercept.csv",
    "4": "fig4_calibration_slope.csv",
    "5": "fig5_allocation_obs50.csv",
    "S1": "figS1_auc_brier_rct.csv",
    "S2": "figS2_allocation_rct.csv",
    "S3": "figS3_allocation_obs20.csv",
}

_CALIBRATION_COLUMNS = ["scenario", "setting", "gamma", "strategy", "mean", "se"]
_ALLOCATION_COLUMNS = ["gamma", "strategy", "threshold", "mean", "se"]
_AUC_BRIER_COLUMNS = ["setting", "gamma", "strategy", "metric", "mean", "se"]


def read_results(path) -> pd.DataFrame:
    """Read a results.csv with exact float round-tripping.

    The default csv float parser can be one ulp off, which would break
    re-summarization byte-for-byte; the round_trip parser restores the exact
    written values.
    """
    return pd.read_csv(path, float_precision="round_trip")


def read_summary(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def _check_summary(summary: pd.DataFrame) -> None:
    if list(summary.columns) != list(SUMMARY_COLUMNS):
        raise ValueError(f"summary must have columns {SUMMARY_COLUMNS}")


def _calibration_figure(summary: pd.DataFrame, metric: str) -> pd.DataFrame:
    rows = summary[summary["metric"] == metric]
    return rows[_CALIBRATION_COLUMNS].reset_index(drop=True)


def _allocation_figure(summary: pd.DataFrame, scenario: str) -> pd.DataFrame:
    rows = summary[
        (summary["metric"] == METRIC_ALLOCATION)
        & (summary["scenario"] == scenario)
        & (~summary["gamma"].isin(ALLOCATION_GAMMA_DROP))
    ]
    return rows[_ALLOCATION_COLUMNS].reset_index(drop=True)


def _auc_brier_figure(summary: pd.DataFrame, scenario: str) -> pd.DataFrame:
    rows = summary[
        summary["metric"].isin([METRIC_AUC, METRIC_BRIER])
        & (summary["scenario"] == scenario)
    ]
    return rows[_AUC_BRIER_COLUMNS].reset_index(drop=True)


def figure_table(summary: pd.DataFrame, figure: str) -> pd.DataFrame:
    """Plot-ready table for one figure id ('3', '4', '5', 'S1', 'S2', 'S3')."""
    _check_summary(summary)
    if figure == "3":
        return _calibration_figure(summary, METRIC_CAL_INTERCEPT)
    if figure == "4":
        return _calibration_figure(summary, METRIC_CAL_SLOPE)
    if figure == "5":
        return _allocation_figure(summary, OBS50_NAME)
    if figure == "S1":
        return _auc_brier_figure(summary, RCT_NAME)
    if figure == "S2":
        return _allocation_figure(summary, RCT_NAME)
    if figure == "S3":
        return _allocation_figure(summary, OBS20_NAME)
    raise ValueError(f"unknown figure {figure!r}; choose from {sorted(FIGURE_FILES)}")


def write_figure(summary: pd.DataFrame, figure: str, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, FIGURE_FILES[figure])
    figure_table(summary, figure).to_csv(path, index=False)
    return path


def emit_outputs(result: ExperimentResult, out_dir: str) -> None:
    """Write results.csv, summary.csv, run_report.txt, and all figure CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    result.results.to_csv(os.path.join(out_dir, RESULTS_FILE), index=False)
    result.summary.to_csv(os.path.join(out_dir, SUMMARY_FILE), index=False)
    with open(os.path.join(out_dir, REPORT_FILE), "w") as handle:
        handle.write(result.report)
    for figure in FIGURE_FILES:
        write_figure(result.summary, figure, out_dir)
