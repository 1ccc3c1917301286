"""Command-line interface.

Subcommands:

- run:       execute an experiment plan and write all outputs to a directory
- summarize: recompute summary.csv from an existing results.csv
- report:    extract one figure's plot-ready CSV from a summary.csv

`run` builds its plan from defaults, then an optional YAML/JSON config file,
then explicit flags (strongest). Scenario entries in the config merge onto
the built-in scenario of the same name, or define a new scenario outright.
"""
from __future__ import annotations

import argparse
import os
import sys

import yaml

from .cohort import (
    ConfigError,
    OBS20_NAME,
    OBS50_NAME,
    RCT_NAME,
    ScenarioConfig,
    ScenarioKind,
    generate_development,
    generate_test_mt,
    generate_test_ntt,
    observational_20,
    observational_50,
    rct_10pct_dropout,
    solve_scenario_intercepts,
)
from .harness import (
    DEFAULT_MASTER_SEED,
    ExperimentPlan,
    PROFILES,
    run_experiment,
    summarize_results,
)
from .ipw import TreatmentHistoryTable, compute_stabilized_weights, fit_treatment_models
from .outputs import (
    FIGURE_FILES,
    RESULTS_FILE,
    SUMMARY_FILE,
    read_results,
    read_summary,
    write_figure,
)

_PRESETS = {
    RCT_NAME: rct_10pct_dropout,
    OBS50_NAME: observational_50,
    OBS20_NAME: observational_20,
}

_PLAN_KEYS = {
    "master_seed", "iterations", "gamma_grid", "thresholds", "workers",
    "msm_interactions", "resolve_intercepts_per_gamma", "intercept_mc",
    "intercept_tol",
}

_SCENARIO_KEYS = {
    "kind", "phi", "theta_rct", "theta_obs", "target_pa0", "target_pa1",
    "target_py", "beta_x0", "beta_x1", "beta_a0", "beta_a1", "n_dev", "n_test",
}


def _scenario_from_entry(entry: dict) -> ScenarioConfig:
    entry = dict(entry)
    name = entry.pop("name", None)
    if not name:
        raise ConfigError("every scenario entry needs a name")
    unknown = set(entry) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys for {name!r}: {sorted(unknown)}")
    if "kind" in entry:
        try:
            entry["kind"] = ScenarioKind(entry["kind"])
        except ValueError:
            raise ConfigError(
                f"scenario kind must be one of {[k.value for k in ScenarioKind]}"
            ) from None
    if name in _PRESETS:
        return _PRESETS[name](**entry)
    if "kind" not in entry:
        raise ConfigError(f"new scenario {name!r} needs an explicit kind")
    return ScenarioConfig(name=name, **entry)


def load_config(path: str) -> dict:
    with open(path) as handle:
        config = yaml.safe_load(handle)
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ConfigError("config file must hold a mapping at the top level")
    return config


def build_plan(
    config: dict | None = None,
    *,
    profile: str | None = None,
    master_seed: int | None = None,
    workers: int | None = None,
) -> ExperimentPlan:
    """Assemble a plan: defaults, then config file keys, then explicit flags."""
    config = dict(config or {})
    config_profile = config.pop("profile", None)
    scenarios_entry = config.pop("scenarios", None)

    unknown = set(config) - _PLAN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    effective_profile = profile or config_profile or "desk"
    if effective_profile not in PROFILES:
        raise ConfigError(
            f"unknown profile {effective_profile!r}; choose from {sorted(PROFILES)}"
        )

    fields: dict = {"iterations": PROFILES[effective_profile]}
    fields.update(config)
    if scenarios_entry is not None:
        if not isinstance(scenarios_entry, list) or not scenarios_entry:
            raise ConfigError("scenarios must be a non-empty list of mappings")
        fields["scenarios"] = tuple(
            _scenario_from_entry(entry) for entry in scenarios_entry
        )
    if master_seed is not None:
        fields["master_seed"] = master_seed
    if workers is not None:
        fields["workers"] = workers
    try:
        return ExperimentPlan(**fields)
    except TypeError as exc:
        raise ConfigError(f"invalid plan field: {exc}") from None


def _dump_debug_artifacts(plan: ExperimentPlan, out_dir: str) -> None:
    """First cell, first iteration: cohorts and per-individual MSM weights."""
    import numpy as np

    debug_dir = os.path.join(out_dir, "debug")
    os.makedirs(debug_dir, exist_ok=True)
    config = solve_scenario_intercepts(
        plan.scenarios[0].with_gamma(plan.gamma_grid[0]),
        n_mc=plan.intercept_mc, tol=plan.intercept_tol,
    )
    ss = np.random.SeedSequence(plan.master_seed, spawn_key=(0, 0, 0))
    seed_dev, seed_mt, seed_ntt = ss.spawn(3)
    development = generate_development(config, seed_dev)
    development.to_csv(os.path.join(debug_dir, "development.csv"))
    generate_test_mt(config, seed_mt).to_csv(os.path.join(debug_dir, "test_mt.csv"))
    generate_test_ntt(config, seed_ntt).to_csv(os.path.join(debug_dir, "test_ntt.csv"))
    history = TreatmentHistoryTable.from_cohort(development)
    weights = compute_stabilized_weights(history, fit_treatment_models(history))
    weights.to_csv(os.path.join(debug_dir, "msm_weights.csv"))


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else None
    plan = build_plan(
        config, profile=args.profile, master_seed=args.seed, workers=args.workers
    )
    cells = len(plan.scenarios) * len(plan.gamma_grid)
    print(
        f"running {cells} cells x {plan.iterations} iterations "
        f"(seed {plan.master_seed}, {plan.workers} worker(s))"
    )
    result = run_experiment(plan, out_dir=args.out)
    if args.dump_debug:
        _dump_debug_artifacts(plan, args.out)
    failed = sum(1 for o in result.outcomes if o.error is not None)
    print(
        f"done in {result.wall_seconds:.1f} s; {len(result.results)} records, "
        f"{failed} failed iteration(s); outputs in {args.out}"
    )
    if "DEGRADED RUN" in result.report:
        print("warning: degraded run, see run_report.txt")
        return 1
    return 0


def _cmd_summarize(args: argparse.Namespace) -> int:
    results = read_results(args.results)
    summary = summarize_results(results)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, SUMMARY_FILE)
    summary.to_csv(path, index=False)
    print(f"wrote {path} ({len(summary)} groups)")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    summary = read_summary(args.summary)
    path = write_figure(summary, args.figure, args.out)
    print(f"wrote {path}")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dropinsim",
        description="Treatment drop-in simulation study: run, summarize, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment plan")
    run.add_argument("--config", help="YAML/JSON plan overrides")
    run.add_argument(
        "--profile", choices=sorted(PROFILES),
        help="iteration preset (desk=200, full=1000); default desk",
    )
    run.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_MASTER_SEED})")
    run.add_argument("--workers", type=int, help="worker processes (default 1)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument(
        "--dump-debug", action="store_true",
        help="also write first-iteration cohorts and MSM weights",
    )
    run.set_defaults(handler=_cmd_run)

    summarize = sub.add_parser(
        "summarize", help="recompute summary.csv from a results.csv"
    )
    summarize.add_argument("--results", required=True, help=f"path to {RESULTS_FILE}")
    summarize.add_argument("--out", required=True, help="output directory")
    summarize.set_defaults(handler=_cmd_summarize)

    report = sub.add_parser("report", help="extract one figure's plot-ready CSV")
    report.add_argument("--summary", required=True, help=f"path to {SUMMARY_FILE}")
    report.add_argument(
        "--figure", required=True, choices=sorted(FIGURE_FILES),
        help="figure id",
    )
    report.add_argument("--out", required=True, help="output directory")
    report.set_defaults(handler=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
