"""Simulation and estimation toolkit for treatment drop-in bias in clinical
prediction models, including a marginal structural model fitted with
stabilized inverse-probability-of-treatment weights."""

from .cohort import (
    Cohort,
    CohortMode,
    ConfigError,
    ScenarioConfig,
    ScenarioKind,
    default_scenarios,
    filter_nbt,
    generate_development,
    generate_test_mt,
    generate_test_ntt,
    observational_20,
    observational_50,
    rct_10pct_dropout,
    solve_intercept,
    solve_scenario_intercepts,
)
from .harness import (
    ExperimentPlan,
    ExperimentResult,
    default_plan,
    run_experiment,
    run_iteration,
    summarize_results,
)
from .ipw import (
    PositivityError,
    StabilizedWeightVector,
    TreatmentHistoryTable,
    TreatmentModelPair,
    compute_stabilized_weights,
    fit_treatment_models,
)
from .logistic import (
    DegenerateOutcomeError,
    DesignMatrix,
    FitResult,
    SeparationError,
    SingularDesignError,
    fit_weighted_logistic,
    predict_prob,
)
from .metrics import (
    PredictionSet,
    allocation_curve,
    auc,
    brier,
    calibration,
)
from .outputs import (
    figure_table,
    read_results,
    read_summary,
    write_figure,
)
from .strategies import (
    EstimandKind,
    FittedCPM,
    StrategyKind,
    UnsupportedEstimandError,
    counterfactual_effect,
    e4_envelope,
    fit_strategy,
    predict_observed,
    predict_risk,
)

__version__ = "0.1.0"
