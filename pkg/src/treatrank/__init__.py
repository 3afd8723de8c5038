"""Estimation, decomposition, and ranking of effects for multiple binary treatments."""

from .dgp import (
    AssignmentMode,
    Dataset,
    OracleQuantities,
    OverlapError,
    StratifiedDGP,
    extreme_heterogeneity_dgp,
    oracle_ate,
    oracle_decomposition,
    oracle_wate,
    oracle_weights,
    random_dgp,
    sample,
)
from .diagnostics import (
    DecompositionReport,
    NotEstimableError,
    RankingResult,
    ReversalCheck,
    Source,
    check_reversal,
    decompose,
    estimate_decomposition,
    oracle_report,
    rank_treatments,
    sufficient_condition_check,
)
from .configio import (
    ConfigError,
    load_dataset_csv,
    load_dgp_config,
    packaged_config_path,
    write_dataset_csv,
    write_dgp_config,
)
from .estimators import (
    EffectEstimate,
    Estimand,
    Method,
    NoVariationError,
    PseudoOutcomes,
    aipw_estimate,
    estimate_all,
    ipw_estimate,
    plm_estimate,
    pseudo_outcomes,
)
from .montecarlo import (
    METHODS,
    MonteCarloResult,
    ScenarioConfig,
    ScenarioName,
    histogram_rows,
    load_scenario_config,
    preset,
    replicate_rows,
    run_scenario,
    scaled,
    summarize,
    validate_scenario,
    write_scenario_config,
)
from .nuisance import (
    Basis,
    FoldAssignment,
    LearnerKind,
    LearnerSpec,
    NuisanceFit,
    SingularFitError,
    assign_folds,
    corrupt_outcome,
    corrupt_propensity,
    fit_crossfit,
    fit_insample,
    oracle_nuisance,
)

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "AssignmentMode",
    "Basis",
    "ConfigError",
    "Dataset",
    "MonteCarloResult",
    "ScenarioConfig",
    "ScenarioName",
    "DecompositionReport",
    "EffectEstimate",
    "Estimand",
    "FoldAssignment",
    "LearnerKind",
    "LearnerSpec",
    "Method",
    "NotEstimableError",
    "NoVariationError",
    "NuisanceFit",
    "OracleQuantities",
    "OverlapError",
    "PseudoOutcomes",
    "RankingResult",
    "ReversalCheck",
    "SingularFitError",
    "Source",
    "StratifiedDGP",
    "aipw_estimate",
    "assign_folds",
    "check_reversal",
    "corrupt_outcome",
    "corrupt_propensity",
    "decompose",
    "estimate_all",
    "estimate_decomposition",
    "extreme_heterogeneity_dgp",
    "fit_crossfit",
    "fit_insample",
    "histogram_rows",
    "ipw_estimate",
    "load_dataset_csv",
    "load_dgp_config",
    "load_scenario_config",
    "oracle_ate",
    "oracle_decomposition",
    "oracle_nuisance",
    "oracle_report",
    "oracle_wate",
    "oracle_weights",
    "packaged_config_path",
    "plm_estimate",
    "preset",
    "pseudo_outcomes",
    "random_dgp",
    "rank_treatments",
    "replicate_rows",
    "run_scenario",
    "sufficient_condition_check",
    "sample",
    "scaled",
    "summarize",
    "validate_scenario",
    "write_dataset_csv",
    "write_dgp_config",
    "write_scenario_config",
]
