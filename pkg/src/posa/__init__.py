"""Sequential adaptive survey sampling for rare, clustered outcomes.

The package covers the full workflow: generating spatially clustered
finite populations, running list-sequential probability-updating designs
(independent draws, forcing, and size-stabilized forcing), estimating
means and variances from a single realized pass, exhaustively
enumerating small designs to check every identity exactly, and running
Monte Carlo comparisons against a traditional two-stage benchmark.

Modules
-------
``population``
    Clustered population generation, serpentine visit order, the
    between-area variation ratio.
``engine``
    The list-sequential sampler and the probability-updating rules.
``estimation``
    Weighted estimators, closed-form variances and single-run variance
    estimators for each design.
``oracle``
    Exhaustive path enumeration for small populations; exact moments
    and estimator laws.
``simulation``
    Scenario configuration, presets, the Monte Carlo harness, and the
    comparison metrics.
``cli``
    The ``posa`` command-line interface.
"""

from .engine import (
    BOUNDARY_EPS,
    DesignOutcome,
    UpdatingRule,
    area_threshold_rule,
    cposa_rule,
    load_outcome,
    poisson_rule,
    posa_rule,
    run_list_sequential,
    save_outcome,
    save_trace_csv,
)
from .estimation import (
    EstimateReport,
    SmiMoments,
    cposa_exact_variance,
    cposa_variance_estimate,
    estimate_report,
    explain_rows,
    ht_mean_estimate,
    poisson_exact_variance,
    poisson_variance_estimate,
    posa_exact_variance,
    posa_marginals,
    posa_variance_estimate,
    smi_moments,
    variance_estimate,
)
from .exceptions import (
    EnumerationLimitError,
    InfeasiblePopulationError,
    InvalidWeightError,
    ProbabilityRangeError,
    SamplingDesignError,
    ScenarioError,
    ZeroPrevalenceError,
)
from .oracle import (
    MAX_ENUMERABLE_UNITS,
    EstimatorLaw,
    OracleMoments,
    PathDistribution,
    case_draw_prob_floor,
    enumerate_design,
    ht_mean_values,
    oracle_estimator_law,
    oracle_moments,
    path_outcome,
)
from .population import (
    ClusterSpec,
    Population,
    PopulationSummary,
    compute_k,
    generate_clustered_population,
    load_population,
    save_population,
    serpentine_order,
    summarize,
)
from .simulation import (
    CostModel,
    DesignMetrics,
    MetricSet,
    ScenarioConfig,
    benchmark_estimate,
    detection_rate_per_100,
    list_presets,
    load_scenario_config,
    population_preset,
    ratio_report,
    read_replicate_rows,
    replicate_rows_path,
    run_monte_carlo,
    scenario_preset,
    traditional_benchmark_draw,
    who_person_sample_size,
    who_sample_size,
    write_ratio_csv,
    write_summary_json,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # engine
    "BOUNDARY_EPS",
    "DesignOutcome",
    "UpdatingRule",
    "area_threshold_rule",
    "cposa_rule",
    "load_outcome",
    "poisson_rule",
    "posa_rule",
    "run_list_sequential",
    "save_outcome",
    "save_trace_csv",
    # estimation
    "EstimateReport",
    "SmiMoments",
    "cposa_exact_variance",
    "cposa_variance_estimate",
    "estimate_report",
    "explain_rows",
    "ht_mean_estimate",
    "poisson_exact_variance",
    "poisson_variance_estimate",
    "posa_exact_variance",
    "posa_marginals",
    "posa_variance_estimate",
    "smi_moments",
    "variance_estimate",
    # exceptions
    "EnumerationLimitError",
    "InfeasiblePopulationError",
    "InvalidWeightError",
    "ProbabilityRangeError",
    "SamplingDesignError",
    "ScenarioError",
    "ZeroPrevalenceError",
    # oracle
    "MAX_ENUMERABLE_UNITS",
    "EstimatorLaw",
    "OracleMoments",
    "PathDistribution",
    "case_draw_prob_floor",
    "enumerate_design",
    "ht_mean_values",
    "oracle_estimator_law",
    "oracle_moments",
    "path_outcome",
    # population
    "ClusterSpec",
    "Population",
    "PopulationSummary",
    "compute_k",
    "generate_clustered_population",
    "load_population",
    "save_population",
    "serpentine_order",
    "summarize",
    # simulation
    "CostModel",
    "DesignMetrics",
    "MetricSet",
    "ScenarioConfig",
    "benchmark_estimate",
    "detection_rate_per_100",
    "list_presets",
    "load_scenario_config",
    "population_preset",
    "ratio_report",
    "read_replicate_rows",
    "replicate_rows_path",
    "run_monte_carlo",
    "scenario_preset",
    "traditional_benchmark_draw",
    "who_person_sample_size",
    "who_sample_size",
    "write_ratio_csv",
    "write_summary_json",
]
