"""Bayesian superiority decisions for trials with correlated binary outcomes.

The package models K binary outcomes per subject jointly (a multivariate
Bernoulli / multinomial over the 2^K response patterns) with conjugate
Dirichlet inference, evaluates four superiority decision rules on the
posterior of the treatment-difference vector, and provides sample-size
planning, efficiency-weight optimization, fixed and monitored trial
execution, threshold calibration, and a replicated simulation harness.
"""

from .errors import (
    CountMismatch,
    DegenerateMargin,
    DegenerateVariance,
    DimensionMismatch,
    EmptyCounts,
    EmptyDraws,
    InfeasibleCorrelation,
    InfeasibleRule,
    InvalidParams,
    InvalidRatios,
    MvbernError,
    NoPositiveDirection,
    StreamExhausted,
    ZeroEffect,
)
from .model import (
    CellProbabilities,
    DeltaDraws,
    DirichletParams,
    JointCounts,
    PriorSpec,
    cell_probs_from_margins,
    delta_draws,
    dirichlet_margin_moments,
    margins_of,
    pairwise_correlation,
    pairwise_joint,
    pattern_bits,
    pattern_index,
    pattern_labels,
    posterior_mean_delta,
    posterior_update,
    prior_from_spec,
    sample_dirichlet,
    sample_multinomial,
)
from .rules import (
    AllRule,
    AnyRule,
    CompensatoryRule,
    Decision,
    DecisionRule,
    SingleRule,
    compensatory_indicator,
    decide,
    decision_threshold,
    superiority_indicator,
    superiority_probability,
)
from .design import (
    DesignTarget,
    bivariate_normal_cdf,
    mvn_cdf,
    sample_size_compensatory,
    sample_size_mvn,
    sample_size_sequential,
    sample_size_single,
    sequential_mvn_power,
)
from .weights import (
    DeltaMoments,
    compensatory_evidence,
    estimate_moments,
    moments_from_params,
    optimize_weights,
)
from .engine import (
    ADAPTIVE,
    DesignSpec,
    FIXED,
    GROUP_SEQUENTIAL,
    RecordedStream,
    SimulatedStream,
    recorded_streams_from_file,
    TrialResult,
    adaptive_schedule,
    calibrate_threshold,
    calibration_maxima,
    group_sequential_schedule,
    run_fixed_trial,
    run_sequential_trial,
    trajectory_probabilities,
)
from .harness import (
    DgmSpec,
    SimulationReport,
    dgm_from_margins,
    dgm_table,
    get_dgm,
    least_favorable_dgm,
    named_priors,
    planned_sample_size,
    shifted_dgm,
    simulate_condition,
    study_grid,
    write_csv,
    write_json,
)

__version__ = "0.1.0"
