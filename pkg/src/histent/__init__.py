"""histent: entropies of coarse-grained histories of stochastic processes.

A history is a state sequence over N fine times; a coarse-graining keeps a
subset of those times and bins the state at each kept time.  This package
computes the entropy measures of the resulting class distributions —
exactly on small instances, by Monte Carlo at scale — together with the
maximum-entropy reconstruction entropies and the studies built on them
(graining sweeps, urn surfaces, second-law translation runs).
"""

__version__ = "0.1.0"

from histent.errors import (
    ClassCapExceeded,
    ConfigError,
    ConvergenceError,
    HistentError,
    InvariantViolation,
)
from histent.histories import (
    CONTINUUM,
    DISCRETE,
    CoarseGraining,
    HistoryDistribution,
    SpatialPartition,
    StateSpace,
    TimeGrid,
    classify,
    coarsen,
    graining_from_json,
    graining_to_json,
    projector_volume,
    uniform_graining,
)
from histent.processes import (
    BrownianParams,
    InitialCondition,
    MarkovKernel,
    UrnParams,
    brownian_step,
    diffusion_kernel,
    exact_history_probs,
    random_walk_kernel,
    urn_coefficients,
    urn_exact_prob,
    urn_jstep_matrix,
    urn_kernel,
    urn_space,
    urn_transition,
)
from histent.entropy import (
    EntropyReport,
    dimensionless_history_entropy,
    entropy_functional,
    entropy_report,
    history_space_entropy,
    isham_linden_entropy,
    lp_depth,
    markov_chain_entropy,
    max_entropy_value,
    step_by_step_entropy,
)
from histent.maxent import (
    InequalityReport,
    MaxEntProblem,
    MaxEntSolution,
    build_constraints,
    dc_entropy,
    ic_entropy,
    s_function,
    solve_maxent,
    verify_inequalities,
)
from histent.montecarlo import (
    EntropyEstimate,
    TrajectoryEnsemble,
    entropy_with_error,
    estimate_distribution,
    load_ensemble,
    sample_brownian_positions,
    sample_random_walk,
    sample_trajectories,
    save_ensemble,
)
from histent.experiments import (
    SweepPoint,
    SweepResult,
    config_digest,
    random_markov_instance,
    run_self_checks,
    second_law_translation,
    sweep_entropy_vs_graining,
    urn_multi_time_curves,
    urn_second_law_run,
    urn_two_time_surface,
)

__all__ = [
    "__version__",
    # errors
    "HistentError", "ConfigError", "InvariantViolation", "ClassCapExceeded",
    "ConvergenceError",
    # histories
    "DISCRETE", "CONTINUUM", "StateSpace", "TimeGrid", "SpatialPartition",
    "CoarseGraining", "HistoryDistribution", "projector_volume", "classify",
    "coarsen", "uniform_graining", "graining_from_json", "graining_to_json",
    # processes
    "MarkovKernel", "InitialCondition", "BrownianParams", "UrnParams",
    "random_walk_kernel", "diffusion_kernel", "brownian_step",
    "urn_transition", "urn_kernel", "urn_jstep_matrix", "urn_space",
    "urn_coefficients", "urn_exact_prob", "exact_history_probs",
    # entropy
    "EntropyReport", "entropy_functional", "history_space_entropy",
    "dimensionless_history_entropy", "lp_depth", "isham_linden_entropy",
    "step_by_step_entropy", "max_entropy_value", "markov_chain_entropy",
    "entropy_report",
    # maxent
    "MaxEntProblem", "MaxEntSolution", "build_constraints", "solve_maxent",
    "s_function", "ic_entropy", "dc_entropy", "InequalityReport",
    "verify_inequalities",
    # montecarlo
    "TrajectoryEnsemble", "sample_trajectories", "sample_random_walk",
    "sample_brownian_positions", "estimate_distribution", "EntropyEstimate",
    "entropy_with_error", "save_ensemble", "load_ensemble",
    # experiments
    "SweepPoint", "SweepResult", "config_digest", "sweep_entropy_vs_graining",
    "urn_two_time_surface", "urn_multi_time_curves", "second_law_translation",
    "urn_second_law_run", "random_markov_instance", "run_self_checks",
]
