"""Bayesian step-function regression on a fixed grid.

Equivalent-block and balanced-interval partition priors, exact spacing
probabilities, complexity numbers, exact and MCMC posteriors, and a
concentration experiment harness.
"""

__version__ = "0.1.0"

from .combinatorics import (
    CoverEstimate,
    ExactProbability,
    brute_force_spacing_probs,
    circle_cover_exact,
    circle_cover_mc,
    prob_max_cell,
    prob_min_cell,
)
from .complexity import (
    ComplexityResult,
    best_l2_approx,
    complexity_bi,
    complexity_eb,
    restricted_cell_count,
)
from .errors import (
    DivisibilityError,
    InfeasibleError,
    InvalidArgumentError,
    NoBalancedPartitionError,
    NoModelError,
    OffGridError,
    StepHistError,
    TooLargeError,
)
from .experiments import (
    ConcentrationRow,
    ExperimentConfig,
    ck_sensitivity,
    rate_slope,
    run_concentration,
)
from .model_core import (
    Dataset,
    Grid,
    StepFunction,
    canonicalize,
    empirical_norm,
    evaluate,
    make_grid,
    simulate,
)
from .partitions import (
    BI,
    DEFAULT_BALANCE,
    EB,
    BalanceConstraint,
    Partition,
    cell_counts,
    count_balanced,
    enumerate_partitions,
    equivalent_blocks,
    is_balanced,
    sample_balanced_partition,
    sample_uniform_splits,
)
from .posterior import (
    PosteriorSummary,
    PriorConfig,
    concentration_mass,
    evidence_dp,
    exact_posterior,
    log_cell_marginal,
    log_marginal_likelihood,
    log_prior_k,
    mcmc_posterior,
    sample_heights_given_partition,
    sample_partition_given_k,
)
