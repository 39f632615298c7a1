"""Randomized Copeland mechanisms and higher moments of metric distortion."""

from .adversarial import make_random_euclidean, make_two_point, thm1_lower_bound, thm3_lower_bound
from .distortion import (
    DistortionReport,
    SocialCostProfile,
    estimate_moments,
    exact_moments,
    social_costs,
)
from .errors import (
    DegenerateOptimumError,
    ConfigError,
    DistMomentsError,
    ElectionError,
    EnumerationInfeasibleError,
    MetricStructureError,
    MetricViolationError,
)
from .lemmas import (
    DiscreteDistribution,
    brute_force_order_statistic,
    moment_of_median,
    moment_of_min,
)
from .mechanisms import MechanismSpec, TrialOutcome, TrialStream, run_frc, run_prc, run_rd
from .metric import (
    MetricInstance,
    PreferenceProfile,
    favorites,
    load_instance,
    restrict_profile,
    validate_metric,
)
from .pb import (
    KnapsackElection,
    budget_distance,
    build_instance,
    jaccard_distance,
    load_election,
    synth_election,
)
from .tournament import Tournament, build_tournament, copeland_winner, uncovered_set

__version__ = "0.1.0"
