"""Optimal multiple-hypothesis-testing protocols from economic primitives.

Construct the testing protocols a welfare-maximizing editor would impose on a
cost-sensitive researcher, verify their worst-case (maximin) optimality and
local power numerically on gridded parameter spaces, and compute the compound
error rates (average size, weak FWER, kappa-FWER, FDR) those protocols
control.
"""

from .errors import (
    ClosedFormUnavailableError,
    DegenerateRuleWarning,
    InfeasibleError,
    InputError,
    MhtOptError,
)
from .game import (
    AdditiveTreatments,
    GameOutcome,
    GeneralTreatments,
    OutcomesPolicyMakers,
    best_subset,
    editor_utility,
    expected_welfare_given_experiment,
    play_game,
    researcher_utility,
)
from .outcomes import (
    SyntheticTrial,
    aggregation_equivalence,
    make_trial,
    ols_effects,
    policy_maker_indices,
    trial_from_csv,
    trial_to_csv,
)
from .protocols import (
    CostFunction,
    EndogenousFamily,
    LinearPub,
    MalevolentPub,
    ThresholdPub,
    factor_index_weights,
    make_endogenous_family,
    make_group_max_rule,
    make_index_rule,
    make_min_statistic_rule,
    make_never_reject,
    make_separate_ttests,
    make_threshold_pub_ttests,
    solve_publication_size,
    variance_min_weights,
)
from .rules import (
    GroupArgmaxMax,
    IndexTest,
    MinStatistic,
    RejectionEstimate,
    SeparateThresholds,
    rejection_probs,
    rule_from_json_dict,
)
from .stats import (
    GaussianModel,
    McConfig,
    mvn_sample,
    norm_cdf,
    norm_quantile,
    poisson_binomial_pmf,
    poisson_binomial_sf,
)
from .verify import (
    BruteForceResult,
    ErrorRates,
    HolmStepDown,
    NullRegion,
    ParameterSpace,
    VerificationReport,
    bonferroni_vs_holm_gap,
    brute_force_optimal_threshold,
    check_maximin,
    error_rates,
    local_power,
    separate_vs_index_demo,
)

__version__ = "0.1.0"
