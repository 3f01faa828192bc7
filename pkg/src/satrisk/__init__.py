"""Risk of the discounted return in MDPs with stochastic transition-based
rewards, via state augmentation, isotopic lumping and exact moment solves."""
from ._kernels import BACKEND
from .evaluator import (
    EvalResult,
    NumericalError,
    evaluate,
    evaluate_chain,
    mean_variance_risk,
    return_moments,
    utility_taylor,
    value_vector,
    variance_vector,
)
from .lumping import LumpError, LumpReport, are_isotopic, lump_all, lump_pair, sat_fast_lump
from .model import (
    DetChain,
    Mdp,
    ModelError,
    Policy,
    RewardProcess,
    induce,
    parse_model,
    render_model,
    simplify_reward,
)
from .sat import AugMdp, Null, Situation, lift_policy, transform_mdp, transform_process
from .simulator import (
    SampleGroups,
    TruncatedDistribution,
    empirical_mean_variance,
    empirical_utility,
    enumerate_truncated,
    run_groups,
    sample_return,
    truncated_moments,
)

__version__ = "0.1.0"
