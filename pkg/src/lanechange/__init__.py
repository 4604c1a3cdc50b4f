"""Personalized lane-change decision lab.

Two-lane highway simulation, per-style indicator reference lines,
style-conditioned DQN agents trained against a personalization reward,
and an evaluation harness comparing them with a greedy benchmark.
"""

from .simulation import (
    Action,
    Environment,
    ScenarioConfig,
    ScenarioState,
    Termination,
    VehicleState,
    normalize_state,
    sample_initial_state,
    step,
)
from .indicators import (
    DecisionRecord,
    IndicatorVector,
    StyleProfile,
    builtin_profile,
    cluster_styles,
    compute_indicators,
    fit_profile_ols,
    load_profile,
    pearson_correlation,
    reference_values,
)
from .reward import RewardBreakdown, RewardParams, indicator_reward, total_reward
from .agent import (
    DQNAgent,
    EpsilonSchedule,
    ReplayBuffer,
    TrainingConfig,
    benchmark_decide,
    run_training,
)
from .evaluation import (
    AgreementReport,
    LaneChangePoint,
    agreement,
    benchmark_policy,
    mae,
    reference_driver_decide,
    reference_driver_policy,
    rl_policy,
    run_rollouts,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AgreementReport",
    "DQNAgent",
    "DecisionRecord",
    "Environment",
    "EpsilonSchedule",
    "IndicatorVector",
    "LaneChangePoint",
    "ReplayBuffer",
    "RewardBreakdown",
    "RewardParams",
    "ScenarioConfig",
    "ScenarioState",
    "StyleProfile",
    "Termination",
    "TrainingConfig",
    "VehicleState",
    "agreement",
    "benchmark_decide",
    "benchmark_policy",
    "builtin_profile",
    "cluster_styles",
    "compute_indicators",
    "fit_profile_ols",
    "indicator_reward",
    "load_profile",
    "mae",
    "normalize_state",
    "pearson_correlation",
    "reference_driver_decide",
    "reference_driver_policy",
    "reference_values",
    "rl_policy",
    "run_rollouts",
    "run_training",
    "sample_initial_state",
    "step",
    "total_reward",
]
