"""Tabular distributional reinforcement learning through statistics and imputation."""
from .distributions import DiscreteDist, inverse_cdf, mixture, pushforward, quantiles, wasserstein1
from .engine import (
    StatTable,
    cramer_project,
    dist_bellman,
    dp_fixed_point,
    dp_update,
    greedy_action,
    make_statistics,
    sgd_update,
    train,
    w1_project,
)
from .estimators import DistributionalDP, Imputer, StochasticDistributionalTD
from .imputation import ImputationError, InfeasibleStatisticsError, impute, residual
from .mdp import (
    DistTable,
    Policy,
    TabularMdp,
    Transition,
    build_absorbing_chain,
    build_control_mdp,
    build_nchain,
    build_qdrl_mean_counterexample,
    build_quantile_nonclosed_mdp,
    exact_return_dist,
    monte_carlo_return_dist,
    policy_evaluation,
    random_mdp,
)
from .statistics import StatisticSet, evaluate_set, midpoint_taus

__version__ = "0.1.0"

__all__ = [
    "DiscreteDist",
    "inverse_cdf",
    "mixture",
    "pushforward",
    "quantiles",
    "wasserstein1",
    "StatTable",
    "cramer_project",
    "dist_bellman",
    "dp_fixed_point",
    "dp_update",
    "greedy_action",
    "make_statistics",
    "sgd_update",
    "train",
    "w1_project",
    "DistributionalDP",
    "Imputer",
    "StochasticDistributionalTD",
    "ImputationError",
    "InfeasibleStatisticsError",
    "impute",
    "residual",
    "DistTable",
    "Policy",
    "TabularMdp",
    "Transition",
    "build_absorbing_chain",
    "build_control_mdp",
    "build_nchain",
    "build_qdrl_mean_counterexample",
    "build_quantile_nonclosed_mdp",
    "exact_return_dist",
    "monte_carlo_return_dist",
    "policy_evaluation",
    "random_mdp",
    "StatisticSet",
    "evaluate_set",
    "midpoint_taus",
]
