"""Estimator-style wrappers around the DP and stochastic learners.

Fitting takes an MDP (and optionally a policy) in place of a design matrix;
``transform`` then maps (state, action) pairs to learned statistic vectors
and ``predict`` maps states to greedy actions.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .engine import StatTable, dp_fixed_point, make_statistics, train
from .imputation import DEFAULT_TOL, impute
from .mdp import Policy, TabularMdp
from .statistics import StatisticSet, evaluate_set


def _families(strategy, n_statistics, kappa, supports, taus) -> StatisticSet:
    if strategy == "cdrl":
        if supports is None:
            raise ValueError("cdrl needs supports")
        return StatisticSet.categorical(supports)
    if n_statistics is None and taus is None:
        raise ValueError("give n_statistics or taus")
    k = len(taus) if taus is not None else n_statistics
    return make_statistics(strategy, int(k), kappa, taus=taus)


def _check_mdp(mdp, policy):
    if not isinstance(mdp, TabularMdp):
        raise TypeError(f"expected a TabularMdp, got {type(mdp).__name__}")
    if policy is None:
        return Policy.uniform(mdp.num_states, mdp.num_actions)
    if policy.probs.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError("policy shape does not match the MDP")
    return policy


class _TableEstimator(TransformerMixin, BaseEstimator):
    """Shared read-out of a fitted statistic table."""

    def _pairs(self, X):
        X = check_array(X, dtype=np.int64, ensure_2d=False)
        if X.ndim == 1:
            X = X[:, None]
        S, A = self.table_.shape
        if X.shape[1] == 1:
            X = np.column_stack([X[:, 0], np.zeros(len(X), dtype=np.int64)]) if A == 1 else None
            if X is None:
                raise ValueError("pass (state, action) pairs for MDPs with several actions")
        if X.shape[1] != 2:
            raise ValueError("X must hold (state, action) pairs")
        if np.any(X < 0) or np.any(X[:, 0] >= S) or np.any(X[:, 1] >= A):
            raise ValueError("state or action index out of range")
        return X

    def transform(self, X):
        """Learned statistics for each (state, action) row of ``X``; shape ``(n, K)``."""
        check_is_fitted(self, "table_")
        X = self._pairs(X)
        return self.table_.values[X[:, 0], X[:, 1]].copy()

    def predict(self, X):
        """Greedy action at each state in ``X``."""
        check_is_fitted(self, "table_")
        states = check_array(X, dtype=np.int64, ensure_2d=False).ravel()
        return np.array([int(np.argmax(self.table_.mean_estimates(x))) for x in states])

    def mean_values(self) -> np.ndarray:
        """Estimated expected return of every pair, shape ``(S, A)``."""
        check_is_fitted(self, "table_")
        return np.array([self.table_.mean_estimates(x) for x in range(self.table_.shape[0])])

    def impute(self, state: int, action: int = 0):
        check_is_fitted(self, "table_")
        return self.table_.impute(state, action)


class DistributionalDP(_TableEstimator):
    """Statistic dynamic programming run to its fixed point.

    Examples
    --------
    >>> from statdrl.mdp import build_absorbing_chain
    >>> est = DistributionalDP(strategy="expectile", n_statistics=3).fit(build_absorbing_chain(3, 0.5, 1.0))
    >>> est.transform([[0, 0]]).round(3).tolist()
    [[0.25, 0.25, 0.25]]
    """

    def __init__(self, strategy: str = "expectile", n_statistics: int | None = 9, kappa: float = 1.0,
                 supports=None, taus=None, n_atoms: int | None = None, solver_tol: float = DEFAULT_TOL,
                 tol: float = 1e-10, max_sweeps: int = 10_000):
        self.strategy = strategy
        self.n_statistics = n_statistics
        self.kappa = kappa
        self.supports = supports
        self.taus = taus
        self.n_atoms = n_atoms
        self.solver_tol = solver_tol
        self.tol = tol
        self.max_sweeps = max_sweeps

    def fit(self, mdp: TabularMdp, policy: Policy | None = None):
        policy = _check_mdp(mdp, policy)
        self.families_ = _families(self.strategy, self.n_statistics, self.kappa, self.supports, self.taus)
        init = StatTable.initial(mdp.num_states, mdp.num_actions, self.families_, self.strategy,
                                 n_atoms=self.n_atoms, tol=self.solver_tol)
        result = dp_fixed_point(init, mdp, policy, tol=self.tol, max_sweeps=self.max_sweeps)
        self.table_ = result.table
        self.n_sweeps_ = result.sweeps
        self.residual_ = result.residual
        return self


class StochasticDistributionalTD(_TableEstimator):
    """Sample-based statistic learning from episodes of the MDP."""

    def __init__(self, strategy: str = "expectile", n_statistics: int | None = 9, kappa: float = 1.0,
                 taus=None, alpha: float = 0.05, n_steps: int = 30_000, control: bool = False,
                 epsilon: float = 0.05, n_atoms: int | None = None, random_state=None):
        self.strategy = strategy
        self.n_statistics = n_statistics
        self.kappa = kappa
        self.taus = taus
        self.alpha = alpha
        self.n_steps = n_steps
        self.control = control
        self.epsilon = epsilon
        self.n_atoms = n_atoms
        self.random_state = random_state

    def fit(self, mdp: TabularMdp, policy: Policy | None = None):
        policy = _check_mdp(mdp, policy)
        self.families_ = _families(self.strategy, self.n_statistics, self.kappa, None, self.taus)
        rng = self.random_state
        if rng is not None and not isinstance(rng, (int, np.integer, np.random.Generator)):
            raise TypeError("random_state must be None, an int or a numpy Generator")
        result = train(mdp, policy, self.families_, self.strategy, alpha=self.alpha, n_steps=self.n_steps,
                       rng=rng, control=self.control, epsilon=self.epsilon, n_atoms=self.n_atoms)
        self.table_ = result.table
        self.n_episodes_ = result.episodes
        return self


class Imputer(TransformerMixin, BaseEstimator):
    """Map statistic vectors to distributions that have those statistics.

    ``transform`` returns an object array of distributions, and
    ``inverse_transform`` evaluates the statistics of distributions again.
    """

    def __init__(self, strategy: str = "expectile", n_statistics: int | None = None, kappa: float = 1.0,
                 supports=None, taus=None, n_atoms: int | None = None, tol: float = DEFAULT_TOL):
        self.strategy = strategy
        self.n_statistics = n_statistics
        self.kappa = kappa
        self.supports = supports
        self.taus = taus
        self.n_atoms = n_atoms
        self.tol = tol

    def fit(self, X=None, y=None):
        n = self.n_statistics
        if n is None and X is not None and self.taus is None:
            n = check_array(X).shape[1]
        self.families_ = _families(self.strategy, n, self.kappa, self.supports, self.taus)
        self.n_features_in_ = len(self.families_)
        return self

    def transform(self, X):
        check_is_fitted(self, "families_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} statistics per row, got {X.shape[1]}")
        out = np.empty(len(X), dtype=object)
        for i, row in enumerate(X):
            out[i] = impute(self.strategy, self.families_, row, self.n_atoms, self.tol)
        return out

    def inverse_transform(self, dists):
        check_is_fitted(self, "families_")
        return np.array([evaluate_set(self.families_, d) for d in dists])
