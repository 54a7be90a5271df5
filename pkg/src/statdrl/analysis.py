"""Error metrics against ground truth and numeric checks of approximation results."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .distributions import DiscreteDist, inverse_cdf, quantiles, wasserstein1
from .engine import (
    StatTable,
    cramer_project,
    dp_fixed_point,
    dp_update,
    greedy_action,
    w1_project,
)
from .mdp import (
    DistTable,
    NonConvergenceError,
    Policy,
    TabularMdp,
    _target_arrays,
    build_control_mdp,
    build_qdrl_mean_counterexample,
    build_quantile_nonclosed_mdp,
    exact_return_dist,
    policy_evaluation,
    random_mdp,
    random_policy,
)
from .statistics import StatisticSet, evaluate_set, midpoint_taus

logger = logging.getLogger(__name__)

# ground truth for the bound checks: the bounds are orders of magnitude above
# the cell-level error these settings introduce
TRUTH_TOL = 1e-5
TRUTH_MAX_ATOMS = 300
BOUND_DP_TOL = 1e-8


@dataclass
class ErrorReport:
    """Per-pair average absolute statistic error, its supremum and optional W1 errors."""

    per_pair: np.ndarray
    sup: float
    w1: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def sup_w1(self) -> float | None:
        return None if self.w1 is None else float(self.w1.max())

    def at(self, x: int, a: int) -> float:
        return float(self.per_pair[x, a])


def _check_shapes(learned: StatTable, truth: DistTable):
    if learned.shape != truth.shape:
        raise ValueError(f"learned table has shape {learned.shape}, truth has {truth.shape}")


def true_statistics(families: StatisticSet, truth: DistTable) -> np.ndarray:
    S, A = truth.shape
    return np.array([[evaluate_set(families, truth[x, a]) for a in range(A)] for x in range(S)])


def statistic_error(learned: StatTable, truth: DistTable, **meta) -> ErrorReport:
    """Average absolute error over the statistic set, per pair and worst pair."""
    _check_shapes(learned, truth)
    per_pair = np.abs(learned.values - true_statistics(learned.families, truth)).mean(axis=2)
    return ErrorReport(per_pair, float(per_pair.max()), None, dict(meta))


def w1_reconstruction_error(learned: StatTable, truth: DistTable, **meta) -> ErrorReport:
    """W1 between the imputed distribution of each pair and its true return distribution."""
    report = statistic_error(learned, truth, **meta)
    S, A = learned.shape
    report.w1 = np.array([[wasserstein1(learned.impute(x, a), truth[x, a]) for a in range(A)] for x in range(S)])
    return report


# moments ---------------------------------------------------------------------------------------------------


def _raw_moments(d: DiscreteDist, k: int) -> np.ndarray:
    return d.weights @ d.atoms[:, None] ** np.arange(k + 1)


def _reward_moments(mdp: TabularMdp, k: int) -> np.ndarray:
    """``E[R^j]`` for every transition, shape ``(S, A, S, k + 1)``; terminal pairs use their own reward law."""
    S, A = mdp.num_states, mdp.num_actions
    out = np.zeros((S, A, S, k + 1))
    for x in range(S):
        for a in range(A):
            if mdp.terminal[x]:
                r = mdp.rewards[x][a][x]
                out[x, a, x] = _raw_moments(r, k)
                continue
            for y, _, r in mdp.successors(x, a):
                out[x, a, y] = _raw_moments(r, k)
    return out


def moment_bellman_operator(moments, mdp: TabularMdp, pi: Policy, _reward_mom=None) -> np.ndarray:
    """Apply the closed-form Bellman operator for raw moments 1..K.

    ``moments`` has shape ``(S, A, K)``. For a non-terminal pair the new
    k-th moment is ``sum_j C(k, j) E[R^j] gamma^(k-j) m_(k-j)`` averaged over
    next pairs, with ``m_0 = 1``. Terminal pairs take their reward moments.
    """
    m = np.asarray(moments, dtype=float)
    if m.ndim != 3 or m.shape[:2] != (mdp.num_states, mdp.num_actions):
        raise ValueError("moments must have shape (S, A, K)")
    K = m.shape[2]
    if K < 1:
        raise ValueError("need at least one moment")
    rm = _reward_moments(mdp, K) if _reward_mom is None else _reward_mom
    # next-state moments under pi, with the zeroth moment prepended
    nxt = np.einsum("yb,ybk->yk", pi.probs, m)
    nxt = np.concatenate([np.ones((nxt.shape[0], 1)), nxt], axis=1)
    P = mdp.transition
    gamma = mdp.gamma
    out = np.zeros_like(m)
    for k in range(1, K + 1):
        total = 0.0
        for j in range(k + 1):
            total = total + comb(k, j) * gamma ** (k - j) * np.einsum("xay,xay,y->xa", P, rm[..., j], nxt[:, k - j])
        out[..., k - 1] = total
    term = mdp.terminal
    if term.any():
        for x in np.flatnonzero(term):
            out[x] = rm[x, :, x, 1:]
    return out


def moment_fixed_point(mdp: TabularMdp, pi: Policy, k: int, tol: float = 1e-14, max_sweeps: int = 100_000):
    """Iterate :func:`moment_bellman_operator` from zero until the relative change is at most ``tol``."""
    if k < 1:
        raise ValueError("k must be positive")
    rm = _reward_moments(mdp, k)
    m = np.zeros((mdp.num_states, mdp.num_actions, k))
    for sweep in range(1, max_sweeps + 1):
        new = moment_bellman_operator(m, mdp, pi, rm)
        change = np.max(np.abs(new - m) / np.maximum(1.0, np.abs(new)))
        m = new
        if change <= tol:
            return m
    raise NonConvergenceError(f"moment iteration did not settle in {max_sweeps} sweeps", residual=float(change))


# CDRL as a projected-distribution iteration --------------------------------------------------------------------


def cdrl_distribution_dp(mdp: TabularMdp, pi: Policy, supports, sweeps: int) -> DistTable:
    """``sweeps`` applications of the Cramér-projected Bellman operator from the projected Dirac at zero."""
    z = np.asarray(supports, dtype=float)
    S, A = mdp.num_states, mdp.num_actions
    eta = DistTable.constant(S, A, cramer_project(DiscreteDist.dirac(0.0), z))
    for _ in range(sweeps):
        eta = DistTable(
            [[cramer_project(DiscreteDist(*_target_arrays(eta, mdp, pi, x, a)), z) for a in range(A)] for x in range(S)]
        )
    return eta


def cdrl_equivalence_gap(mdp: TabularMdp, pi: Policy, supports, sweeps: int = 50) -> float:
    """Largest difference between the categorical statistics of the projected-distribution
    iteration and the statistic iteration that imputes with the CDRL strategy, over all sweeps."""
    families = StatisticSet.categorical(supports)
    S, A = mdp.num_states, mdp.num_actions
    table = StatTable.initial(S, A, families, "cdrl")
    z = families.supports
    eta = DistTable.constant(S, A, cramer_project(DiscreteDist.dirac(0.0), z))
    worst = float(np.max(np.abs(true_statistics(families, eta) - table.values)))
    for _ in range(sweeps):
        eta = DistTable(
            [[cramer_project(DiscreteDist(*_target_arrays(eta, mdp, pi, x, a)), z) for a in range(A)] for x in range(S)]
        )
        table = dp_update(table, mdp, pi)
        worst = max(worst, float(np.max(np.abs(true_statistics(families, eta) - table.values))))
    return worst


# approximation bounds ------------------------------------------------------------------------------------------


def cdrl_bound(gamma: float, k: int) -> float:
    """Worst-case average statistic error of CDRL with ``k`` evenly spaced supports."""
    if k < 2:
        raise ValueError("need at least two supports")
    return gamma / (2 * (1 - gamma) * (k - 1))


def qdrl_bound(gamma: float, k: int, r_max: float = 1.0) -> float:
    """Worst-case average statistic error of QDRL with ``k`` midpoint quantiles."""
    return 2 * r_max * (5 - 2 * gamma) / ((1 - gamma) ** 2 * k)


@dataclass
class BoundReport:
    name: str
    bound: float
    errors: list
    seeds: list
    offending: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.offending

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    def rows(self) -> list[dict]:
        bad = {item["seed"] for item in self.offending}
        return [
            {"check": self.name, "seed": s, "error": e, "bound": self.bound, "passed": s not in bad}
            for s, e in zip(self.seeds, self.errors)
        ]


def seeded_family(seeds, gamma: float = 0.9, r_max: float = 1.0, max_states: int = 5, num_actions: int = 2):
    """Yield ``(seed, mdp, policy)`` with each MDP and its policy drawn from ``default_rng(seed)``."""
    for seed in seeds:
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng, max_states, num_actions, gamma, r_max)
        yield seed, mdp, random_policy(rng, mdp.num_states, mdp.num_actions)


def _bound_check(name, family, families_for, strategy, bound_for, truth_max_atoms):
    errors, seeds, offending, bound = [], [], [], None
    for seed, mdp, pi in family:
        families = families_for(mdp)
        bound = bound_for(mdp)
        table = StatTable.initial(mdp.num_states, mdp.num_actions, families, strategy)
        fitted = dp_fixed_point(table, mdp, pi, tol=BOUND_DP_TOL).table
        truth = exact_return_dist(mdp, pi, tol=TRUTH_TOL, max_atoms=truth_max_atoms)
        err = statistic_error(fitted, truth).sup
        errors.append(err)
        seeds.append(seed)
        if not err <= bound:
            offending.append({"seed": seed, "error": err, "mdp": mdp.to_dict(), "policy": pi.probs.tolist()})
    return BoundReport(name, bound, errors, seeds, offending)


def check_theorem2_bound(family, k: int = 11, r_max: float = 1.0, truth_max_atoms: int = TRUTH_MAX_ATOMS) -> BoundReport:
    """CDRL fixed point with ``k`` supports spanning ``±r_max/(1-gamma)`` against the CDRL bound.

    ``family`` yields ``(seed, mdp, policy)`` as from :func:`seeded_family`.
    """

    def families_for(mdp):
        edge = r_max / (1 - mdp.gamma)
        return StatisticSet.categorical(np.linspace(-edge, edge, k))

    return _bound_check("cdrl_bound", family, families_for, "cdrl", lambda mdp: cdrl_bound(mdp.gamma, k),
                        truth_max_atoms)


def check_theorem3_bound(family, k: int = 20, r_max: float = 1.0, truth_max_atoms: int = TRUTH_MAX_ATOMS) -> BoundReport:
    """QDRL fixed point with ``k`` midpoint quantiles against the QDRL bound."""
    return _bound_check("qdrl_bound", family, lambda mdp: StatisticSet.quantiles(k), "qdrl",
                        lambda mdp: qdrl_bound(mdp.gamma, k, r_max), truth_max_atoms)


# counterexamples -------------------------------------------------------------------------------------------------


@dataclass
class NonClosednessReport:
    k: int
    gamma: float
    next_quantiles: dict
    next_gap: float
    start_quantile: dict
    expected: dict

    @property
    def difference(self) -> float:
        return self.start_quantile["B"][1] - self.start_quantile["A"][0]


def demo_quantile_nonclosedness(k: int = 2, gamma: float = 0.9, n_atoms: int = 1000) -> NonClosednessReport:
    """Two reward settings with equal next-state quantiles but different start-state quantiles.

    ``start_quantile[v]`` holds the left and right inverse CDF of the start
    return at level ``1/(2k)``. The two-point setting ``B`` has a flat CDF at
    that level, so its left end sits on the lower atom; the upper end is the
    one that moves between the settings.
    """
    if k < 1:
        raise ValueError("k must be positive")
    taus = midpoint_taus(k)
    next_q, start_q = {}, {}
    for variant in ("A", "B"):
        mdp = build_quantile_nonclosed_mdp(variant, k, gamma, n_atoms)
        truth = exact_return_dist(mdp, Policy.uniform(3, 1))
        next_q[variant] = np.array([quantiles(truth[y, 0], taus) for y in (1, 2)])
        start = truth[0, 0]
        level = 1.0 / (2 * k)
        start_q[variant] = (inverse_cdf(start, level, "left"), inverse_cdf(start, level, "right"))
    gap = float(np.max(np.abs(next_q["A"] - next_q["B"])))
    return NonClosednessReport(k, gamma, next_q, gap, start_q, {"A": gamma / k, "B": 3 * gamma / (2 * k)})


@dataclass
class NonUniformReport:
    lemma: str
    params: dict
    learned: dict
    true: dict
    gap: float
    expected_gap: float


def _two_state_chain(gamma: float, reward: DiscreteDist) -> TabularMdp:
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    zero = DiscreteDist.dirac(0.0)
    return TabularMdp.build(P, [[zero], [reward]], [False, True], gamma, name="two_state_chain")


def _cdrl_gap_demo(m: int, L: int) -> NonUniformReport:
    if not L > m + 1:
        raise ValueError(f"need L > m + 1, got m={m}, L={L}")
    gamma = 2.0**m / (2.0**m + 1)
    z = np.arange(2**L + 1) / 2.0**L
    families = StatisticSet.categorical(z)
    index = 2 ** (L - 1)  # statistic with kink interval [1/2, 1/2 + 2^-L]
    c = 0.5 + 2.0 ** -(m + 1)
    rewards = {
        "A": DiscreteDist.dirac(c + 3 / 2.0 ** (L + 1)),
        "B": DiscreteDist.uniform([c + 1 / 2.0**L, c + 2 / 2.0**L]),
    }
    learned, true, fitted = {}, {}, {}
    for key, reward in rewards.items():
        mdp = _two_state_chain(gamma, reward)
        pi = Policy.uniform(2, 1)
        table = dp_fixed_point(StatTable.initial(2, 1, families, "cdrl"), mdp, pi).table
        learned[key] = float(table.values[0, 0, index])
        fitted[key] = table.values[1, 0].copy()
        true[key] = float(evaluate_set(families, exact_return_dist(mdp, pi)[0, 0])[index])
    if np.max(np.abs(fitted["A"] - fitted["B"])) > 1e-12:
        logger.warning("fitted terminal statistics differ between the two reward laws")
    return NonUniformReport("C1", {"m": m, "L": L, "gamma": gamma}, learned, true,
                            abs(true["B"] - true["A"]), 1 / (2 * (2**m + 1)))


def _qdrl_gap_demo(k: int, eps: float, gamma: float) -> NonUniformReport:
    if k % 2 == 0:
        raise ValueError("k must be odd")
    if not 0 < eps < 1 / (2 * k):
        raise ValueError("eps must lie in (0, 1/(2k))")
    P = np.zeros((3, 1, 3))
    P[0, 0, 1], P[0, 0, 2] = 0.5 - eps, 0.5 + eps
    low = 1 / (2 * k) - eps
    r1 = DiscreteDist([0.0, 1.0], [low, 1 - low])
    r2 = DiscreteDist([-1.0, 0.0], [1 - low, low])
    zero = DiscreteDist.dirac(0.0)
    mdp = TabularMdp.build(P, [[zero], [r1], [r2]], [False, True, True], gamma, name="qdrl_gap")
    pi = Policy.uniform(3, 1)
    families = StatisticSet.quantiles(k)
    table = dp_fixed_point(StatTable.initial(3, 1, families, "qdrl"), mdp, pi).table
    mid = (k - 1) // 2
    learned = float(table.values[0, 0, mid])
    true = float(evaluate_set(families, exact_return_dist(mdp, pi)[0, 0])[mid])
    return NonUniformReport("C2", {"k": k, "eps": eps, "gamma": gamma}, {"x0": learned}, {"x0": true},
                            abs(learned - true), gamma)


def demo_nonuniform_error(lemma: str, **params) -> NonUniformReport:
    """Fixed points whose per-statistic error does not shrink with resolution.

    ``C1`` (params ``m``, ``L``) is the CDRL two-state chain with discount
    ``2^m/(2^m+1)`` and bins of width ``2^-L``; ``C2`` (params ``k``, ``eps``,
    ``gamma``) is the three-state QDRL example.
    """
    if lemma == "C1":
        return _cdrl_gap_demo(int(params.get("m", 1)), int(params.get("L", 4)))
    if lemma == "C2":
        return _qdrl_gap_demo(int(params.get("k", 3)), float(params.get("eps", 0.01)), float(params.get("gamma", 0.9)))
    raise ValueError(f"lemma must be 'C1' or 'C2', got {lemma!r}")


# mean consistency ------------------------------------------------------------------------------------------------


@dataclass
class MeanReport:
    strategy: str
    implied: np.ndarray
    true: np.ndarray
    greedy: list

    @property
    def gap(self) -> float:
        return float(np.max(np.abs(self.implied - self.true)))


def implied_means(table: StatTable) -> np.ndarray:
    return np.array([table.mean_estimates(x) for x in range(table.shape[0])])


def check_mean_consistency(strategy: str, mdp: TabularMdp, pi: Policy, families: StatisticSet,
                           tol: float = 1e-12, solver_tol: float = 1e-12) -> MeanReport:
    """Means implied by the statistic fixed point next to the classical action values.

    Imputation error feeds back through every bootstrap, so the solver
    tolerance bounds the attainable gap at roughly ``solver_tol / (1 - gamma)``.
    """
    table = StatTable.initial(mdp.num_states, mdp.num_actions, families, strategy, tol=solver_tol)
    fitted = dp_fixed_point(table, mdp, pi, tol=tol).table
    implied = implied_means(fitted)
    greedy = [greedy_action(fitted, x) for x in range(mdp.num_states)]
    return MeanReport(strategy, implied, policy_evaluation(mdp, pi), greedy)


def qdrl_mean_counterexample(k: int = 5) -> MeanReport:
    mdp = build_qdrl_mean_counterexample(k)
    return check_mean_consistency("qdrl", mdp, Policy.uniform(1, 2), StatisticSet.quantiles(k))


@dataclass
class ControlReport:
    algorithm: str
    means: np.ndarray
    greedy: int
    true_means: np.ndarray


CONTROL_ALGORITHMS = {
    "edrl": ("expectile", lambda: StatisticSet.expectiles(taus=np.arange(1, 10) / 10)),
    "cdrl": ("cdrl", lambda: StatisticSet.categorical([0.0, 1.0, 2.0])),
    "qdrl": ("qdrl", lambda: StatisticSet.quantiles(5)),
}


def control_comparison(algorithms=("edrl", "cdrl", "qdrl"), n_atoms: int = 1000) -> list[ControlReport]:
    """Statistic DP on the two-path control MDP; greedy action at the start state per algorithm."""
    mdp = build_control_mdp(n_atoms)
    pi = Policy.uniform(mdp.num_states, mdp.num_actions)
    q = policy_evaluation(mdp, pi)
    out = []
    for name in algorithms:
        strategy, fams = CONTROL_ALGORITHMS[name]
        table = StatTable.initial(mdp.num_states, mdp.num_actions, fams(), strategy)
        fitted = dp_fixed_point(table, mdp, pi).table
        out.append(ControlReport(name, fitted.mean_estimates(0), greedy_action(fitted, 0), q[0].copy()))
    return out


# projections -----------------------------------------------------------------------------------------------------


@dataclass
class ProjectionReport:
    """Largest violation (positive means broken) of each projection inequality."""

    cramer_nonexpansion: float
    cramer_error: float
    w1_error: float
    n_pairs: int

    def passed(self, slack: float = 1e-9) -> bool:
        return max(self.cramer_nonexpansion, self.cramer_error, self.w1_error) <= slack


def _random_dist(rng, lo, hi, max_atoms=12):
    n = int(rng.integers(1, max_atoms + 1))
    return DiscreteDist(rng.uniform(lo, hi, n), rng.dirichlet(np.ones(n)))


def check_projection_bounds(n_pairs: int, rng: np.random.Generator | int | None = None) -> ProjectionReport:
    """Cramér projection is a W1 non-expansion with error at most half a bin; the
    quantile projection onto ``k`` atoms errs by at most width/k."""
    rng = np.random.default_rng(rng)
    nonexp = cerr = werr = -np.inf
    for _ in range(n_pairs):
        k = int(rng.integers(2, 30))
        lo = rng.uniform(-5, 0)
        z = np.linspace(lo, lo + rng.uniform(0.1, 10), k)
        d1 = _random_dist(rng, z[0] - 2, z[-1] + 2)
        d2 = _random_dist(rng, z[0] - 2, z[-1] + 2)
        nonexp = max(nonexp, wasserstein1(cramer_project(d1, z), cramer_project(d2, z)) - wasserstein1(d1, d2))
        inside = _random_dist(rng, z[0], z[-1])
        cerr = max(cerr, wasserstein1(cramer_project(inside, z), inside) - (z[-1] - z[0]) / (2 * (k - 1)))
        werr = max(werr, wasserstein1(w1_project(d1, k), d1) - d1.support_width / k)
    return ProjectionReport(float(nonexp), float(cerr), float(werr), n_pairs)
