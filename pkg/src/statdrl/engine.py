"""Statistic tables, projections, imputation-based DP and stochastic training."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .distributions import DiscreteDist, quantiles, sample
from .imputation import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    STALL_DAMPING,
    ImputationError,
    InfeasibleStatisticsError,
    check_strategy,
    impute,
    impute_qdrl,
)
from .mdp import (
    DistTable,
    NonConvergenceError,
    Policy,
    TabularMdp,
    Transition,
    _target_arrays,
    bellman_target,
    next_state_mixtures,
)
from .statistics import StatisticSet, evaluate_set, midpoint_taus

logger = logging.getLogger(__name__)

SPACING_RTOL = 1e-9
# solver iterations per imputation during stochastic training
TRAIN_MAX_ITERS = 5
TRAIN_MAX_DAMPING = 1e-1

__all__ = [
    "StatTable",
    "DistTable",
    "dist_bellman",
    "cramer_project",
    "w1_project",
    "dp_update",
    "dp_fixed_point",
    "sgd_update",
    "greedy_action",
    "train",
    "make_statistics",
]


class UnsupportedControlError(ValueError):
    pass


class ProjectionError(ValueError):
    pass


def make_statistics(strategy: str, k: int, kappa: float = 1.0, supports=None, taus=None) -> StatisticSet:
    """Statistic set a strategy works with: ``k`` statistics at midpoint levels by default."""
    if strategy in ("expectile", "naive-expectile"):
        return StatisticSet.expectiles(k, taus=taus)
    if strategy in ("huber", "naive-huber"):
        return StatisticSet.huber_quantiles(k, kappa, taus=taus)
    if strategy == "qdrl":
        return StatisticSet.quantiles(k, taus=taus)
    if strategy == "cdrl":
        if supports is None:
            raise ValueError("cdrl needs a support")
        return StatisticSet.categorical(supports)
    raise ValueError(f"unknown strategy {strategy!r}")


class StatTable:
    """Statistic estimates for every (state, action) pair.

    ``values`` has shape ``(num_states, num_actions, K)``. Imputed
    distributions are cached per pair and recomputed only after that pair's
    values change; the previous atoms warm-start the solver.

    With ``lenient=True`` (stochastic training) statistic vectors that are
    not monotone are sorted before imputation and solver failures fall back
    to the best available atoms, each logged once per table. ``fallback`` is
    passed on to :func:`impute`.
    """

    def __init__(self, values, families: StatisticSet, strategy: str, n_atoms: int | None = None,
                 tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS, lenient: bool = False,
                 fallback: bool = True, max_damping: float = STALL_DAMPING):
        check_strategy(strategy, families)
        values = np.array(values, dtype=float)
        if values.ndim != 3 or values.shape[2] != len(families):
            raise ValueError(f"values must have shape (S, A, {len(families)}), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("statistic values must be finite")
        self.values = values
        self.families = families
        self.strategy = strategy
        self.n_atoms = n_atoms
        self.tol = tol
        self.max_iters = max_iters
        self.lenient = lenient
        self.fallback = fallback
        self.max_damping = max_damping
        self._version = np.zeros(values.shape[:2], dtype=np.int64)
        self._cache: dict = {}
        self._warned: set = set()

    @classmethod
    def initial(cls, num_states: int, num_actions: int, families: StatisticSet, strategy: str, **opts) -> "StatTable":
        """Every pair starts at the statistics of the Dirac at zero."""
        base = evaluate_set(families, DiscreteDist.dirac(0.0))
        return cls(np.broadcast_to(base, (num_states, num_actions, base.size)), families, strategy, **opts)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[:2]

    def copy(self) -> "StatTable":
        out = StatTable(self.values, self.families, self.strategy, self.n_atoms, self.tol, self.max_iters,
                        self.lenient, self.fallback, self.max_damping)
        out._cache = dict(self._cache)
        out._version = self._version.copy()
        return out

    def set(self, x: int, a: int, values) -> None:
        self.values[x, a] = values
        self._version[x, a] += 1

    def _warn_once(self, key, msg, *args):
        if key not in self._warned:
            self._warned.add(key)
            logger.info(msg, *args)

    def impute(self, x: int, a: int) -> DiscreteDist:
        version = self._version[x, a]
        hit = self._cache.get((x, a))
        if hit is not None and hit[0] == version:
            return hit[1]
        dist = self._impute_values(self.values[x, a], None if hit is None else hit[2], (x, a))
        atoms = dist.atoms if dist.atoms.size == (self.n_atoms or len(self.families)) else None
        self._cache[(x, a)] = (version, dist, atoms)
        return dist

    def _impute_values(self, values, init, where) -> DiscreteDist:
        strategy = self.strategy
        if self.lenient:
            if strategy == "cdrl":
                values = np.maximum.accumulate(np.clip(values, 0.0, 1.0))
            elif np.any(np.diff(values) < 0):
                self._warn_once("sorted", "non-monotone statistics at %s sorted before imputation", where)
                values = np.sort(values)
        try:
            return impute(strategy, self.families, values, self.n_atoms, self.tol, self.max_iters, init,
                          self.fallback, self.max_damping)
        except (ImputationError, InfeasibleStatisticsError) as exc:
            if not self.lenient:
                raise type(exc)(f"imputation failed at (state, action) = {where}: {exc}") from exc
            self._warn_once("failed", "imputation failed at %s (%s); using best-effort atoms", where, exc)
            atoms = getattr(exc, "atoms", None)
            return impute_qdrl(values if atoms is None else atoms)

    def dists(self) -> DistTable:
        S, A = self.shape
        return DistTable([[self.impute(x, a) for a in range(A)] for x in range(S)])

    def mean_estimates(self, x: int) -> np.ndarray:
        """Expected-return estimate of each action at ``x``."""
        if self.strategy in ("expectile", "naive-expectile"):
            taus = self.families.taus
            hit = np.flatnonzero(np.abs(taus - 0.5) < 1e-12)
            if hit.size == 0:
                raise UnsupportedControlError("expectile sets need tau = 0.5 to estimate the mean")
            return self.values[x, :, hit[0]].copy()
        return np.array([self.impute(x, a).mean for a in range(self.shape[1])])


def dist_bellman(eta: DistTable, mdp: TabularMdp, pi: Policy, x: int, a: int) -> DiscreteDist:
    """Distributional Bellman target at ``(x, a)``; terminal pairs return their reward law."""
    return bellman_target(eta, mdp, pi, x, a)


def _check_even(z):
    z = np.asarray(z, dtype=float)
    if z.size < 2:
        raise ProjectionError("need at least two support points")
    gaps = np.diff(z)
    if np.any(gaps <= 0) or np.ptp(gaps) > SPACING_RTOL * gaps.mean():
        raise ProjectionError("support must be strictly increasing and evenly spaced")
    return z


def _cramer_weights(atoms, weights, z):
    k = z.size
    width = (z[-1] - z[0]) / (k - 1)
    pos = (np.clip(atoms, z[0], z[-1]) - z[0]) / width
    idx = np.minimum(np.floor(pos).astype(np.int64), k - 2)
    frac = np.clip(pos - idx, 0.0, 1.0)
    return np.bincount(idx, weights * (1.0 - frac), k) + np.bincount(idx + 1, weights * frac, k)


def cramer_project(d: DiscreteDist, supports) -> DiscreteDist:
    """Split each atom's mass between its two neighbouring support points; clamp outside."""
    z = _check_even(supports)
    probs = _cramer_weights(d.atoms, d.weights, z)
    return DiscreteDist(z, probs / probs.sum())


def w1_project(d: DiscreteDist, k: int) -> DiscreteDist:
    """``k`` equally weighted atoms at the midpoint quantile levels."""
    if k < 1:
        raise ProjectionError("k must be positive")
    return DiscreteDist.uniform(quantiles(d, midpoint_taus(k)))


def dp_update(table: StatTable, mdp: TabularMdp, pi: Policy) -> StatTable:
    """One simultaneous sweep: impute, back up, re-estimate statistics everywhere."""
    S, A = table.shape
    if (S, A) != (mdp.num_states, mdp.num_actions):
        raise ValueError("table and MDP shapes differ")
    eta = table.dists()
    mix = next_state_mixtures(eta, mdp, pi)
    new = np.empty_like(table.values)
    for x in range(S):
        for a in range(A):
            atoms, weights = _target_arrays(eta, mdp, pi, x, a, mix)
            new[x, a] = evaluate_set(table.families, DiscreteDist._trusted(atoms, weights))
    out = StatTable(new, table.families, table.strategy, table.n_atoms, table.tol, table.max_iters, table.lenient,
                    table.fallback, table.max_damping)
    # warm starts carry over even though every entry is new
    out._cache = {key: (-1, val[1], val[2]) for key, val in table._cache.items()}
    return out


@dataclass
class FixedPointResult:
    table: StatTable
    sweeps: int
    residual: float
    history: list = field(default_factory=list)


def dp_fixed_point(table: StatTable, mdp: TabularMdp, pi: Policy, tol: float = 1e-10,
                   max_sweeps: int = 10_000) -> FixedPointResult:
    """Iterate :func:`dp_update` until the largest statistic change is at most ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    history = []
    for sweep in range(1, max_sweeps + 1):
        new = dp_update(table, mdp, pi)
        residual = float(np.max(np.abs(new.values - table.values)))
        history.append(residual)
        table = new
        if residual <= tol:
            return FixedPointResult(table, sweep, residual, history)
    raise NonConvergenceError(
        f"statistic DP did not converge in {max_sweeps} sweeps (last change {history[-1]:.3g})",
        residual=history[-1],
        history=history,
    )


def _target_for(table: StatTable, mdp: TabularMdp, t: Transition, naive: bool) -> DiscreteDist:
    if t.terminal:
        return DiscreteDist.dirac(t.r)
    if naive:
        nxt = impute_qdrl(table.values[t.x_next, t.a_next])
    else:
        nxt = table.impute(t.x_next, t.a_next)
    return DiscreteDist._trusted(t.r + mdp.gamma * nxt.atoms, nxt.weights)


def _stat_gradient(families: StatisticSet, q: np.ndarray, target: DiscreteDist) -> np.ndarray:
    z, w = target.atoms, target.weights
    kind = families.kind
    if kind == "categorical":
        zs = families.supports
        h = np.clip((zs[1:, None] - z[None, :]) / np.diff(zs)[:, None], 0.0, 1.0)
        return q - h @ w
    diff = z[None, :] - q[:, None]
    taus = families.taus[:, None]
    if kind == "expectile":
        coef = np.where(diff <= 0, 1.0 - taus, taus)
        return -2.0 * (coef * diff) @ w
    if kind == "quantile":
        below = (diff <= 0) @ w
        return (1.0 - taus[:, 0]) * below - taus[:, 0] * (1.0 - below)
    if kind == "huber_quantile":
        kappa = families.kappa
        return ((1.0 - taus) * np.clip(-diff, 0.0, kappa) - taus * np.clip(diff, 0.0, kappa)) @ w
    raise ValueError(f"no stochastic update for {kind} statistics")


def _sgd_step(table: StatTable, mdp: TabularMdp, t: Transition, alpha: float, naive: bool) -> None:
    target = _target_for(table, mdp, t, naive)
    grad = _stat_gradient(table.families, table.values[t.x, t.a], target)
    table.set(t.x, t.a, table.values[t.x, t.a] - alpha * grad)


def sgd_update(table: StatTable, t: Transition, alpha: float, mdp: TabularMdp, mode: str | None = None) -> StatTable:
    """One stochastic gradient step on the statistic losses at ``(t.x, t.a)``.

    ``mode="imputing"`` builds the target from the imputed next-state
    distribution; ``mode="naive"`` treats the stored statistics as samples.
    The default follows the table's strategy. Returns a new table.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if mode is None:
        mode = "naive" if table.strategy.startswith("naive") else "imputing"
    if mode not in ("imputing", "naive"):
        raise ValueError("mode must be 'imputing' or 'naive'")
    out = table.copy()
    _sgd_step(out, mdp, t, alpha, mode == "naive")
    return out


def greedy_action(table: StatTable, x: int) -> int:
    """Action with the largest estimated mean return; ties go to the lowest index."""
    return int(np.argmax(table.mean_estimates(x)))


@dataclass
class TrainResult:
    table: StatTable
    steps: int
    episodes: int
    snapshots: list = field(default_factory=list)


def _sample_index(cum: np.ndarray, rng: np.random.Generator) -> int:
    return int(min(np.searchsorted(cum, rng.random(), side="right"), cum.size - 1))


def train(mdp: TabularMdp, policy: Policy, families: StatisticSet, strategy: str, alpha: float = 0.05,
          n_steps: int = 30_000, rng: np.random.Generator | int | None = None, control: bool = False,
          epsilon: float = 0.05, record_every: int = 0, n_atoms: int | None = None, tol: float = DEFAULT_TOL,
          max_iters: int = TRAIN_MAX_ITERS, fallback: bool | None = None,
          table: StatTable | None = None) -> TrainResult:
    """Run episodes from the start state and apply one update per transition.

    In evaluation mode actions follow ``policy`` (on-policy). With
    ``control=True`` the behaviour is epsilon-greedy on the current mean
    estimates and the bootstrap action is the greedy one. Every
    ``record_every`` steps a copy of the value array is stored in
    ``snapshots`` as ``(step, values)``; step 0 and the final step are always
    included when recording.

    Imputation gets a short solver budget (``max_iters``) because most
    statistic vectors met during training have no uniform solution. When
    ``fallback`` is None the exact weighted construction is used for
    expectiles and skipped for Huber quantiles, whose weighted fit needs a
    linear program per call; the best-effort atoms are used instead.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    rng = np.random.default_rng(rng)
    S, A = mdp.num_states, mdp.num_actions
    if table is None:
        table = StatTable.initial(S, A, families, strategy, n_atoms=n_atoms, tol=tol, max_iters=max_iters,
                                  lenient=True, fallback=strategy != "huber" if fallback is None else fallback,
                                  max_damping=TRAIN_MAX_DAMPING)
    naive = strategy.startswith("naive")
    cum_p = np.cumsum(mdp.transition, axis=2)
    cum_pi = np.cumsum(policy.probs, axis=1)

    def act(x):
        if control:
            if rng.random() < epsilon:
                return int(rng.integers(A))
            return greedy_action(table, x)
        return _sample_index(cum_pi[x], rng)

    snapshots = []
    if record_every:
        snapshots.append((0, table.values.copy()))
    x, a = mdp.start_state, None
    a = act(x)
    episodes = 0
    for step in range(1, n_steps + 1):
        if mdp.terminal[x]:
            r = sample(mdp.rewards[x][a][x], rng)
            t = Transition(x, a, r, x, a, terminal=True)
        else:
            y = _sample_index(cum_p[x, a], rng)
            r = sample(mdp.rewards[x][a][y], rng)
            b = greedy_action(table, y) if control else _sample_index(cum_pi[y], rng)
            t = Transition(x, a, r, y, b)
        _sgd_step(table, mdp, t, alpha, naive)
        if t.terminal:
            episodes += 1
            x = mdp.start_state
            a = act(x)
        else:
            x = t.x_next
            a = act(x) if control else t.a_next
        if record_every and (step % record_every == 0 or step == n_steps):
            snapshots.append((step, table.values.copy()))
    return TrainResult(table, n_steps, episodes, snapshots)
