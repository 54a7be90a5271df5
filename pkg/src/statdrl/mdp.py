"""Tabular MDPs, benchmark environments and ground-truth return distributions.

Conventions
-----------
Rewards may depend on the transition: ``reward(x, a, x_next)`` is the law of
the reward received when ``a`` is taken in ``x`` and the process moves to
``x_next``. A *terminal* state pays its reward ``reward(x, a, x)`` once and the
episode ends, so its return distribution is exactly that reward law. Terminal
transition rows are self-loops and are never bootstrapped from.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .distributions import (
    DiscreteDist,
    _canonical,
    _gauss_cells,
    discretize_cdf,
    discretize_ppf,
    sample,
    wasserstein1,
)

logger = logging.getLogger(__name__)

ROW_TOL = 1e-12
FORWARD, BACKWARD = 0, 1


class MdpError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history or []


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with per-transition reward laws.

    Use :meth:`build` rather than the raw constructor; it validates rows and
    broadcasts per-(state, action) rewards over next states.
    """

    transition: np.ndarray
    rewards: tuple
    terminal: np.ndarray
    gamma: float
    start_state: int = 0
    name: str = "mdp"
    _succ: tuple = field(default=(), repr=False)

    @classmethod
    def build(cls, transition, rewards, terminal=None, gamma=0.9, start_state=0, name="mdp",
              allow_undiscounted=False):
        P = np.array(transition, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise MdpError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        term = np.zeros(S, dtype=bool) if terminal is None else np.array(terminal, dtype=bool)
        if term.shape != (S,):
            raise MdpError("terminal flags must have one entry per state")
        gamma = float(gamma)
        if not 0.0 <= gamma < 1.0 and not (allow_undiscounted and gamma == 1.0):
            raise MdpError(f"gamma must lie in [0, 1), got {gamma}")
        for x in np.flatnonzero(term):
            P[x] = 0.0
            P[x, :, x] = 1.0
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > ROW_TOL):
            raise MdpError("transition rows must be probability vectors")
        if not 0 <= start_state < S:
            raise MdpError("start state out of range")
        table = []
        for x in range(S):
            row = []
            for a in range(A):
                entry = rewards[x][a]
                if isinstance(entry, DiscreteDist):
                    per_next = [entry] * S
                else:
                    per_next = list(entry)
                    if len(per_next) != S:
                        raise MdpError(f"reward list for ({x}, {a}) must have {S} entries")
                for y in range(S):
                    if P[x, a, y] > 0 and not isinstance(per_next[y], DiscreteDist):
                        raise MdpError(f"missing reward law for transition ({x}, {a}, {y})")
                row.append(tuple(per_next))
            table.append(tuple(row))
        P.flags.writeable = False
        term.flags.writeable = False
        succ = tuple(
            tuple(
                tuple((int(y), float(P[x, a, y]), table[x][a][y]) for y in np.flatnonzero(P[x, a] > 0))
                for a in range(A)
            )
            for x in range(S)
        )
        if gamma == 1.0:
            _check_finite_horizon(P, term)
        return cls(P, tuple(table), term, gamma, int(start_state), name, succ)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    def reward(self, x: int, a: int, x_next: int | None = None) -> DiscreteDist:
        """Reward law of ``(x, a)``; for terminal states ``x_next`` is ignored."""
        if self.terminal[x]:
            return self.rewards[x][a][x]
        if x_next is None:
            laws = [(p, r) for _, p, r in self._succ[x][a]]
            if all(r is laws[0][1] for _, r in laws):
                return laws[0][1]
            raise MdpError(f"reward of ({x}, {a}) depends on the next state; pass x_next")
        return self.rewards[x][a][x_next]

    def successors(self, x: int, a: int):
        return self._succ[x][a]

    def reward_bounds(self) -> tuple[float, float]:
        lo, hi = np.inf, -np.inf
        for x in range(self.num_states):
            for a in range(self.num_actions):
                laws = [self.rewards[x][a][x]] if self.terminal[x] else [r for _, _, r in self._succ[x][a]]
                for r in laws:
                    lo = min(lo, r.atoms[0])
                    hi = max(hi, r.atoms[-1])
        return float(lo), float(hi)

    def mean_reward(self) -> np.ndarray:
        S, A = self.num_states, self.num_actions
        out = np.zeros((S, A))
        for x in range(S):
            for a in range(A):
                if self.terminal[x]:
                    out[x, a] = self.rewards[x][a][x].mean
                else:
                    out[x, a] = sum(p * r.mean for _, p, r in self._succ[x][a])
        return out

    def to_dict(self) -> dict:
        """Plain-data form: transition tensor and one reward law per positive-probability transition."""
        rewards = {
            f"{x},{a},{y}": self.rewards[x][a][y].to_dict()
            for x in range(self.num_states)
            for a in range(self.num_actions)
            for y in range(self.num_states)
            if self.transition[x, a, y] > 0
        }
        return {
            "name": self.name,
            "gamma": self.gamma,
            "start_state": self.start_state,
            "terminal": self.terminal.tolist(),
            "transition": self.transition.tolist(),
            "rewards": rewards,
        }


def _check_finite_horizon(P, term):
    # undiscounted problems need every path to end at a terminal state
    live = ~term
    reach = (P.max(axis=1) > 0) & live[None, :] & live[:, None]
    power = reach.astype(float)
    for _ in range(P.shape[0]):
        power = power @ reach
    if power.any():
        raise MdpError("gamma = 1 requires every trajectory to reach a terminal state")


@dataclass(frozen=True, eq=False)
class Policy:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise MdpError("policy must be a (num_states, num_actions) array")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > ROW_TOL):
            raise MdpError("policy rows must be probability vectors")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @classmethod
    def deterministic(cls, actions: Sequence[int], num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, num_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "Policy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    def actions(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.probs[x] > 0)

    def sample(self, x: int, rng: np.random.Generator) -> int:
        row = self.probs[x]
        nz = np.flatnonzero(row > 0)
        if nz.size == 1:
            return int(nz[0])
        return int(min(np.searchsorted(np.cumsum(row), rng.random(), side="right"), row.size - 1))


@dataclass(frozen=True)
class Transition:
    x: int
    a: int
    r: float
    x_next: int
    a_next: int
    terminal: bool = False


class DistTable:
    """Return-distribution estimate for every (state, action) pair."""

    def __init__(self, dists):
        self._dists = [list(row) for row in dists]
        if not self._dists or not self._dists[0]:
            raise MdpError("empty distribution table")

    @classmethod
    def constant(cls, num_states: int, num_actions: int, dist: DiscreteDist) -> "DistTable":
        return cls([[dist] * num_actions for _ in range(num_states)])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self._dists), len(self._dists[0])

    def __getitem__(self, key) -> DiscreteDist:
        x, a = key
        return self._dists[x][a]

    def __iter__(self):
        for x, row in enumerate(self._dists):
            for a, d in enumerate(row):
                yield (x, a), d

    def means(self) -> np.ndarray:
        return np.array([[d.mean for d in row] for row in self._dists])

    def sup_w1(self, other: "DistTable") -> float:
        return max(wasserstein1(d, other[key]) for key, d in self)


def bellman_target(eta: DistTable, mdp: TabularMdp, pi: Policy, x: int, a: int) -> DiscreteDist:
    """One application of the distributional Bellman operator at ``(x, a)``."""
    atoms, weights = _target_arrays(eta, mdp, pi, x, a)
    return DiscreteDist._trusted(atoms, weights)


def _state_mixture(eta, pi, y):
    acts = pi.actions(y)
    if acts.size == 1:
        d = eta[y, acts[0]]
        return d.atoms, d.weights
    return (np.concatenate([eta[y, b].atoms for b in acts]),
            np.concatenate([pi.probs[y, b] * eta[y, b].weights for b in acts]))


def next_state_mixtures(eta, mdp, pi) -> list:
    """Atoms and weights of ``sum_b pi(b|y) eta(y, b)`` for every state ``y``."""
    return [_state_mixture(eta, pi, y) for y in range(mdp.num_states)]


def _target_arrays(eta, mdp, pi, x, a, mix=None):
    if mdp.terminal[x]:
        r = mdp.rewards[x][a][x]
        return r.atoms, r.weights
    gamma = mdp.gamma
    atoms, weights = [], []
    for y, p, r in mdp.successors(x, a):
        za, zw = _state_mixture(eta, pi, y) if mix is None else mix[y]
        atoms.append((r.atoms[:, None] + gamma * za[None, :]).ravel())
        weights.append((p * r.weights[:, None] * zw[None, :]).ravel())
    atoms = np.concatenate(atoms)
    weights = np.concatenate(weights)
    return atoms, weights / weights.sum()


def _compressed(atoms, weights, grid):
    reduced = grid is not None and atoms.size > grid[3]
    if reduced:
        lo, width, n_cells, _ = grid
        atoms, weights = _gauss_cells(atoms, weights, lo, width, n_cells)
    atoms, weights = _canonical(atoms, weights)
    return DiscreteDist._trusted(atoms, weights), reduced


def support_bounds(mdp: TabularMdp, pi: Policy, max_iters: int = 100000) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest attainable return for every (state, action) pair."""
    S, A = mdp.num_states, mdp.num_actions
    lo, hi = np.zeros((S, A)), np.zeros((S, A))
    acts = [pi.actions(y) for y in range(S)]
    for _ in range(max_iters):
        new_lo, new_hi = np.empty_like(lo), np.empty_like(hi)
        for x in range(S):
            for a in range(A):
                if mdp.terminal[x]:
                    r = mdp.rewards[x][a][x]
                    new_lo[x, a], new_hi[x, a] = r.atoms[0], r.atoms[-1]
                    continue
                succ = mdp.successors(x, a)
                new_lo[x, a] = min(r.atoms[0] + mdp.gamma * lo[y, acts[y]].min() for y, _, r in succ)
                new_hi[x, a] = max(r.atoms[-1] + mdp.gamma * hi[y, acts[y]].max() for y, _, r in succ)
        done = max(np.abs(new_lo - lo).max(), np.abs(new_hi - hi).max()) <= 1e-13 * (1 + np.abs(hi).max())
        lo, hi = new_lo, new_hi
        if done:
            break
    return lo, hi


def exact_return_dist(
    mdp: TabularMdp,
    pi: Policy,
    tol: float = 1e-8,
    max_iters: int = 20000,
    max_atoms: int | None = 2000,
    return_info: bool = False,
):
    """Return distributions of ``pi`` by distributional Bellman iteration.

    Starts from the Dirac at zero everywhere and sweeps until the sup-W1 change
    is at most ``tol``. On MDPs whose support keeps growing, a distribution with
    more than ``max_atoms`` atoms is reduced cellwise: the range of attainable
    returns of its (state, action) pair is cut into ``max_atoms // 3`` fixed
    cells and each crowded cell is replaced by its three-point Gauss rule.
    This keeps raw moments of order up to five exact and moves no atom outside
    its cell. ``max_atoms=None`` disables the reduction.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    S, A = mdp.num_states, mdp.num_actions
    grids = [[None] * A for _ in range(S)]
    if max_atoms is not None:
        lo, hi = support_bounds(mdp, pi)
        n_cells = max(1, max_atoms // 3)
        for x in range(S):
            for a in range(A):
                left, right = min(lo[x, a], 0.0), max(hi[x, a], 0.0)
                width = (right - left) / n_cells
                if width > 0:
                    grids[x][a] = (left, width, n_cells, max_atoms)
    eta = DistTable.constant(S, A, DiscreteDist.dirac(0.0))
    history = []
    # with reduction active the residual settles at a small floor set by the
    # cell widths; the unreduced iterate is within gamma**n * span of its limit
    span = 0.0
    if max_atoms is not None:
        span = max(np.abs(lo).max(), np.abs(hi).max())
    for sweep in range(1, max_iters + 1):
        rows, reduced = [], False
        mix = next_state_mixtures(eta, mdp, pi)
        for x in range(S):
            row = []
            for a in range(A):
                d, hit = _compressed(*_target_arrays(eta, mdp, pi, x, a, mix), grids[x][a])
                row.append(d)
                reduced = reduced or hit
            rows.append(row)
        new = DistTable(rows)
        settled = reduced and mdp.gamma ** sweep * span <= tol
        # the residual only decides the stop while no reduction happened
        residual = new.sup_w1(eta) if settled or not reduced else np.nan
        history.append(residual)
        eta = new
        if settled or residual <= tol:
            logger.debug("exact_return_dist stopped after %d sweeps (residual %.3g)", sweep, residual)
            if return_info:
                return eta, {"sweeps": sweep, "residual": residual, "history": history, "reduced": reduced}
            return eta
    raise NonConvergenceError(
        f"no convergence after {max_iters} sweeps (last residual {history[-1]:.3g})",
        residual=history[-1],
        history=history,
    )


def policy_evaluation(mdp: TabularMdp, pi: Policy) -> np.ndarray:
    """Classical action values Q^pi by solving the linear Bellman equation."""
    S, A = mdp.num_states, mdp.num_actions
    n = S * A
    r = mdp.mean_reward().ravel()
    M = np.zeros((n, n))
    for x in range(S):
        if mdp.terminal[x]:
            continue
        for a in range(A):
            for y, p, _ in mdp.successors(x, a):
                M[x * A + a, y * A : (y + 1) * A] += p * pi.probs[y]
    q = np.linalg.solve(np.eye(n) - mdp.gamma * M, r)
    return q.reshape(S, A)


def rollout(mdp: TabularMdp, pi: Policy, start: int, rng: np.random.Generator, horizon_cap: int = 2000,
            first_action: int | None = None) -> float:
    """Discounted return of one sampled episode (truncated after ``horizon_cap`` steps)."""
    if horizon_cap < 1:
        raise ValueError("horizon_cap must be at least 1")
    x = start
    ret, disc = 0.0, 1.0
    for t in range(horizon_cap):
        a = first_action if (t == 0 and first_action is not None) else pi.sample(x, rng)
        if mdp.terminal[x]:
            return ret + disc * sample(mdp.rewards[x][a][x], rng)
        succ = mdp.successors(x, a)
        if len(succ) == 1:
            y, _, law = succ[0]
        else:
            probs = mdp.transition[x, a]
            y = int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), probs.size - 1))
            law = mdp.rewards[x][a][y]
        ret += disc * sample(law, rng)
        disc *= mdp.gamma
        x = y
    return ret


def monte_carlo_return_dist(mdp, pi, start, n_rollouts, rng, horizon_cap=2000, first_action=None) -> DiscreteDist:
    """Empirical distribution of ``n_rollouts`` sampled returns."""
    returns = [rollout(mdp, pi, start, rng, horizon_cap, first_action) for _ in range(n_rollouts)]
    return DiscreteDist.uniform(returns)


# --------------------------------------------------------------------------
# environments


def reward_law(spec) -> DiscreteDist:
    """Reward law from a small description.

    Accepts a :class:`DiscreteDist`, a number (Dirac), or a mapping with key
    ``kind`` in ``dirac | discrete | uniform | gaussian | exponential |
    reflected_exponential | bimodal``.
    """
    if isinstance(spec, DiscreteDist):
        return spec
    if isinstance(spec, (int, float)):
        return DiscreteDist.dirac(float(spec))
    kind = spec.get("kind")
    n = int(spec.get("n_atoms", 1000))
    if kind == "dirac":
        return DiscreteDist.dirac(float(spec.get("value", 1.0)))
    if kind == "discrete":
        return DiscreteDist(spec["atoms"], spec["weights"])
    if kind == "uniform":
        lo, hi = float(spec.get("low", -1.0)), float(spec.get("high", 1.0))
        return discretize_ppf(lambda u: lo + (hi - lo) * u, n)
    if kind == "gaussian":
        mu, sd = float(spec.get("mean", 0.0)), float(spec.get("std", 1.0))
        return discretize_ppf(lambda u: stats.norm.ppf(u, mu, sd), n)
    if kind == "exponential":
        rate = float(spec.get("rate", 1.0))
        return discretize_ppf(lambda u: stats.expon.ppf(u, scale=1.0 / rate), n)
    if kind == "reflected_exponential":
        top = float(spec.get("top", 1.85))
        # density exp(x - top) on x <= top; mean top - 1
        return discretize_ppf(lambda u: top - stats.expon.ppf(1.0 - u), n)
    if kind == "bimodal":
        sep, sd = float(spec.get("separation", 1.0)), float(spec.get("std", 0.25))
        mix = lambda t: 0.5 * stats.norm.cdf(t, -sep, sd) + 0.5 * stats.norm.cdf(t, sep, sd)
        return discretize_cdf(mix, -sep - 12 * sd, sep + 12 * sd, n)
    raise MdpError(f"unknown reward law kind {kind!r}")


def build_nchain(n: int = 15, p_forward: float = 0.95, gamma: float = 0.99, goal_reward=None) -> TabularMdp:
    """Chain of ``n`` states; action 0 moves forward, action 1 resets.

    ``forward`` advances w.p. ``p_forward`` and otherwise returns to the
    leftmost state; ``backward`` does the opposite. Entering the leftmost
    state pays -1, entering the rightmost (terminal) state pays ``goal_reward``
    (default +1), every other transition pays 0.
    """
    if n < 2:
        raise MdpError("chain length must be at least 2")
    if not 0.0 < p_forward <= 1.0:
        raise MdpError("p_forward must lie in (0, 1]")
    goal = reward_law(1.0 if goal_reward is None else goal_reward)
    zero, minus = DiscreteDist.dirac(0.0), DiscreteDist.dirac(-1.0)
    P = np.zeros((n, 2, n))
    for x in range(n - 1):
        P[x, FORWARD, x + 1] += p_forward
        P[x, FORWARD, 0] += 1.0 - p_forward
        P[x, BACKWARD, 0] += p_forward
        P[x, BACKWARD, x + 1] += 1.0 - p_forward
    rewards = []
    for x in range(n):
        row = []
        for _ in range(2):
            per_next = [zero] * n
            per_next[0] = minus
            per_next[n - 1] = goal
            if x == n - 1:
                per_next = [zero] * n
            row.append(per_next)
        rewards.append(row)
    terminal = np.zeros(n, dtype=bool)
    terminal[n - 1] = True
    return TabularMdp.build(P, rewards, terminal, gamma, start_state=0, name=f"nchain{n}")


def optimal_nchain_policy(mdp: TabularMdp) -> Policy:
    return Policy.deterministic([FORWARD] * mdp.num_states, 2)


def build_absorbing_chain(length: int = 6, gamma: float = 0.9, terminal_reward=None) -> TabularMdp:
    """One-action chain ending in an absorbing state that pays ``terminal_reward``."""
    if length < 2:
        raise MdpError("chain length must be at least 2")
    law = reward_law({"kind": "bimodal"} if terminal_reward is None else terminal_reward)
    zero = DiscreteDist.dirac(0.0)
    P = np.zeros((length, 1, length))
    for x in range(length - 1):
        P[x, 0, x + 1] = 1.0
    rewards = [[zero] for _ in range(length - 1)] + [[law]]
    terminal = np.zeros(length, dtype=bool)
    terminal[-1] = True
    return TabularMdp.build(P, rewards, terminal, gamma, name=f"absorbing{length}")


def build_control_mdp(n_atoms: int = 1000) -> TabularMdp:
    """Five-state, two-path control problem with undiscounted returns.

    ``x0 -a1-> x1 -> x3`` and ``x0 -a2-> x2 -> x4``. The terminal state ``x3``
    pays a discretized Exp(1) reward (mean 1); ``x4`` pays the reflected
    exponential with density ``exp(l - 1.85)`` on ``l <= 1.85`` (mean 0.85).
    In states other than ``x0`` both actions behave identically.
    """
    zero = DiscreteDist.dirac(0.0)
    P = np.zeros((5, 2, 5))
    P[0, 0, 1] = P[0, 1, 2] = 1.0
    P[1, :, 3] = 1.0
    P[2, :, 4] = 1.0
    exp_law = reward_law({"kind": "exponential", "n_atoms": n_atoms})
    refl_law = reward_law({"kind": "reflected_exponential", "top": 1.85, "n_atoms": n_atoms})
    rewards = [[zero, zero], [zero, zero], [zero, zero], [exp_law, exp_law], [refl_law, refl_law]]
    terminal = np.array([False, False, False, True, True])
    return TabularMdp.build(P, rewards, terminal, 1.0, name="control", allow_undiscounted=True)


def build_quantile_nonclosed_mdp(variant: str, k_quantiles: int, gamma: float = 0.9, n_atoms: int = 1000) -> TabularMdp:
    """``x0`` moves to terminal ``x1`` or ``x2`` with equal probability.

    Variant ``A`` pays Unif[0, 1] and Unif[1/K, 1 + 1/K]; variant ``B`` pays the
    uniform mixtures of Diracs at ``(2k-1)/2K`` and ``(2k+1)/2K``.
    """
    K = int(k_quantiles)
    if K < 1:
        raise MdpError("k_quantiles must be positive")
    if variant == "A":
        r1 = reward_law({"kind": "uniform", "low": 0.0, "high": 1.0, "n_atoms": n_atoms})
        r2 = reward_law({"kind": "uniform", "low": 1.0 / K, "high": 1.0 + 1.0 / K, "n_atoms": n_atoms})
    elif variant == "B":
        k = np.arange(1, K + 1)
        r1 = DiscreteDist.uniform((2 * k - 1) / (2 * K))
        r2 = DiscreteDist.uniform((2 * k + 1) / (2 * K))
    else:
        raise MdpError(f"variant must be 'A' or 'B', got {variant!r}")
    zero = DiscreteDist.dirac(0.0)
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = P[0, 0, 2] = 0.5
    terminal = np.array([False, True, True])
    return TabularMdp.build(P, [[zero], [r1], [r2]], terminal, gamma, name=f"quantile_nonclosed_{variant}")


def build_qdrl_mean_counterexample(k_quantiles: int) -> TabularMdp:
    """Single terminal state with two actions whose quantiles hide the better mean."""
    K = int(k_quantiles)
    if K < 1:
        raise MdpError("k_quantiles must be positive")
    r1 = DiscreteDist([0.0, 1.0], [(4 * K - 1) / (4 * K), 1 / (4 * K)])
    r2 = DiscreteDist.dirac(1 / (8 * K))
    P = np.ones((1, 2, 1))
    return TabularMdp.build(P, [[r1, r2]], [True], 0.0, name="qdrl_mean_counterexample")


def random_mdp(rng: np.random.Generator, max_states: int = 5, num_actions: int = 2, gamma: float = 0.9,
               r_max: float = 1.0, max_reward_atoms: int = 4) -> TabularMdp:
    """Random MDP: Dirichlet(1) transition rows and small random reward laws."""
    S = int(rng.integers(1, max_states + 1))
    P = rng.dirichlet(np.ones(S), size=(S, num_actions))
    rewards = []
    for _ in range(S):
        row = []
        for _ in range(num_actions):
            m = int(rng.integers(1, max_reward_atoms + 1))
            row.append(DiscreteDist(rng.uniform(-r_max, r_max, m), rng.dirichlet(np.ones(m))))
        rewards.append(row)
    return TabularMdp.build(P, rewards, None, gamma, name="random")


def random_policy(rng: np.random.Generator, num_states: int, num_actions: int) -> Policy:
    return Policy(rng.dirichlet(np.ones(num_actions), size=num_states))
