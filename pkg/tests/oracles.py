"""Reference computations written independently of the package internals.

They favour obviousness over speed: dense grids, generic root finders,
trajectory enumeration and dense linear solves.
"""
import itertools

import numpy as np
from scipy import optimize


def cdf_on_grid(atoms, weights, grid):
    atoms, weights = np.asarray(atoms, float), np.asarray(weights, float)
    return (weights[None, :] * (atoms[None, :] <= grid[:, None])).sum(axis=1)


def grid_cdf_distance(d1, d2, power=1, n=400_001, lo=None, hi=None):
    """Midpoint-rule integral of ``|F1 - F2|^power`` over a dense grid."""
    lo = min(d1.atoms.min(), d2.atoms.min()) - 1.0 if lo is None else lo
    hi = max(d1.atoms.max(), d2.atoms.max()) + 1.0 if hi is None else hi
    edges = np.linspace(lo, hi, n)
    mid = 0.5 * (edges[1:] + edges[:-1])
    gap = np.abs(cdf_on_grid(d1.atoms, d1.weights, mid) - cdf_on_grid(d2.atoms, d2.weights, mid))
    integral = float(np.sum(gap**power) * (edges[1] - edges[0]))
    return integral if power == 1 else integral ** (1.0 / power)


def expectile_by_root(atoms, weights, tau):
    """Root of the expectile first-order condition by Brent's method."""
    atoms, weights = np.asarray(atoms, float), np.asarray(weights, float)

    def grad(q):
        below = atoms <= q
        return (1 - tau) * np.sum(weights * (q - atoms) * below) - tau * np.sum(weights * (atoms - q) * ~below)

    lo, hi = atoms.min(), atoms.max()
    if hi - lo < 1e-14:
        return float(lo)
    return float(optimize.brentq(grad, lo - 1e-9, hi + 1e-9, xtol=1e-14))


def quantile_by_sorting(atoms, weights, tau):
    order = np.argsort(atoms)
    cum = np.cumsum(np.asarray(weights, float)[order])
    return float(np.asarray(atoms, float)[order][np.searchsorted(cum, tau - 1e-12)])


def huber_loss(u, kappa):
    u = np.abs(u)
    return np.where(u <= kappa, 0.5 * u**2, kappa * (u - 0.5 * kappa))


def grid_minimiser(loss, lo, hi, step=1e-4):
    """Arg-min of a vectorized ``loss`` over a uniform grid; flat minima resolve to their middle."""
    grid = np.arange(lo, hi + step, step)
    vals = loss(grid)
    best = np.flatnonzero(vals <= vals.min() + 1e-13)
    return float(0.5 * (grid[best[0]] + grid[best[-1]]))


def _pointwise(weight_fn):
    def make(atoms, weights, tau, *extra):
        atoms, weights = np.asarray(atoms, float), np.asarray(weights, float)

        def loss(q):
            q = np.asarray(q, float)
            diff = atoms[None, :] - np.atleast_1d(q)[:, None]
            asym = np.where(diff > 0, tau, 1 - tau)
            out = (asym * weight_fn(diff, *extra)) @ weights
            return out if q.ndim else float(out[0])

        return loss

    return make


expectile_loss = _pointwise(lambda u: u**2)
quantile_loss = _pointwise(np.abs)
huber_quantile_loss = _pointwise(huber_loss)


def q_values_by_linear_solve(P, R, pi, terminal, gamma):
    """Classical action values from ``(I - gamma P_pi) q = r`` over pairs, terminals paying their reward once."""
    S, A = R.shape
    n = S * A
    M = np.eye(n)
    for x in range(S):
        if terminal[x]:
            continue
        for a in range(A):
            for y in range(S):
                for b in range(A):
                    M[x * A + a, y * A + b] -= gamma * P[x, a, y] * pi[y, b]
    return np.linalg.solve(M, R.reshape(n)).reshape(S, A)


def enumerate_returns(step_fn, start, gamma, max_depth=50):
    """Exact return law of an acyclic episodic process by walking every trajectory.

    ``step_fn(state)`` returns a list of ``(prob, reward_atoms, reward_weights, next_state or None)``.
    """
    out = {}

    def walk(state, prob, acc, disc, depth):
        if depth > max_depth:
            raise RuntimeError("trajectory too long for enumeration")
        for p, r_atoms, r_weights, nxt in step_fn(state):
            for r, w in zip(r_atoms, r_weights):
                q = prob * p * w
                if q == 0:
                    continue
                value = acc + disc * r
                if nxt is None:
                    key = round(value, 12)
                    out[key] = out.get(key, 0.0) + q
                else:
                    walk(nxt, q, value, disc * gamma, depth + 1)

    walk(start, 1.0, 0.0, 1.0, 0)
    atoms = np.array(sorted(out))
    return atoms, np.array([out[a] for a in atoms])


def all_orderings(n):
    return list(itertools.permutations(range(n)))
