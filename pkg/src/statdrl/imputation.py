"""Imputation strategies: statistic vectors back to distributions."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog, nnls

from .distributions import DiscreteDist
from .statistics import StatisticError, StatisticSet, evaluate_set, expectiles, huber_quantile

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 10_000
FEASIBILITY_SLACK = 1e-12
HUBER_CHECK_TOL = 1e-7
STALL_DAMPING = 1e4

STRATEGIES = ("qdrl", "cdrl", "expectile", "huber", "naive-expectile", "naive-huber")


class InfeasibleStatisticsError(ValueError):
    pass


class ImputationError(RuntimeError):
    """Solver gave up; carries the final residual and the last iterate."""

    def __init__(self, message, residual=None, atoms=None):
        super().__init__(message)
        self.residual = residual
        self.atoms = atoms


@dataclass
class SolveResult:
    atoms: np.ndarray
    residual: float
    iterations: int
    objective: list = field(default_factory=list)


def impute_qdrl(values: Sequence[float]) -> DiscreteDist:
    """Uniform mixture of Diracs at the statistic values."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InfeasibleStatisticsError("need at least one value")
    return DiscreteDist.uniform(values)


def impute_cdrl(values: Sequence[float], supports: Sequence[float]) -> DiscreteDist:
    """Categorical distribution on ``supports`` whose CDF-like statistics are ``values``."""
    values = np.asarray(values, dtype=float)
    z = np.asarray(supports, dtype=float)
    if values.size != z.size - 1:
        raise InfeasibleStatisticsError(f"{z.size} supports need {z.size - 1} values, got {values.size}")
    if values.size and (
        values.min() < -FEASIBILITY_SLACK
        or values.max() > 1 + FEASIBILITY_SLACK
        or np.any(np.diff(values) < -FEASIBILITY_SLACK)
    ):
        raise InfeasibleStatisticsError(f"categorical statistics must be nondecreasing in [0, 1]: {values}")
    cum = np.maximum.accumulate(np.append(np.clip(values, 0.0, 1.0), 1.0))
    probs = np.diff(cum, prepend=0.0)
    return DiscreteDist._trusted(z, probs)


def _check_sorted(values, taus):
    if values.shape != taus.shape:
        raise InfeasibleStatisticsError("values and taus must have the same length")
    if np.any(np.diff(taus) <= 0) or taus[0] <= 0 or taus[-1] >= 1:
        raise StatisticError("taus must be strictly increasing in (0, 1)")
    if np.any(np.diff(values) < -FEASIBILITY_SLACK):
        raise InfeasibleStatisticsError(f"statistic values must be nondecreasing in tau: {values}")


def _expectile_system(eps, taus, weights):
    def fn(z):
        below = z[None, :] <= eps[:, None]
        coef = 2.0 * np.where(below, 1.0 - taus[:, None], taus[:, None]) * weights[None, :]
        return np.sum(coef * (eps[:, None] - z[None, :]), axis=1), -coef

    return fn


def _huber_system(values, taus, kappa, weights):
    def fn(z):
        diff = z[None, :] - values[:, None]
        down = (diff <= 0) & (diff > -kappa)
        up = (diff > 0) & (diff < kappa)
        terms = (1.0 - taus[:, None]) * np.clip(-diff, 0.0, kappa) - taus[:, None] * np.clip(diff, 0.0, kappa)
        jac = -np.where(down, 1.0 - taus[:, None], np.where(up, taus[:, None], 0.0)) * weights[None, :]
        return terms @ weights, jac

    return fn


def solve_first_order_conditions(fn: Callable, z0: np.ndarray, tol: float = DEFAULT_TOL,
                                 max_iters: int = DEFAULT_MAX_ITERS, record: bool = False,
                                 max_damping: float = STALL_DAMPING) -> SolveResult:
    """Drive the residual vector of ``fn`` to zero from ``z0``.

    Minimizes half the squared residual with Levenberg-Marquardt steps; a step
    is accepted only if it lowers the objective, so the objective sequence is
    non-increasing. The residual is piecewise linear, so a solvable system is
    finished by near-Newton steps; needing damping above ``max_damping``
    signals a spurious local minimum and ends the attempt. Raises
    :class:`ImputationError` on a stall or when ``max_iters`` is hit.
    """
    z = np.array(z0, dtype=float)
    g, J = fn(z)
    f = 0.5 * float(g @ g)
    history = [f] if record else []
    lam = 1e-9
    for it in range(max_iters):
        res = float(np.max(np.abs(g)))
        if res <= tol:
            return SolveResult(z, res, it, history)
        JtJ = J.T @ J
        Jtg = J.T @ g
        scale = max(float(np.trace(JtJ)) / z.size, 1e-300)
        while True:
            try:
                step = np.linalg.solve(JtJ + lam * scale * np.eye(z.size), -Jtg)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                z_new = z + step
                g_new, J_new = fn(z_new)
                f_new = 0.5 * float(g_new @ g_new)
                if f_new < f:
                    z, g, J, f = z_new, g_new, J_new, f_new
                    lam = max(lam / 10.0, 1e-12)
                    break
            # steps barely change until the damping is comparable to the spectrum
            lam = max(lam * 10.0, 1e-4)
            if lam > max_damping:
                raise ImputationError(
                    f"imputation stalled with residual {res:.3g} after {it} iterations", residual=res, atoms=z
                )
        if record:
            history.append(f)
    res = float(np.max(np.abs(g)))
    if res <= tol:
        return SolveResult(z, res, max_iters, history)
    raise ImputationError(f"imputation did not converge: residual {res:.3g}", residual=res, atoms=z)


def _expectile_rows(eps, taus, z):
    diff = eps[:, None] - z[None, :]
    return np.where(diff >= 0, 1.0 - taus[:, None], taus[:, None]) * diff


def _huber_rows(values, taus, kappa, z):
    diff = z[None, :] - values[:, None]
    return (1.0 - taus[:, None]) * np.clip(-diff, 0.0, kappa) - taus[:, None] * np.clip(diff, 0.0, kappa)


def _support_grid(values, extra=()):
    lo, hi = values[0], values[-1]
    spread = max(hi - lo, 1e-3 * max(1.0, abs(lo), abs(hi)))
    far = spread * 2.0 ** np.arange(-3, 21)
    grid = np.concatenate([values, np.linspace(lo - spread, hi + spread, 201), lo - far, hi + far, *extra])
    return np.unique(grid)


def solve_weights(rows_fn, grid, tol: float = DEFAULT_TOL, local_mass=None, polish=None,
                  centre=None) -> DiscreteDist:
    """Weighted distribution on ``grid`` meeting the first-order conditions.

    With atom locations fixed the conditions are linear in the weights, so a
    feasible point is found by linear programming and then polished by
    nonnegative least squares on its support. ``local_mass`` optionally gives
    ``(mask, floor)``: each row of the boolean ``mask`` must carry at least
    ``floor`` probability. ``polish(weights)`` may return a residual system in
    the atom locations used for a final Newton refinement.
    """
    C = rows_fn(grid)
    scale = np.maximum(np.abs(C).max(axis=1, keepdims=True), 1e-300)
    A = np.vstack([C / scale, np.ones(grid.size)])
    b = np.r_[np.zeros(C.shape[0]), 1.0]
    A_ub = b_ub = None
    if local_mass is not None:
        mask, floor = local_mass
        A_ub, b_ub = -mask.astype(float), np.full(mask.shape[0], -floor)
    # prefer atoms near the statistic values; far atoms only when needed
    centre = 0.5 * (grid[0] + grid[-1]) if centre is None else centre
    cost = np.abs(grid - centre)
    cost = cost / max(cost.max(), 1e-300)
    lp = None
    for options in ({"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}, {}):
        lp = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A, b_eq=b, bounds=(0, None),
                     method="highs", options=options)
        if lp.status == 0:
            break
    if lp.status != 0:
        raise ImputationError(f"no distribution on the support grid has these statistics ({lp.message})")
    w_lp = np.clip(lp.x, 0.0, None)
    w_lp /= w_lp.sum()
    support = np.flatnonzero(w_lp > 1e-13)
    w = np.zeros(grid.size)
    w[support], _ = nnls(A[:, support], b)
    w = w / w.sum()
    if A_ub is not None and np.any(A_ub @ w > b_ub * (1 - 1e-6)):
        w = w_lp
    keep = w > 0
    atoms, weights = grid[keep], w[keep]
    if polish is not None and float(np.max(np.abs(rows_fn(atoms) @ weights))) > tol:
        # weights fixed, locations free: Newton from a nearby point
        try:
            atoms = solve_first_order_conditions(polish(weights), atoms, tol, 200).atoms
        except ImputationError:
            pass
    res = float(np.max(np.abs(rows_fn(atoms) @ weights)))
    if res > tol:
        raise ImputationError(f"weighted imputation residual {res:.3g} exceeds tolerance", residual=res)
    return DiscreteDist(atoms, weights)


def expectile_construction(eps, taus) -> DiscreteDist:
    """Distribution with exactly the given expectiles, built from its integrated CDF.

    For mean ``m`` the ``tau``-expectile condition fixes the lower partial
    moment ``P(e) = E[(e - Z)+]`` at ``e = eps_i`` to
    ``tau_i (m - eps_i) / (1 - 2 tau_i)``. A convex piecewise-linear ``P``
    through these points with slopes in (0, 1) and the right asymptotes is the
    integrated CDF of a distribution; its kinks are the atoms and the slope
    jumps the weights. Every feasibility condition is linear in ``m``, so the
    admissible means form an interval and its midpoint is used. The output
    has at most ``K + 2`` atoms with unequal weights.
    """
    eps = np.asarray(eps, dtype=float)
    taus = np.asarray(taus, dtype=float)
    if eps[-1] - eps[0] <= FEASIBILITY_SLACK * max(1.0, abs(eps[0])):
        return DiscreteDist.dirac(float(np.mean(eps)))
    half = np.abs(taus - 0.5) < 1e-15
    if np.any(np.diff(eps) <= 0):
        raise InfeasibleStatisticsError(f"expectiles of a non-Dirac law are strictly increasing: {eps}")
    e = eps[~half]
    t = taus[~half]
    # P_i(m) = a_i + b_i m and Q_i(m) = P_i - e_i + m
    a, b = -t * e / (1 - 2 * t), t / (1 - 2 * t)
    cons = []  # pairs (alpha, beta) meaning alpha + beta * m > 0
    if e.size:
        cons += [(a[0], b[0]), (a[-1] - e[-1], b[-1] + 1.0)]
    de = np.diff(e)
    slope_a, slope_b = np.diff(a) / de, np.diff(b) / de
    for j in range(de.size):
        if j == 0:
            cons.append((slope_a[0], slope_b[0]))
        if j == de.size - 1:
            cons.append((1.0 - slope_a[-1], -slope_b[-1]))
        if j + 1 < de.size:
            cons.append((slope_a[j + 1] - slope_a[j], slope_b[j + 1] - slope_b[j]))
    spread = eps[-1] - eps[0]
    if half.any():
        m = float(eps[half][0])
        bad = [al + be * m for al, be in cons if al + be * m < -1e-12 * max(1.0, abs(al))]
        if bad:
            raise InfeasibleStatisticsError("no distribution with this mean has these expectiles")
    else:
        lo, hi = -np.inf, np.inf
        for al, be in cons:
            if be > 0:
                lo = max(lo, -al / be)
            elif be < 0:
                hi = min(hi, -al / be)
            elif al < 0:
                raise InfeasibleStatisticsError("expectile values are not attainable")
        # equal chord slopes make the interval a single point, blurred by rounding
        if lo > hi + 1e-7 * (spread + abs(lo) + abs(hi)):
            raise InfeasibleStatisticsError("expectile values are not attainable")
        if np.isfinite(lo) and np.isfinite(hi):
            m = 0.5 * (lo + hi)
        elif np.isfinite(lo):
            m = lo + spread
        elif np.isfinite(hi):
            m = hi - spread
        else:
            m = float(np.mean(eps))
    if e.size == 0:
        return DiscreteDist.dirac(m)
    P = a + b * m
    Q = P - e + m
    if e.size == 1:
        s_left = s_right = 0.5
        slopes = np.array([])
    else:
        slopes = np.clip(np.diff(P) / de, 0.0, 1.0)
        s_left, s_right = 0.5 * slopes[0], 0.5 * (slopes[-1] + 1.0)
    atoms = np.r_[e[0] - P[0] / s_left, e, e[-1] + Q[-1] / (1.0 - s_right)]
    all_slopes = np.r_[0.0, s_left, slopes, s_right, 1.0]
    weights = np.clip(np.diff(all_slopes), 0.0, None)
    dist = DiscreteDist(atoms, weights / weights.sum())
    err = float(np.max(np.abs(expectiles(dist, taus) - eps)))
    if err > 1e-9 * max(1.0, spread):
        raise ImputationError(f"expectile construction missed the targets by {err:.3g}", residual=err)
    return dist


def _initial_atoms(values, n, init):
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape == (n,):
            return np.sort(init)
    if n == values.size:
        return values.copy()
    grid = (np.arange(n) + 0.5) / n
    src = (np.arange(values.size) + 0.5) / values.size
    return np.interp(grid, src, values)


def impute_expectiles(epsilons, taus, n_atoms: int | None = None, tol: float = DEFAULT_TOL,
                      max_iters: int = DEFAULT_MAX_ITERS, init=None, return_result: bool = False,
                      fallback: bool = True, max_damping: float = STALL_DAMPING):
    """Uniform ``n_atoms``-point distribution whose expectiles at ``taus`` are ``epsilons``.

    Solves the first-order conditions of the expectile regression losses
    (the ER gradient at each ``epsilon_i`` vanishes) by minimizing their
    squared norm. ``init`` warm-starts the atom locations.

    Skewed statistic vectors often admit no uniform solution with few atoms
    and the squared residual has spurious local minima. When the solver
    stalls and ``fallback`` is set, the atoms are instead fixed on a grid and
    nonnegative weights are solved for (see :func:`solve_weights`); the
    result then has non-uniform weights.
    """
    eps = np.asarray(epsilons, dtype=float)
    taus = np.asarray(taus, dtype=float)
    _check_sorted(eps, taus)
    n = eps.size if n_atoms is None else int(n_atoms)
    if n < 1:
        raise ValueError("n_atoms must be positive")
    try:
        result = solve_first_order_conditions(
            _expectile_system(eps, taus, np.full(n, 1.0 / n)), _initial_atoms(eps, n, init), tol, max_iters,
            max_damping=max_damping,
        )
    except ImputationError as exc:
        if not fallback:
            raise
        # no uniform n-atom solution reached; free the weights instead
        dist = expectile_construction(eps, taus)
        result = SolveResult(dist.atoms, exc.residual, -1)
        return (dist, result) if return_result else dist
    dist = DiscreteDist.uniform(result.atoms)
    return (dist, result) if return_result else dist


def impute_huber_quantiles(values, taus, kappa: float = 1.0, n_atoms: int | None = None, tol: float = DEFAULT_TOL,
                           max_iters: int = DEFAULT_MAX_ITERS, init=None, return_result: bool = False,
                           fallback: bool = True, max_damping: float = STALL_DAMPING):
    """Uniform ``n_atoms``-point distribution with the given Huber quantiles.

    Same solver and fallback as :func:`impute_expectiles`.
    """
    vals = np.asarray(values, dtype=float)
    taus = np.asarray(taus, dtype=float)
    _check_sorted(vals, taus)
    if not kappa > 0:
        raise StatisticError("kappa must be positive")
    n = vals.size if n_atoms is None else int(n_atoms)
    if n < 1:
        raise ValueError("n_atoms must be positive")
    kappa = float(kappa)
    try:
        result = solve_first_order_conditions(
            _huber_system(vals, taus, kappa, np.full(n, 1.0 / n)), _initial_atoms(vals, n, init), tol, max_iters,
            max_damping=max_damping,
        )
        dist = DiscreteDist.uniform(result.atoms)
        # a vanishing gradient pins the statistic only if mass lies within kappa
        stats = np.array([huber_quantile(dist, t, kappa) for t in taus])
        if np.max(np.abs(stats - vals)) > HUBER_CHECK_TOL:
            raise ImputationError("Huber quantile not pinned by the first-order conditions", residual=result.residual,
                                     atoms=result.atoms)
    except ImputationError as exc:
        if not fallback:
            raise
        dist = _huber_weights(vals, taus, kappa, tol)
        result = SolveResult(dist.atoms, exc.residual, -1)
    return (dist, result) if return_result else dist


def _huber_weights(vals, taus, kappa, tol):
    grid = _support_grid(vals, (vals - kappa, vals + kappa))
    near = np.abs(grid[None, :] - vals[:, None]) < kappa * (1 - 1e-6)
    rows = lambda z: _huber_rows(vals, taus, kappa, z)
    last = None
    for floor in (0.1, 1e-2, 1e-3):
        try:
            dist = solve_weights(rows, grid, tol, (near, floor), lambda w: _huber_system(vals, taus, kappa, w),
                                 float(np.median(vals)))
        except ImputationError as exc:
            last = exc
            continue
        stats = np.array([huber_quantile(dist, t, kappa) for t in taus])
        if np.max(np.abs(stats - vals)) <= HUBER_CHECK_TOL:
            return dist
        last = ImputationError("weighted Huber imputation missed the statistics",
                               residual=float(np.max(np.abs(stats - vals))))
    raise last


def residual(dist: DiscreteDist, families: StatisticSet, values) -> float:
    """Largest absolute difference between the statistics of ``dist`` and ``values``."""
    values = np.asarray(values, dtype=float)
    if values.size != len(families):
        raise ValueError("values and families differ in length")
    return float(np.max(np.abs(evaluate_set(families, dist) - values)))


def strategy_families(strategy: str) -> tuple[str, ...]:
    """Statistic kinds a strategy accepts."""
    return {
        "qdrl": ("quantile",),
        "cdrl": ("categorical",),
        "expectile": ("expectile",),
        "huber": ("huber_quantile",),
        "naive-expectile": ("expectile",),
        "naive-huber": ("huber_quantile",),
    }[strategy]


def check_strategy(strategy: str, families: StatisticSet) -> None:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if families.kind not in strategy_families(strategy):
        raise ValueError(f"strategy {strategy!r} cannot impute {families.kind} statistics")


def impute(strategy: str, families: StatisticSet, values, n_atoms: int | None = None, tol: float = DEFAULT_TOL,
           max_iters: int = DEFAULT_MAX_ITERS, init=None, fallback: bool = True,
           max_damping: float = STALL_DAMPING) -> DiscreteDist:
    """Dispatch to the imputation strategy named ``strategy``.

    The naive strategies reuse the statistic values as if they were samples.
    """
    check_strategy(strategy, families)
    if strategy in ("qdrl", "naive-expectile", "naive-huber"):
        return impute_qdrl(values)
    if strategy == "cdrl":
        return impute_cdrl(values, families.supports)
    if strategy == "expectile":
        return impute_expectiles(values, families.taus, n_atoms, tol, max_iters, init, fallback=fallback,
                                 max_damping=max_damping)
    return impute_huber_quantiles(values, families.taus, families.kappa, n_atoms, tol, max_iters, init,
                                  fallback=fallback, max_damping=max_damping)
