"""Finite discrete probability distributions on the real line.

Every return distribution, reward law and imputed distribution in the package
is a :class:`DiscreteDist`. Values are immutable once constructed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

MERGE_TOL = 1e-12
PRUNE_TOL = 1e-15
SUM_TOL = 1e-12
# slack used when comparing cumulative weights against probability levels
LEVEL_TOL = 1e-12


class InvalidDistributionError(ValueError):
    pass


class InvalidMixtureError(ValueError):
    pass


def _canonical(atoms: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(atoms, kind="stable")
    atoms = atoms[order]
    weights = weights[order]
    if atoms.size > 1:
        new_group = np.empty(atoms.size, dtype=bool)
        new_group[0] = True
        np.greater(np.diff(atoms), MERGE_TOL, out=new_group[1:])
        if not new_group.all():
            starts = np.flatnonzero(new_group)
            mass = np.add.reduceat(weights, starts)
            first = atoms[starts]
            # merged location is the mass-weighted mean, so the mean is unchanged
            offset = np.add.reduceat(weights * (atoms - np.repeat(first, np.diff(np.append(starts, atoms.size)))), starts)
            with np.errstate(invalid="ignore", divide="ignore"):
                atoms = np.where(mass > 0, first + offset / np.where(mass > 0, mass, 1.0), first)
            weights = mass
    keep = weights >= PRUNE_TOL
    if not keep.all():
        atoms = atoms[keep]
        weights = weights[keep]
    total = weights.sum()
    if total != 1.0:
        weights = weights / total
    return atoms, weights


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Probability distribution with finitely many atoms.

    Construction canonicalizes: atoms are sorted, atoms closer than ``1e-12``
    are merged and weights below ``1e-15`` are pruned (mass renormalized).

    Parameters
    ----------
    atoms : array-like
        Support points.
    weights : array-like
        Probabilities; nonnegative and summing to one within ``1e-12``.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float).reshape(-1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if atoms.size == 0:
            raise InvalidDistributionError("empty support")
        if atoms.shape != weights.shape:
            raise InvalidDistributionError(
                f"atoms and weights differ in length ({atoms.size} vs {weights.size})"
            )
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(weights))):
            raise InvalidDistributionError("atoms and weights must be finite")
        if np.any(weights < 0):
            raise InvalidDistributionError("negative weight")
        if abs(weights.sum() - 1.0) > SUM_TOL:
            raise InvalidDistributionError(f"weights sum to {weights.sum()!r}, not 1")
        atoms, weights = _canonical(atoms, weights)
        atoms.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def _trusted(cls, atoms: np.ndarray, weights: np.ndarray) -> "DiscreteDist":
        # internal constructor for arrays that already have unit mass
        atoms, weights = _canonical(np.asarray(atoms, dtype=float), np.asarray(weights, dtype=float))
        atoms.flags.writeable = False
        weights.flags.writeable = False
        self = object.__new__(cls)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        return self

    @classmethod
    def dirac(cls, value: float) -> "DiscreteDist":
        return cls._trusted(np.array([float(value)]), np.array([1.0]))

    @classmethod
    def uniform(cls, atoms: Sequence[float]) -> "DiscreteDist":
        atoms = np.asarray(atoms, dtype=float).reshape(-1)
        if atoms.size == 0:
            raise InvalidDistributionError("empty support")
        return cls._trusted(atoms, np.full(atoms.size, 1.0 / atoms.size))

    @classmethod
    def from_dict(cls, mapping: dict) -> "DiscreteDist":
        return cls(list(mapping.keys()), list(mapping.values()))

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    def __len__(self) -> int:
        return self.atoms.size

    def __repr__(self) -> str:
        if self.atoms.size <= 6:
            body = ", ".join(f"{a:g}: {w:g}" for a, w in zip(self.atoms, self.weights))
            return f"DiscreteDist({{{body}}})"
        return f"DiscreteDist(<{self.atoms.size} atoms on [{self.atoms[0]:g}, {self.atoms[-1]:g}]>)"

    def allclose(self, other: "DiscreteDist", atol: float = 1e-9) -> bool:
        return (
            self.atoms.size == other.atoms.size
            and np.allclose(self.atoms, other.atoms, rtol=0, atol=atol)
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
        )

    @property
    def mean(self) -> float:
        return float(self.weights @ self.atoms)

    @property
    def variance(self) -> float:
        m = self.mean
        return float(self.weights @ (self.atoms - m) ** 2)

    @property
    def support_width(self) -> float:
        return float(self.atoms[-1] - self.atoms[0])


def pushforward(d: DiscreteDist, r: float, gamma: float) -> DiscreteDist:
    """Image of ``d`` under ``x -> r + gamma * x``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return DiscreteDist._trusted(r + gamma * d.atoms, d.weights.copy())


def mixture(parts: Iterable[tuple[float, DiscreteDist]]) -> DiscreteDist:
    parts = list(parts)
    if not parts:
        raise InvalidMixtureError("mixture of zero components")
    coef = np.array([float(w) for w, _ in parts])
    if np.any(coef < 0):
        raise InvalidMixtureError("negative mixture weight")
    if abs(coef.sum() - 1.0) > SUM_TOL:
        raise InvalidMixtureError(f"mixture weights sum to {coef.sum()!r}, not 1")
    atoms = np.concatenate([d.atoms for _, d in parts])
    weights = np.concatenate([c * d.weights for c, (_, d) in zip(coef, parts)])
    return DiscreteDist._trusted(atoms, weights)


def cdf(d: DiscreteDist, t: float) -> float:
    """P(Z <= t)."""
    idx = np.searchsorted(d.atoms, t, side="right")
    return float(min(1.0, d.weights[:idx].sum()))


def inverse_cdf(d: DiscreteDist, tau: float, side: str = "left") -> float:
    """Generalized inverse of the CDF.

    ``side="left"`` gives ``inf{x : F(x) >= tau}`` (the usual convention);
    ``side="right"`` gives ``inf{x : F(x) > tau}``. The two differ only when
    ``tau`` is exactly a level of the CDF, in which case every point between
    them minimizes the quantile regression loss.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    cum = np.cumsum(d.weights)
    if side == "left":
        idx = np.searchsorted(cum, tau - LEVEL_TOL, side="left")
    elif side == "right":
        idx = np.searchsorted(cum, tau + LEVEL_TOL, side="right")
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return float(d.atoms[min(idx, d.atoms.size - 1)])


def quantiles(d: DiscreteDist, taus: Sequence[float]) -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    if np.any((taus <= 0) | (taus >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    cum = np.cumsum(d.weights)
    idx = np.searchsorted(cum, taus - LEVEL_TOL, side="left")
    return d.atoms[np.minimum(idx, d.atoms.size - 1)].copy()


def moment(d: DiscreteDist, k: int) -> float:
    if int(k) != k or k < 1:
        raise ValueError(f"moment order must be a positive integer, got {k}")
    return float(d.weights @ d.atoms ** int(k))


def _cdf_gap(d1: DiscreteDist, d2: DiscreteDist) -> tuple[np.ndarray, np.ndarray]:
    grid = np.union1d(d1.atoms, d2.atoms)
    c1 = np.concatenate(([0.0], np.cumsum(d1.weights)))[np.searchsorted(d1.atoms, grid[:-1], side="right")]
    c2 = np.concatenate(([0.0], np.cumsum(d2.weights)))[np.searchsorted(d2.atoms, grid[:-1], side="right")]
    return np.abs(c1 - c2), np.diff(grid)


def wasserstein1(d1: DiscreteDist, d2: DiscreteDist) -> float:
    """Exact 1-Wasserstein distance (L1 distance between the CDFs)."""
    gap, widths = _cdf_gap(d1, d2)
    return float(gap @ widths)


def cramer_l2(d1: DiscreteDist, d2: DiscreteDist) -> float:
    """Exact Cramér distance (L2 distance between the CDFs)."""
    gap, widths = _cdf_gap(d1, d2)
    return float(np.sqrt((gap * gap) @ widths))


def sample(d: DiscreteDist, rng: np.random.Generator, size: int | None = None):
    u = rng.random(size)
    idx = np.searchsorted(np.cumsum(d.weights), u, side="right")
    idx = np.minimum(idx, d.atoms.size - 1)
    if size is None:
        return float(d.atoms[idx])
    return d.atoms[idx]


def discretize_ppf(ppf: Callable[[np.ndarray], np.ndarray], n: int = 1000) -> DiscreteDist:
    """Equal-probability quantization of a continuous law at midpoint levels."""
    levels = (2 * np.arange(1, n + 1) - 1) / (2 * n)
    return DiscreteDist.uniform(ppf(levels))


def discretize_cdf(
    cdf_fn: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    n: int = 1000,
    iters: int = 100,
) -> DiscreteDist:
    """Like :func:`discretize_ppf` for laws with only a CDF (vectorized bisection)."""
    levels = (2 * np.arange(1, n + 1) - 1) / (2 * n)
    a = np.full(n, float(lo))
    b = np.full(n, float(hi))
    for _ in range(iters):
        mid = 0.5 * (a + b)
        below = cdf_fn(mid) < levels
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return DiscreteDist.uniform(0.5 * (a + b))


def compress(d: DiscreteDist, max_atoms: int) -> DiscreteDist:
    """Reduce the support to about ``max_atoms`` atoms, preserving moments 0-5.

    The support is cut into ``max_atoms // 3`` equal cells; every cell holding
    more than three atoms is replaced by the three-point Gauss rule of its
    restricted measure. Raw moments up to order five are therefore unchanged
    (up to rounding) and every atom moves by less than one cell width.
    """
    if d.atoms.size <= max_atoms:
        return d
    n_cells = max(1, max_atoms // 3)
    lo, hi = d.atoms[0], d.atoms[-1]
    width = (hi - lo) / n_cells
    atoms, weights = _canonical(*_gauss_cells(d.atoms, d.weights, lo, width, n_cells))
    return DiscreteDist._trusted(atoms, weights)


def _gauss_cells(x, w, lo, width, n_cells):
    # works on unsorted, unmerged input; output is unsorted as well
    cell = np.clip(np.floor((x - lo) / width), 0, n_cells - 1).astype(np.int64)
    counts = np.bincount(cell, minlength=n_cells)
    big = counts > 3
    if not big.any():
        return x, w
    in_big = big[cell]
    xb, wb, cb = x[in_big], w[in_big], cell[in_big]
    ids = np.flatnonzero(big)
    local = np.cumsum(big)[cb] - 1
    n = ids.size
    m0 = np.bincount(local, wb, n)
    centre = np.bincount(local, wb * xb, n) / m0
    u = (xb - centre[local]) / width
    # three-term Stieltjes recurrence on the cell measure, then Golub-Welsch
    a0 = np.bincount(local, wb * u, n) / m0
    p1 = u - a0[local]
    n1 = np.bincount(local, wb * p1 * p1, n)
    safe1 = np.where(n1 > 0, n1, 1.0)
    a1 = np.bincount(local, wb * u * p1 * p1, n) / safe1
    b1 = n1 / m0
    p2 = (u - a1[local]) * p1 - b1[local]
    n2 = np.bincount(local, wb * p2 * p2, n)
    safe2 = np.where(n2 > 0, n2, 1.0)
    a2 = np.bincount(local, wb * u * p2 * p2, n) / safe2
    b2 = np.where(n1 > 0, n2 / safe1, 0.0)
    jac = np.zeros((n, 3, 3))
    jac[:, 0, 0], jac[:, 1, 1], jac[:, 2, 2] = a0, a1, a2
    jac[:, 0, 1] = jac[:, 1, 0] = np.sqrt(b1)
    jac[:, 1, 2] = jac[:, 2, 1] = np.sqrt(b2)
    nodes, vecs = np.linalg.eigh(jac)
    gw = m0[:, None] * vecs[:, 0, :] ** 2
    gx = centre[:, None] + width * nodes
    atoms = np.concatenate([x[~in_big], gx.ravel()])
    weights = np.concatenate([w[~in_big], gw.ravel()])
    return atoms, weights
