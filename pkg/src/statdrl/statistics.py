"""Statistic functionals as M-estimators: losses, gradients and exact evaluators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .distributions import DiscreteDist, inverse_cdf, moment, quantiles

DEFAULT_KAPPA = 1.0


class StatisticError(ValueError):
    pass


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise StatisticError(f"tau must lie in (0, 1), got {tau}")
    return tau


@dataclass(frozen=True)
class Expectile:
    tau: float
    kind = "expectile"

    def __post_init__(self):
        object.__setattr__(self, "tau", _check_tau(self.tau))

    @property
    def param(self) -> float:
        return self.tau


@dataclass(frozen=True)
class Quantile:
    tau: float
    kind = "quantile"

    def __post_init__(self):
        object.__setattr__(self, "tau", _check_tau(self.tau))

    @property
    def param(self) -> float:
        return self.tau


@dataclass(frozen=True)
class HuberQuantile:
    tau: float
    kappa: float = DEFAULT_KAPPA
    kind = "huber_quantile"

    def __post_init__(self):
        object.__setattr__(self, "tau", _check_tau(self.tau))
        if not self.kappa > 0:
            raise StatisticError(f"kappa must be positive, got {self.kappa}")
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def param(self) -> float:
        return self.tau


@dataclass(frozen=True)
class CategoricalExpectation:
    z_lo: float
    z_hi: float
    kind = "categorical"

    def __post_init__(self):
        if not float(self.z_lo) < float(self.z_hi):
            raise StatisticError(f"need z_lo < z_hi, got {self.z_lo}, {self.z_hi}")
        object.__setattr__(self, "z_lo", float(self.z_lo))
        object.__setattr__(self, "z_hi", float(self.z_hi))

    @property
    def param(self) -> float:
        return self.z_lo


@dataclass(frozen=True)
class Moment:
    k: int
    kind = "moment"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise StatisticError(f"moment order must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def param(self) -> float:
        return float(self.k)


StatisticFamily = Union[Expectile, Quantile, HuberQuantile, CategoricalExpectation, Moment]
_KINDS = {cls.kind: cls for cls in (Expectile, Quantile, HuberQuantile, CategoricalExpectation, Moment)}


def family_to_dict(fam: StatisticFamily) -> dict:
    out = {"kind": fam.kind}
    if isinstance(fam, (Expectile, Quantile)):
        out["tau"] = fam.tau
    elif isinstance(fam, HuberQuantile):
        out.update(tau=fam.tau, kappa=fam.kappa)
    elif isinstance(fam, CategoricalExpectation):
        out.update(z_lo=fam.z_lo, z_hi=fam.z_hi)
    else:
        out["k"] = fam.k
    return out


def family_from_dict(data: dict) -> StatisticFamily:
    data = dict(data)
    kind = data.pop("kind", None)
    if kind not in _KINDS:
        raise StatisticError(f"unknown statistic kind {kind!r}")
    try:
        return _KINDS[kind](**data)
    except TypeError as exc:
        raise StatisticError(f"bad fields for {kind}: {sorted(data)}") from exc


def midpoint_taus(k: int) -> np.ndarray:
    """Levels (2k - 1) / 2K for k = 1..K."""
    if k < 1:
        raise StatisticError("need at least one statistic")
    return (2 * np.arange(1, k + 1) - 1) / (2 * k)


class StatisticSet(tuple):
    """Ordered, homogeneous collection of statistic families."""

    def __new__(cls, families: Iterable[StatisticFamily]):
        fams = tuple(families)
        if not fams:
            raise StatisticError("a statistic set needs at least one family")
        kinds = {f.kind for f in fams}
        if len(kinds) > 1:
            raise StatisticError(f"mixed statistic kinds are not supported: {sorted(kinds)}")
        params = np.array([f.param for f in fams])
        if np.any(np.diff(params) <= 0):
            raise StatisticError("statistic parameters must be strictly increasing")
        if fams[0].kind == "huber_quantile" and len({f.kappa for f in fams}) > 1:
            raise StatisticError("all Huber quantiles in a set must share kappa")
        return super().__new__(cls, fams)

    @property
    def kind(self) -> str:
        return self[0].kind

    @property
    def params(self) -> np.ndarray:
        return np.array([f.param for f in self])

    @property
    def taus(self) -> np.ndarray:
        if self.kind not in ("expectile", "quantile", "huber_quantile"):
            raise StatisticError(f"{self.kind} statistics have no tau levels")
        return self.params

    @property
    def kappa(self) -> float:
        return self[0].kappa

    @property
    def supports(self) -> np.ndarray:
        """Support z_1..z_K implied by consecutive categorical statistics."""
        if self.kind != "categorical":
            raise StatisticError("only categorical sets define a support")
        return np.array([f.z_lo for f in self] + [self[-1].z_hi])

    @classmethod
    def expectiles(cls, k: int = 0, taus: Sequence[float] | None = None) -> "StatisticSet":
        return cls(Expectile(t) for t in (midpoint_taus(k) if taus is None else taus))

    @classmethod
    def quantiles(cls, k: int = 0, taus: Sequence[float] | None = None) -> "StatisticSet":
        return cls(Quantile(t) for t in (midpoint_taus(k) if taus is None else taus))

    @classmethod
    def huber_quantiles(cls, k: int = 0, kappa: float = DEFAULT_KAPPA, taus: Sequence[float] | None = None):
        return cls(HuberQuantile(t, kappa) for t in (midpoint_taus(k) if taus is None else taus))

    @classmethod
    def categorical(cls, supports: Sequence[float]) -> "StatisticSet":
        z = np.asarray(supports, dtype=float)
        if z.size < 2:
            raise StatisticError("a categorical support needs at least two points")
        return cls(CategoricalExpectation(lo, hi) for lo, hi in zip(z[:-1], z[1:]))

    @classmethod
    def moments(cls, k: int) -> "StatisticSet":
        return cls(Moment(j) for j in range(1, k + 1))

    def to_list(self) -> list:
        return [family_to_dict(f) for f in self]

    @classmethod
    def from_list(cls, items) -> "StatisticSet":
        return cls(family_from_dict(i) for i in items)


# --------------------------------------------------------------------------
# losses and evaluators


def er_loss_grad(q: float, d: DiscreteDist, tau: float) -> tuple[float, float]:
    """Expectile regression loss at ``q`` and its derivative in ``q``."""
    tau = _check_tau(tau)
    diff = d.atoms - q
    below = diff <= 0
    wts = np.where(below, 1.0 - tau, tau) * d.weights
    loss = float(np.sum(wts * diff**2))
    grad = float(-2.0 * np.sum(wts * diff))
    return loss, grad


def _expectile_segments(d: DiscreteDist):
    a, w = d.atoms, d.weights
    cw, cm = np.cumsum(w), np.cumsum(w * a)
    total_m = cm[-1]
    # A_j = sum_{i<=j} w_i (a_j - a_i), B_j = sum_{i>j} w_i (a_i - a_j)
    A = cw * a - cm
    B = (total_m - cm) - (1.0 - cw) * a
    return cw, cm, A, B


def expectiles(d: DiscreteDist, taus: Sequence[float]) -> np.ndarray:
    """Exact expectiles at several levels by a piecewise-linear root solve."""
    taus = np.asarray(taus, dtype=float)
    if np.any((taus <= 0) | (taus >= 1)):
        raise StatisticError("tau must lie in (0, 1)")
    a = d.atoms
    if a.size == 1:
        return np.full(taus.shape, a[0])
    cw, cm, A, B = _expectile_segments(d)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = A / (A + B)
    ratio[0] = 0.0
    # first atom where the gradient is nonnegative; the root lies just below it
    j = np.clip(np.searchsorted(ratio, taus, side="left"), 1, a.size - 1)
    wl, ml = cw[j - 1], cm[j - 1]
    wr, mr = 1.0 - wl, cm[-1] - ml
    q = ((1.0 - taus) * ml + taus * mr) / ((1.0 - taus) * wl + taus * wr)
    return np.clip(q, a[0], a[-1])


def expectile(d: DiscreteDist, tau: float) -> float:
    return float(expectiles(d, [_check_tau(tau)])[0])


def qr_loss_grad(q: float, d: DiscreteDist, tau: float) -> tuple[float, float]:
    """Quantile regression loss at ``q`` and its subgradient (ties on the lower branch)."""
    tau = _check_tau(tau)
    diff = d.atoms - q
    below = diff <= 0
    loss = float(np.sum(np.where(below, 1.0 - tau, tau) * d.weights * np.abs(diff)))
    p_below = float(d.weights[below].sum())
    return loss, (1.0 - tau) * p_below - tau * (1.0 - p_below)


def huber(u, kappa: float = DEFAULT_KAPPA):
    u = np.abs(u)
    return np.where(u <= kappa, 0.5 * u**2, kappa * (u - 0.5 * kappa))


def huber_loss_grad(q: float, d: DiscreteDist, tau: float, kappa: float = DEFAULT_KAPPA) -> tuple[float, float]:
    """Huber-quantile loss at ``q`` and its derivative in ``q``.

    The asymmetric weight uses ``1{Z > q}`` and ``1{Z < q}``; at ``Z = q`` the
    Huber term vanishes so the tie is immaterial.
    """
    tau = _check_tau(tau)
    diff = d.atoms - q
    wts = np.where(diff > 0, tau, np.where(diff < 0, 1.0 - tau, 0.0)) * d.weights
    loss = float(np.sum(wts * huber(diff, kappa)))
    grad = float(-np.sum(wts * np.clip(diff, -kappa, kappa)))
    return loss, grad


def _huber_grad_many(qs, atoms, weights, tau, kappa):
    diff = atoms[None, :] - qs[:, None]
    up = np.clip(diff, 0.0, kappa)
    down = np.clip(-diff, 0.0, kappa)
    return (1.0 - tau) * (down @ weights) - tau * (up @ weights)


def huber_quantile(d: DiscreteDist, tau: float, kappa: float = DEFAULT_KAPPA) -> float:
    """Smallest minimizer of the Huber-quantile loss.

    The gradient is continuous, nondecreasing and linear between the
    breakpoints ``{z, z - kappa, z + kappa}``, so the root is found exactly by
    a binary search over breakpoints followed by linear interpolation.
    """
    tau = _check_tau(tau)
    if not kappa > 0:
        raise StatisticError("kappa must be positive")
    a, w = d.atoms, d.weights
    if a.size == 1:
        return float(a[0])
    bp = np.unique(np.concatenate([a - kappa, a, a + kappa]))
    lo, hi = 0, bp.size - 1
    # invariant: G(bp[lo]) < 0 <= G(bp[hi]); G(min - kappa) < 0 and G(max + kappa) > 0
    g_lo, g_hi = _huber_grad_many(bp[[lo, hi]], a, w, tau, kappa)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        g_mid = _huber_grad_many(bp[[mid]], a, w, tau, kappa)[0]
        if g_mid < 0:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    x0, x1 = bp[lo], bp[hi]
    if g_hi == 0.0:
        return float(x1)
    return float(x0 + (x1 - x0) * (-g_lo) / (g_hi - g_lo))


def categorical_expectation(d: DiscreteDist, z_lo: float, z_hi: float) -> float:
    """Expectation of the hat-edge function: 1 below ``z_lo``, 0 above ``z_hi``, linear between."""
    if not z_lo < z_hi:
        raise StatisticError("need z_lo < z_hi")
    h = np.clip((z_hi - d.atoms) / (z_hi - z_lo), 0.0, 1.0)
    return float(h @ d.weights)


def evaluate(fam: StatisticFamily, d: DiscreteDist) -> float:
    if isinstance(fam, Expectile):
        return expectile(d, fam.tau)
    if isinstance(fam, Quantile):
        return inverse_cdf(d, fam.tau)
    if isinstance(fam, HuberQuantile):
        return huber_quantile(d, fam.tau, fam.kappa)
    if isinstance(fam, CategoricalExpectation):
        return categorical_expectation(d, fam.z_lo, fam.z_hi)
    if isinstance(fam, Moment):
        return moment(d, fam.k)
    raise StatisticError(f"unknown statistic family {fam!r}")


def evaluate_set(fams: StatisticSet, d: DiscreteDist) -> np.ndarray:
    """Statistic vector of ``d``; expectiles and categorical sets are vectorized."""
    if fams.kind == "expectile":
        return expectiles(d, fams.taus)
    if fams.kind == "quantile":
        return quantiles(d, fams.taus)
    if fams.kind == "categorical":
        z = fams.supports
        h = np.clip((z[1:, None] - d.atoms[None, :]) / np.diff(z)[:, None], 0.0, 1.0)
        return h @ d.weights
    return np.array([evaluate(f, d) for f in fams])


def loss_grad(fam: StatisticFamily, q: float, d: DiscreteDist) -> tuple[float, float]:
    """Estimation loss of ``fam`` at ``q`` and its (sub)gradient."""
    if isinstance(fam, Expectile):
        return er_loss_grad(q, d, fam.tau)
    if isinstance(fam, Quantile):
        return qr_loss_grad(q, d, fam.tau)
    if isinstance(fam, HuberQuantile):
        return huber_loss_grad(q, d, fam.tau, fam.kappa)
    if isinstance(fam, CategoricalExpectation):
        # squared loss whose minimizer is the expectation of the edge function
        h = np.clip((fam.z_hi - d.atoms) / (fam.z_hi - fam.z_lo), 0.0, 1.0)
        return float(d.weights @ (h - q) ** 2), float(2.0 * (q - h @ d.weights))
    if isinstance(fam, Moment):
        diff = d.atoms**fam.k - q
        return float(d.weights @ diff**2), float(-2.0 * (d.weights @ diff))
    raise StatisticError(f"unknown statistic family {fam!r}")
