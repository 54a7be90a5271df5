import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategies import dists
from statdrl.distributions import DiscreteDist, inverse_cdf
from statdrl.imputation import (
    InfeasibleStatisticsError,
    _expectile_system,
    expectile_construction,
    impute,
    impute_cdrl,
    impute_expectiles,
    impute_huber_quantiles,
    impute_qdrl,
    residual,
    solve_first_order_conditions,
)
from statdrl.statistics import (
    StatisticSet,
    categorical_expectation,
    er_loss_grad,
    evaluate_set,
    expectiles,
    huber_quantile,
    midpoint_taus,
)

HALF = DiscreteDist([0.0, 1.0], [0.5, 0.5])
TAUS = [0.25, 0.5, 0.75]


def test_qdrl_examples():
    assert impute_qdrl([0.25, 0.75]).allclose(DiscreteDist([0.25, 0.75], [0.5, 0.5]))
    assert impute_qdrl([3.0]).allclose(DiscreteDist.dirac(3.0))
    values = np.array([-1.0, 0.2, 0.4, 2.0])
    d = impute_qdrl(values)
    assert [inverse_cdf(d, t) for t in midpoint_taus(4)] == values.tolist()


def test_cdrl_examples():
    assert impute_cdrl([0.3, 0.8], [0, 1, 2]).allclose(DiscreteDist([0.0, 1.0, 2.0], [0.3, 0.5, 0.2]))
    assert impute_cdrl([0.0, 0.0, 0.0], [0, 1, 2, 3]).allclose(DiscreteDist.dirac(3.0))
    d = impute_cdrl([0.3, 0.8], [0, 1, 2])
    assert categorical_expectation(d, 0, 1) == 0.3
    assert categorical_expectation(d, 1, 2) == 0.8


@pytest.mark.parametrize("values", [[0.8, 0.3], [-0.1, 0.5], [0.2, 1.1]])
def test_cdrl_rejects_infeasible(values):
    with pytest.raises(InfeasibleStatisticsError):
        impute_cdrl(values, [0, 1, 2])


def test_expectile_examples():
    assert impute_expectiles([0.7], [0.5], n_atoms=1).allclose(DiscreteDist.dirac(0.7))
    eps = np.array(TAUS)  # the tau-expectile of HALF is tau
    d = impute_expectiles(eps, TAUS, n_atoms=4)
    assert np.max(np.abs(expectiles(d, TAUS) - eps)) <= 1e-6
    naive = impute_qdrl(eps)
    grads = [er_loss_grad(e, naive, t)[1] for e, t in zip(eps, TAUS)]
    assert max(abs(g) for g in grads) > 1e-7


def test_expectile_rejects_decreasing_values():
    with pytest.raises(InfeasibleStatisticsError):
        impute_expectiles([0.5, 0.2], [0.25, 0.75])


def test_huber_examples():
    assert impute_huber_quantiles([1.3], [0.5], 1.0, n_atoms=1).allclose(DiscreteDist.dirac(1.3))
    target = [huber_quantile(HALF, t, 1.0) for t in TAUS]
    d = impute_huber_quantiles(target, TAUS, 1.0, n_atoms=4)
    assert max(abs(huber_quantile(d, t, 1.0) - v) for t, v in zip(TAUS, target)) <= 1e-5
    again = impute_huber_quantiles(target, TAUS, 1.0, n_atoms=4)
    assert np.array_equal(d.atoms, again.atoms) and np.array_equal(d.weights, again.weights)


def test_residual_examples():
    fams = StatisticSet.expectiles(taus=TAUS)
    out = impute("expectile", fams, TAUS)
    assert residual(out, fams, TAUS) <= 1e-7
    q = StatisticSet.quantiles(3)
    assert residual(impute_qdrl([0.0, 1.0, 2.5]), q, [0.0, 1.0, 2.5]) == 0.0
    assert residual(DiscreteDist.dirac(0.0), StatisticSet.expectiles(taus=[0.5]), [1.0]) == 1.0


def test_objective_never_increases():
    taus = np.array([0.1, 0.4, 0.6, 0.9])
    eps = expectiles(DiscreteDist.uniform([-1.0, 0.0, 0.5, 2.0]), taus)
    result = solve_first_order_conditions(_expectile_system(eps, taus, np.full(4, 0.25)), np.linspace(eps[0], eps[-1], 4),
                                          record=True)
    assert result.residual <= 1e-7
    assert len(result.objective) > 1
    assert np.all(np.diff(result.objective) <= 1e-15)


def test_mean_is_pinned_when_half_is_present():
    eps = [-0.3, 0.2, 0.9]
    d = impute_expectiles(eps, [0.2, 0.5, 0.8])
    assert d.mean == pytest.approx(0.2, abs=1e-7)


def test_strategy_dispatch_checks_kind():
    with pytest.raises(ValueError):
        impute("qdrl", StatisticSet.expectiles(3), [0.0, 0.1, 0.2])
    with pytest.raises(ValueError):
        impute("bogus", StatisticSet.expectiles(3), [0.0, 0.1, 0.2])


@settings(max_examples=40, deadline=None)
@given(dists(lo=-5, hi=5, max_atoms=6), st.integers(1, 7))
def test_expectile_contract_on_feasible_vectors(d, k):
    fams = StatisticSet.expectiles(k)
    values = evaluate_set(fams, d)
    out = impute("expectile", fams, values)
    assert residual(out, fams, values) <= 1e-6
    assert np.all(np.diff(evaluate_set(fams, out)) >= -1e-9)


@settings(max_examples=25, deadline=None)
@given(dists(lo=-3, hi=3, max_atoms=5), st.integers(1, 5))
def test_huber_contract_on_feasible_vectors(d, k):
    fams = StatisticSet.huber_quantiles(k, 1.0)
    values = evaluate_set(fams, d)
    out = impute("huber", fams, values)
    assert residual(out, fams, values) <= 1e-6


@given(dists(lo=-5, hi=5), st.integers(1, 8))
def test_qdrl_and_cdrl_contract_on_feasible_vectors(d, k):
    q = StatisticSet.quantiles(k)
    values = evaluate_set(q, d)
    assert residual(impute("qdrl", q, values), q, values) <= 1e-12
    c = StatisticSet.categorical(np.linspace(-5, 5, k + 1))
    values = evaluate_set(c, d)
    assert residual(impute("cdrl", c, values), c, values) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(dists(lo=-4, hi=4, min_atoms=2), st.integers(2, 6))
def test_weighted_expectile_construction_is_exact(d, k):
    taus = midpoint_taus(k)
    eps = expectiles(d, taus)
    if np.any(np.diff(eps) <= 1e-9):
        return
    out = expectile_construction(eps, taus)
    assert np.max(np.abs(expectiles(out, taus) - eps)) <= 1e-8
