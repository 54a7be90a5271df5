import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    expectile_by_root,
    expectile_loss,
    grid_minimiser,
    huber_quantile_loss,
    quantile_by_sorting,
    quantile_loss,
)
from strategies import dists
from statdrl.distributions import DiscreteDist, pushforward
from statdrl.statistics import (
    CategoricalExpectation,
    Expectile,
    HuberQuantile,
    Moment,
    Quantile,
    StatisticError,
    StatisticSet,
    categorical_expectation,
    er_loss_grad,
    evaluate,
    evaluate_set,
    expectile,
    expectiles,
    family_from_dict,
    huber_loss_grad,
    huber_quantile,
    midpoint_taus,
    qr_loss_grad,
)

HALF = DiscreteDist([0.0, 1.0], [0.5, 0.5])


def test_er_loss_grad_examples():
    d = DiscreteDist([-1.0, 0.5, 3.0], [0.2, 0.5, 0.3])
    assert er_loss_grad(d.mean, d, 0.5)[1] == pytest.approx(0.0, abs=1e-12)
    assert er_loss_grad(2.0, DiscreteDist.dirac(2.0), 0.3) == (0.0, 0.0)
    assert er_loss_grad(0.0, HALF, 0.5)[1] == pytest.approx(-0.5)


def test_expectile_examples():
    d = DiscreteDist([-1.0, 0.5, 3.0], [0.2, 0.5, 0.3])
    assert expectile(d, 0.5) == pytest.approx(d.mean, abs=1e-12)
    for tau in (0.1, 0.37, 0.9):
        assert expectile(HALF, tau) == pytest.approx(tau, abs=1e-12)
    assert expectile(DiscreteDist.dirac(-4.0), 0.8) == -4.0


def test_qr_subgradient_examples():
    assert qr_loss_grad(0.5, HALF, 0.5)[1] == pytest.approx(0.0)
    assert qr_loss_grad(-1.0, HALF, 0.5)[1] == pytest.approx(-0.5)
    d = DiscreteDist([0.0, 1.0, 2.0, 3.0], [0.25] * 4)
    # continuity point of the quantile at tau = 0.6 is the atom 2: subgradient changes sign across it
    assert qr_loss_grad(1.999, d, 0.6)[1] < 0 < qr_loss_grad(2.0, d, 0.6)[1]


def test_huber_quantile_examples():
    assert huber_quantile(DiscreteDist.dirac(1.5), 0.2, 1.0) == pytest.approx(1.5, abs=1e-10)
    assert huber_quantile(HALF, 0.5, 1.0) == pytest.approx(0.5, abs=1e-10)
    assert HuberQuantile(0.5).kappa == 1.0


def test_categorical_expectation_examples():
    assert categorical_expectation(DiscreteDist.dirac(0.25), 0.0, 1.0) == pytest.approx(0.75)
    assert categorical_expectation(DiscreteDist.dirac(-5.0), 0.0, 1.0) == 1.0
    assert categorical_expectation(DiscreteDist([0.0, 2.0], [0.5, 0.5]), 0.0, 1.0) == 0.5
    with pytest.raises(StatisticError):
        CategoricalExpectation(1.0, 1.0)


def test_evaluate_dispatch():
    d = DiscreteDist([-1.0, 0.5, 3.0], [0.2, 0.5, 0.3])
    assert evaluate(Expectile(0.5), d) == pytest.approx(d.mean)
    K = 4
    qs = evaluate_set(StatisticSet.quantiles(K), d)
    for k, q in enumerate(qs, start=1):
        assert q == quantile_by_sorting(d.atoms, d.weights, (2 * k - 1) / (2 * K))
    assert evaluate(Moment(2), HALF) == 0.5


def test_family_parameter_ranges():
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(StatisticError):
            Expectile(bad)
    with pytest.raises(StatisticError):
        HuberQuantile(0.5, kappa=0.0)
    with pytest.raises(StatisticError):
        Moment(0)


def test_statistic_sets_are_homogeneous_and_increasing():
    with pytest.raises(StatisticError):
        StatisticSet([Expectile(0.2), Quantile(0.5)])
    with pytest.raises(StatisticError):
        StatisticSet([Expectile(0.5), Expectile(0.2)])
    s = StatisticSet.categorical([0.0, 1.0, 2.0])
    assert s.supports.tolist() == [0.0, 1.0, 2.0]
    assert StatisticSet.from_list(s.to_list()) == s
    assert family_from_dict({"kind": "huber_quantile", "tau": 0.3, "kappa": 2.0}) == HuberQuantile(0.3, 2.0)


def test_midpoint_levels():
    assert midpoint_taus(2).tolist() == [0.25, 0.75]
    assert midpoint_taus(1).tolist() == [0.5]


@given(dists(), st.floats(0.01, 0.99))
def test_expectile_matches_root_oracle(d, tau):
    assert expectile(d, tau) == pytest.approx(expectile_by_root(d.atoms, d.weights, tau), abs=1e-9)
    assert abs(er_loss_grad(expectile(d, tau), d, tau)[1]) <= 1e-10 * max(1.0, np.abs(d.atoms).max())


@given(dists(), st.floats(0.01, 0.99))
def test_expectile_within_support(d, tau):
    e = expectile(d, tau)
    assert d.atoms[0] - 1e-12 <= e <= d.atoms[-1] + 1e-12


@given(dists(), st.lists(st.floats(0.01, 0.99), min_size=2, max_size=6, unique=True))
def test_expectiles_and_huber_quantiles_monotone_in_tau(d, taus):
    taus = sorted(taus)
    e = expectiles(d, taus)
    assert np.all(np.diff(e) >= -1e-10)
    h = [huber_quantile(d, t, 1.0) for t in taus]
    assert np.all(np.diff(h) >= -1e-9)


@given(dists(), st.floats(0.05, 0.95), st.floats(-3, 3), st.floats(0.1, 0.99))
def test_equivariance_under_affine_maps(d, tau, b, c):
    moved = pushforward(d, b, c)
    assert expectile(moved, tau) == pytest.approx(b + c * expectile(d, tau), abs=1e-9)
    assert evaluate(Quantile(tau), moved) == pytest.approx(b + c * evaluate(Quantile(tau), d), abs=1e-9)
    assert evaluate(Moment(1), moved) == pytest.approx(b + c * d.mean, abs=1e-9)


@given(dists(), st.floats(0.05, 0.95), st.floats(-3, 3))
def test_huber_quantile_translation_equivariant(d, tau, b):
    # the Huber loss is not scale-free, so only shifts commute with the statistic
    moved = pushforward(d, b, 1.0)
    assert huber_quantile(moved, tau) == pytest.approx(b + huber_quantile(d, tau), abs=1e-8)


@given(dists(), st.floats(0.01, 0.99))
def test_gradients_monotone_in_q(d, tau):
    qs = np.linspace(d.atoms[0] - 1, d.atoms[-1] + 1, 41)
    er = [er_loss_grad(q, d, tau)[1] for q in qs]
    qr = [qr_loss_grad(q, d, tau)[1] for q in qs]
    hq = [huber_loss_grad(q, d, tau, 1.0)[1] for q in qs]
    assert np.all(np.diff(er) > 0)
    assert np.all(np.diff(qr) >= 0)
    assert np.all(np.diff(hq) >= -1e-12)


@settings(deadline=None)
@given(dists(lo=-3, hi=3), st.floats(0.05, 0.95))
def test_brute_force_grid_agreement(d, tau):
    lo, hi = d.atoms[0] - 1.0, d.atoms[-1] + 1.0
    # expectiles: unique minimiser, located to grid resolution
    assert expectile(d, tau) == pytest.approx(grid_minimiser(expectile_loss(d.atoms, d.weights, tau), lo, hi),
                                              abs=1e-4)
    # quantiles and Huber quantiles can have flat minima; compare attained loss instead
    for loss, value in (
        (quantile_loss(d.atoms, d.weights, tau), evaluate(Quantile(tau), d)),
        (huber_quantile_loss(d.atoms, d.weights, tau, 1.0), huber_quantile(d, tau, 1.0)),
    ):
        best = loss(grid_minimiser(loss, lo, hi))
        assert loss(value) <= best + 1e-7
