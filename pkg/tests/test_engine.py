import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import q_values_by_linear_solve
from strategies import dists
from statdrl.distributions import DiscreteDist, discretize_ppf, wasserstein1
from statdrl.engine import (
    ProjectionError,
    StatTable,
    UnsupportedControlError,
    cramer_project,
    dist_bellman,
    dp_fixed_point,
    dp_update,
    greedy_action,
    make_statistics,
    sgd_update,
    train,
    w1_project,
)
from statdrl.mdp import (
    DistTable,
    NonConvergenceError,
    Policy,
    TabularMdp,
    Transition,
    build_absorbing_chain,
    build_control_mdp,
    build_nchain,
    build_qdrl_mean_counterexample,
    exact_return_dist,
    optimal_nchain_policy,
    random_mdp,
    random_policy,
)
from statdrl.statistics import StatisticSet, categorical_expectation, evaluate_set

D0 = DiscreteDist.dirac(0.0)


def _cramer_by_loop(atoms, weights, z):
    out = np.zeros(len(z))
    for w, p in zip(atoms, weights):
        if w <= z[0]:
            out[0] += p
        elif w >= z[-1]:
            out[-1] += p
        else:
            k = np.searchsorted(z, w, side="right") - 1
            lam = (w - z[k]) / (z[k + 1] - z[k])
            out[k] += p * (1 - lam)
            out[k + 1] += p * lam
    return out


def test_bellman_target_examples():
    chain = build_absorbing_chain(2, 0.9, 1.0)
    eta = DistTable([[D0], [DiscreteDist.dirac(1.0)]])
    assert dist_bellman(eta, chain, Policy.uniform(2, 1), 0, 0).allclose(DiscreteDist.dirac(0.9))
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = P[0, 0, 2] = 0.5
    fork = TabularMdp.build(P, [[D0]] * 3, [False, True, True], 1.0, allow_undiscounted=True)
    eta = DistTable([[D0], [D0], [DiscreteDist.dirac(1.0)]])
    assert dist_bellman(eta, fork, Policy.uniform(3, 1), 0, 0).allclose(DiscreteDist([0.0, 1.0], [0.5, 0.5]))


def test_exact_returns_are_a_bellman_fixed_point():
    mdp = build_control_mdp(200)
    pi = Policy.uniform(5, 2)
    eta = exact_return_dist(mdp, pi, tol=1e-12, max_atoms=None)
    again = DistTable([[dist_bellman(eta, mdp, pi, x, a) for a in range(2)] for x in range(5)])
    assert again.sup_w1(eta) <= 1e-12


def test_cramer_examples():
    assert cramer_project(DiscreteDist.dirac(0.25), [0, 1]).allclose(DiscreteDist([0.0, 1.0], [0.75, 0.25]))
    assert cramer_project(DiscreteDist.dirac(-7.0), [0, 1]).allclose(D0)
    with pytest.raises(ProjectionError):
        cramer_project(D0, [0.0, 1.0, 3.0])
    with pytest.raises(ProjectionError):
        cramer_project(D0, [0.0])


@given(dists(lo=-3, hi=3, max_atoms=8), st.integers(2, 12))
def test_cramer_matches_loop_and_preserves_statistics(d, k):
    z = np.linspace(-2, 2, k)
    p = cramer_project(d, z)
    assert np.allclose(p.weights, _cramer_by_loop(d.atoms, d.weights, z)[np.isin(z, p.atoms)], atol=1e-12)
    for lo, hi in zip(z[:-1], z[1:]):
        assert categorical_expectation(p, lo, hi) == pytest.approx(categorical_expectation(d, lo, hi), abs=1e-12)


@given(dists(lo=-2, hi=2), dists(lo=-2, hi=2), st.integers(2, 10))
def test_cramer_is_a_w1_nonexpansion(d1, d2, k):
    z = np.linspace(-2, 2, k)
    assert wasserstein1(cramer_project(d1, z), cramer_project(d2, z)) <= wasserstein1(d1, d2) + 1e-12
    assert cramer_project(d1, z).weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert wasserstein1(cramer_project(d1, z), d1) <= 4.0 / (2 * (k - 1)) + 1e-12


def test_w1_project_examples():
    u = discretize_ppf(lambda q: q, 1000)
    assert w1_project(u, 2).allclose(DiscreteDist([0.25, 0.75], [0.5, 0.5]), atol=1e-3)
    assert w1_project(DiscreteDist.dirac(3.0), 5).allclose(DiscreteDist.dirac(3.0))
    with pytest.raises(ProjectionError):
        w1_project(u, 0)


@given(dists(), st.integers(1, 10))
def test_w1_projection_error_bound(d, k):
    assert wasserstein1(w1_project(d, k), d) <= d.support_width / k + 1e-12


def test_dp_update_on_terminal_pairs_gives_reward_statistics():
    mdp = build_qdrl_mean_counterexample(5)
    fams = make_statistics("expectile", 3)
    table = dp_update(StatTable.initial(1, 2, fams, "expectile"), mdp, Policy.uniform(1, 2))
    for a in range(2):
        assert np.allclose(table.values[0, a], evaluate_set(fams, mdp.rewards[0][a][0]), atol=1e-12)
    result = dp_fixed_point(StatTable.initial(1, 2, fams, "expectile"), mdp, Policy.uniform(1, 2))
    assert np.array_equal(result.table.values, table.values) and result.sweeps == 2


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_dp_update_is_a_simultaneous_sweep(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, max_states=3)
    pi = random_policy(rng, mdp.num_states, mdp.num_actions)
    fams = make_statistics("qdrl", 4)
    table = StatTable(np.sort(rng.normal(size=(mdp.num_states, 2, 4)), axis=2), fams, "qdrl")
    eta = table.dists()
    new = dp_update(table, mdp, pi)
    for x in reversed(range(mdp.num_states)):
        for a in reversed(range(2)):
            assert np.allclose(new.values[x, a], evaluate_set(fams, dist_bellman(eta, mdp, pi, x, a)), atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cdrl_statistics_track_projected_distributions(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, max_states=3)
    pi = random_policy(rng, mdp.num_states, mdp.num_actions)
    z = np.linspace(-10, 10, 11)
    fams = StatisticSet.categorical(z)
    table = StatTable.initial(mdp.num_states, 2, fams, "cdrl")
    eta = DistTable.constant(mdp.num_states, 2, D0)
    for _ in range(8):
        table = dp_update(table, mdp, pi)
        rows = []
        for x in range(mdp.num_states):
            row = []
            for a in range(2):
                target = dist_bellman(eta, mdp, pi, x, a)
                row.append(DiscreteDist(z, _cramer_by_loop(target.atoms, target.weights, z)))
            rows.append(row)
        eta = DistTable(rows)
        for (x, a), d in eta:
            assert np.allclose(table.values[x, a], evaluate_set(fams, d), atol=1e-12, rtol=0)


def test_fixed_point_contracts():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng, max_states=3)
    pi = random_policy(rng, mdp.num_states, mdp.num_actions)
    fams = StatisticSet.categorical(np.linspace(-10, 10, 21))
    result = dp_fixed_point(StatTable.initial(mdp.num_states, 2, fams, "cdrl"), mdp, pi, tol=1e-10)
    assert result.residual <= 1e-10
    h = np.array(result.history)
    assert h[-1] < h[0] * 1e-6
    extra = dp_update(result.table, mdp, pi)
    assert np.max(np.abs(extra.values - result.table.values)) <= 1e-10
    with pytest.raises(NonConvergenceError) as info:
        dp_fixed_point(StatTable.initial(mdp.num_states, 2, fams, "cdrl"), mdp, pi, tol=1e-10, max_sweeps=3)
    assert len(info.value.history) == 3


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_expectile_and_cdrl_fixed_points_learn_exact_means(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, max_states=3)
    pi = random_policy(rng, mdp.num_states, mdp.num_actions)
    q = q_values_by_linear_solve(mdp.transition, mdp.mean_reward(), pi.probs, mdp.terminal, mdp.gamma)
    fams = make_statistics("expectile", 3)
    init = StatTable.initial(mdp.num_states, 2, fams, "expectile", tol=1e-12)
    table = dp_fixed_point(init, mdp, pi, tol=1e-12).table
    assert np.max(np.abs(table.values[:, :, 1] - q)) <= 1e-8
    cats = StatisticSet.categorical(np.linspace(-10, 10, 11))
    table = dp_fixed_point(StatTable.initial(mdp.num_states, 2, cats, "cdrl"), mdp, pi, tol=1e-13).table
    means = np.array([[table.impute(x, a).mean for a in range(2)] for x in range(mdp.num_states)])
    assert np.max(np.abs(means - q)) <= 1e-8


def test_imputation_failure_names_the_pair():
    fams = make_statistics("expectile", 2)
    table = StatTable(np.array([[[0.5, 0.1]]]), fams, "expectile")
    with pytest.raises(Exception, match=r"\(0, 0\)"):
        table.impute(0, 0)


def _terminal_mdp(law):
    return TabularMdp.build(np.ones((1, 1, 1)), [[law]], [True], 0.9)


def test_sgd_step_examples():
    mdp = _terminal_mdp(DiscreteDist.dirac(1.0))
    table = StatTable.initial(1, 1, StatisticSet.expectiles(taus=[0.5]), "expectile")
    t = Transition(0, 0, 1.0, 0, 0, terminal=True)
    assert sgd_update(table, t, 0.1, mdp).values[0, 0, 0] == pytest.approx(0.1)
    assert table.values[0, 0, 0] == 0.0
    q = StatTable.initial(1, 1, StatisticSet.quantiles(3), "qdrl")
    for _ in range(200):
        q = sgd_update(q, Transition(0, 0, 0.7, 0, 0, terminal=True), 0.05, mdp)
    assert np.allclose(q.values, 0.7, atol=0.05)
    with pytest.raises(ValueError):
        sgd_update(table, t, 0.0, mdp)


def test_naive_and_imputing_targets_differ():
    chain = build_absorbing_chain(3, 0.5, 1.0)
    fams = StatisticSet.expectiles(taus=[0.1, 0.5, 0.9])
    values = np.zeros((3, 1, 3))
    values[1, 0] = evaluate_set(fams, DiscreteDist([0.0, 2.0], [0.5, 0.5]))
    t = Transition(0, 0, 0.0, 1, 0)
    imputing = sgd_update(StatTable(values, fams, "expectile"), t, 1.0, chain, mode="imputing")
    naive = sgd_update(StatTable(values, fams, "naive-expectile"), t, 1.0, chain)
    assert imputing.values[0, 0, 1] == pytest.approx(0.5)  # the 0.5 step reaches gamma * mean
    assert naive.values[0, 0, 1] == pytest.approx(0.5)
    assert not np.allclose(imputing.values[0, 0], naive.values[0, 0])


def test_greedy_action_examples():
    mdp = build_control_mdp()
    pi = Policy.uniform(5, 2)
    eta = exact_return_dist(mdp, pi)
    fams = make_statistics("expectile", 9)
    values = np.array([[evaluate_set(fams, eta[x, a]) for a in range(2)] for x in range(5)])
    assert greedy_action(StatTable(values, fams, "expectile"), 0) == 0
    k = 5
    counter = build_qdrl_mean_counterexample(k)
    q = make_statistics("qdrl", k)
    values = np.array([[evaluate_set(q, counter.rewards[0][a][0]) for a in range(2)]])
    assert np.all(values[0, 0] == 0.0)
    assert greedy_action(StatTable(values, q, "qdrl"), 0) == 1
    one = StatTable.initial(2, 1, fams, "expectile")
    assert greedy_action(one, 0) == 0
    tie = StatTable.initial(1, 3, fams, "expectile")
    assert greedy_action(tie, 0) == 0
    no_mean = StatTable.initial(1, 2, StatisticSet.expectiles(taus=[0.2, 0.8]), "expectile")
    with pytest.raises(UnsupportedControlError):
        greedy_action(no_mean, 0)


def test_training_contracts():
    mdp = build_nchain(5)
    pi = optimal_nchain_policy(mdp)
    fams = make_statistics("expectile", 3)
    idle = train(mdp, pi, fams, "expectile", n_steps=0, rng=0)
    assert np.array_equal(idle.table.values, StatTable.initial(5, 2, fams, "expectile").values)
    a = train(mdp, pi, fams, "expectile", n_steps=500, rng=7, record_every=100)
    b = train(mdp, pi, fams, "expectile", n_steps=500, rng=7, record_every=100)
    assert np.array_equal(a.table.values, b.table.values)
    assert [s for s, _ in a.snapshots] == [0, 100, 200, 300, 400, 500]
    assert all(np.array_equal(u, v) for (_, u), (_, v) in zip(a.snapshots, b.snapshots))
    assert a.episodes > 0
    with pytest.raises(ValueError):
        train(mdp, pi, fams, "expectile", alpha=-1.0)
