import doctest

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import statdrl.estimators
from statdrl import DistributionalDP, Imputer, StochasticDistributionalTD
from statdrl.distributions import DiscreteDist
from statdrl.mdp import Policy, build_absorbing_chain, build_control_mdp, build_nchain, optimal_nchain_policy


def test_docstring_examples():
    assert doctest.testmod(statdrl.estimators).failed == 0


def test_params_round_trip_through_clone():
    est = DistributionalDP(strategy="huber", n_statistics=5, kappa=0.5)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert twin.set_params(n_statistics=3).n_statistics == 3


def test_dp_estimator_reads_out_pairs_and_actions():
    mdp = build_control_mdp(200)
    est = DistributionalDP(strategy="expectile", taus=np.arange(1, 10) / 10).fit(mdp)
    assert est.transform([[0, 0], [0, 1]]).shape == (2, 9)
    assert est.predict([0]).tolist() == [0]
    assert est.mean_values().shape == (5, 2)
    assert est.n_sweeps_ >= 1 and est.residual_ <= 1e-10
    with pytest.raises(ValueError):
        est.transform([[7, 0]])
    with pytest.raises(ValueError):
        est.transform([0])


def test_unfitted_estimators_refuse():
    with pytest.raises(NotFittedError):
        DistributionalDP().transform([[0, 0]])
    with pytest.raises(NotFittedError):
        Imputer().transform([[0.0]])


def test_fit_checks_its_inputs():
    with pytest.raises(TypeError):
        DistributionalDP().fit(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        DistributionalDP().fit(build_control_mdp(50), Policy.uniform(2, 2))
    with pytest.raises(ValueError):
        DistributionalDP(strategy="cdrl").fit(build_control_mdp(50))


def test_td_estimator_is_seeded():
    mdp = build_nchain(4, gamma=0.9)
    pi = optimal_nchain_policy(mdp)
    a = StochasticDistributionalTD(n_statistics=3, n_steps=400, random_state=3).fit(mdp, pi)
    b = StochasticDistributionalTD(n_statistics=3, n_steps=400, random_state=3).fit(mdp, pi)
    assert np.array_equal(a.transform([[0, 0]]), b.transform([[0, 0]]))
    assert a.n_episodes_ > 0
    with pytest.raises(TypeError):
        StochasticDistributionalTD(random_state="seed").fit(mdp, pi)


def test_imputer_round_trip():
    d = DiscreteDist.uniform([-1.0, 0.0, 2.0])
    imp = Imputer(strategy="expectile", n_statistics=3).fit()
    stats = imp.inverse_transform([d])
    out = imp.transform(stats)
    assert np.allclose(imp.inverse_transform(out), stats, atol=1e-7)
    with pytest.raises(ValueError):
        imp.transform([[0.0, 1.0]])
    q = Imputer(strategy="qdrl").fit([[0.0, 1.0]])
    assert q.n_features_in_ == 2
    assert q.transform([[0.25, 0.75]])[0].allclose(DiscreteDist([0.25, 0.75], [0.5, 0.5]))


def test_single_action_chain():
    est = DistributionalDP(strategy="qdrl", n_statistics=4).fit(build_absorbing_chain(3, 0.5, 2.0))
    assert est.transform([0]).tolist() == [[0.5] * 4]
    assert est.impute(0).allclose(DiscreteDist.dirac(0.5))
