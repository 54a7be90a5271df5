import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_cdf_distance
from strategies import dists
from statdrl.distributions import (
    DiscreteDist,
    InvalidDistributionError,
    InvalidMixtureError,
    cdf,
    compress,
    cramer_l2,
    inverse_cdf,
    mixture,
    moment,
    pushforward,
    sample,
    wasserstein1,
)

HALF = DiscreteDist([0.0, 1.0], [0.5, 0.5])


def test_canonical_form_sorts_and_merges():
    d = DiscreteDist([1.0, 0.0, 1.0 + 1e-13], [0.25, 0.5, 0.25])
    # merged atoms sit at their mass-weighted mean
    assert np.allclose(d.atoms, [0.0, 1.0 + 5e-14], rtol=0, atol=1e-15)
    assert d.weights.tolist() == [0.5, 0.5]


@pytest.mark.parametrize("atoms, weights", [([], []), ([0.0], [0.9]), ([0.0, 1.0], [1.2, -0.2]), ([np.nan], [1.0])])
def test_invalid_distributions_rejected(atoms, weights):
    with pytest.raises(InvalidDistributionError):
        DiscreteDist(atoms, weights)


def test_values_are_immutable():
    with pytest.raises(ValueError):
        HALF.atoms[0] = 3.0


def test_pushforward_examples():
    assert pushforward(HALF, 1.0, 0.9).allclose(DiscreteDist([1.0, 1.9], [0.5, 0.5]))
    assert pushforward(DiscreteDist.dirac(0.0), 0.0, 0.9).allclose(DiscreteDist.dirac(0.0))
    assert pushforward(DiscreteDist([-1.0, 1.0], [0.5, 0.5]), 0.0, 0.0).allclose(DiscreteDist.dirac(0.0))


def test_mixture_examples():
    assert mixture([(0.5, DiscreteDist.dirac(0.0)), (0.5, DiscreteDist.dirac(1.0))]).allclose(HALF)
    assert mixture([(1.0, HALF)]).allclose(HALF)
    out = mixture([(0.5, DiscreteDist.dirac(0.0)), (0.5, DiscreteDist([0.0, 2.0], [0.5, 0.5]))])
    assert out.allclose(DiscreteDist([0.0, 2.0], [0.75, 0.25]))


def test_mixture_weight_violation():
    with pytest.raises(InvalidMixtureError):
        mixture([(0.5, HALF), (0.4, HALF)])


def test_cdf_examples():
    assert cdf(HALF, 0.0) == 0.5
    assert cdf(HALF, -1.0) == 0.0
    assert cdf(HALF, 0.5) == 0.5


def test_inverse_cdf_examples():
    assert inverse_cdf(HALF, 0.25) == 0.0
    assert inverse_cdf(HALF, 0.75) == 1.0
    assert inverse_cdf(DiscreteDist.dirac(3.5), 0.1) == 3.5
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            inverse_cdf(HALF, bad)


def test_moment_examples():
    assert moment(HALF, 1) == 0.5
    assert moment(HALF, 2) == 0.5
    assert moment(DiscreteDist.dirac(2.0), 3) == 8.0


def test_distance_examples():
    assert wasserstein1(DiscreteDist.dirac(0.0), DiscreteDist.dirac(1.0)) == 1.0
    assert wasserstein1(HALF, HALF) == 0.0
    assert wasserstein1(HALF, DiscreteDist.dirac(0.5)) == pytest.approx(0.5, abs=1e-12)
    assert cramer_l2(HALF, HALF) == 0.0
    assert cramer_l2(DiscreteDist.dirac(0.0), DiscreteDist.dirac(1.0)) == pytest.approx(1.0)
    assert cramer_l2(HALF, DiscreteDist.dirac(0.0)) == pytest.approx(np.sqrt(0.25 * 1.0), abs=1e-12)


def test_distance_examples_match_grid_oracle():
    assert wasserstein1(HALF, DiscreteDist.dirac(0.5)) == pytest.approx(
        grid_cdf_distance(HALF, DiscreteDist.dirac(0.5)), abs=1e-5)
    assert cramer_l2(HALF, DiscreteDist.dirac(0.0)) == pytest.approx(
        grid_cdf_distance(HALF, DiscreteDist.dirac(0.0), power=2), abs=1e-5)


def test_sampling():
    assert sample(DiscreteDist.dirac(2.5), np.random.default_rng(0)) == 2.5
    draws = sample(HALF, np.random.default_rng(1), 100_000)
    assert abs(draws.mean() - 0.5) < 0.01
    a = sample(HALF, np.random.default_rng(7), 50)
    b = sample(HALF, np.random.default_rng(7), 50)
    assert np.array_equal(a, b)


@given(dists(), st.floats(-5, 5), st.floats(0, 0.99))
def test_pushforward_keeps_mass_and_maps_atoms(d, r, gamma):
    out = pushforward(d, r, gamma)
    assert out.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert out.mean == pytest.approx(r + gamma * d.mean, abs=1e-9)
    if gamma * np.min(np.diff(d.atoms), initial=1.0) > 1e-9:
        assert np.allclose(out.atoms, r + gamma * d.atoms, atol=1e-9)
        assert np.allclose(out.weights, d.weights, rtol=0, atol=1e-15)


@given(dists(), dists(), dists())
def test_wasserstein_is_a_metric(a, b, c):
    assert wasserstein1(a, b) == pytest.approx(wasserstein1(b, a), abs=1e-12)
    assert wasserstein1(a, a) == 0.0
    assert wasserstein1(a, c) <= wasserstein1(a, b) + wasserstein1(b, c) + 1e-9
    if not a.allclose(b, atol=1e-12):
        assert wasserstein1(a, b) > 0


@given(dists(), dists())
def test_mean_gap_below_wasserstein(a, b):
    assert abs(a.mean - b.mean) <= wasserstein1(a, b) + 1e-9


@given(dists())
def test_generalized_inverse_consistency(d):
    for z in d.atoms:
        level = cdf(d, z)
        if level < 1.0:
            assert inverse_cdf(d, level) <= z


@settings(max_examples=25, deadline=None)
@given(dists(), dists())
def test_distances_match_dense_integration(a, b):
    assert wasserstein1(a, b) == pytest.approx(grid_cdf_distance(a, b, n=200_001), abs=1e-3)
    # grid oracle at 1e-4 spacing; exact agreement on a grid that contains every atom
    grid = np.union1d(a.atoms, b.atoms)
    fine = np.unique(np.concatenate([np.linspace(u, v, 50) for u, v in zip(grid[:-1], grid[1:])] or [grid]))
    mid = 0.5 * (fine[1:] + fine[:-1])
    fa = np.array([cdf(a, t) for t in mid])
    fb = np.array([cdf(b, t) for t in mid])
    assert wasserstein1(a, b) == pytest.approx(float(np.abs(fa - fb) @ np.diff(fine)), abs=1e-6)
    assert cramer_l2(a, b) == pytest.approx(float(np.sqrt(((fa - fb) ** 2) @ np.diff(fine))), abs=1e-6)


@given(dists(max_atoms=6), st.integers(3, 12))
def test_compress_keeps_low_moments(d, cells):
    big = mixture([(0.5, d), (0.5, pushforward(d, 0.3, 0.7))])
    small = compress(big, 3 * cells)
    for k in range(1, 6):
        assert moment(small, k) == pytest.approx(moment(big, k), rel=1e-8, abs=1e-8)
