import math

import numpy as np
import pytest

import potlab


@pytest.fixture(scope="module")
def tree6():
    return potlab.Space("tree", N=6)


def test_space_basics(tree6):
    assert len(tree6) == 64
    assert tree6.Q == pytest.approx(1.0)
    cantor = potlab.Space("cantor", N=5)
    assert cantor.Q == pytest.approx(math.log(2) / math.log(3))
    assert tree6.distance(0, 63) == pytest.approx(1.0)
    assert tree6.ball(0, 0.25) == (0, 8)
    with pytest.raises(Exception):
        potlab.Space("sphere", N=3)


@pytest.mark.parametrize("kind", ["tree", "interval", "cantor"])
def test_fast_matches_naive(kind):
    sp = potlab.Space(kind, N=6)
    K = potlab.Kernel(sp, 0.75)
    f = np.random.default_rng(3).uniform(-1, 1, len(sp))
    np.testing.assert_allclose(K.apply(f), K.apply_naive(f), rtol=1e-10, atol=1e-12)


def test_tree_kernel_levels_by_hand():
    # depth 2, delta 1/2: leaves 0,1 sit at distance 1/2, leaves 0,2 at distance 1
    sp = potlab.Space("tree", N=2)
    K = potlab.Kernel(sp, 0.5)
    assert K.value(0, 1) == pytest.approx(2.0**0.5)
    assert K.value(0, 2) == pytest.approx(1.0)


def test_singleton_capacity(tree6):
    K = potlab.Kernel(tree6, 0.75)
    for p in (1.5, 2.0, 3.0):
        sol = potlab.capacity(K, p, [5])
        assert sol["value"] == pytest.approx(potlab.singleton_capacity(K, p, 5), rel=1e-8)


def test_primal_dual_and_exact_agree(tree6):
    K = potlab.Kernel(tree6, 0.75)
    E = [0, 3, 17, 40]
    a = potlab.capacity(K, 2.0, E, "primal")["value"]
    b = potlab.capacity(K, 2.0, E, "dual")["value"]
    c = potlab.capacity(K, 2.0, E, "exact")["value"]
    assert a == pytest.approx(c, rel=1e-8)
    assert b == pytest.approx(c, rel=1e-3)
    with pytest.raises(ValueError):
        potlab.capacity(K, 2.0, E, "magic")


def test_capacity_monotone(tree6):
    K = potlab.Kernel(tree6, 0.75)
    small = potlab.capacity(K, 2.0, [0, 1])["value"]
    big = potlab.capacity(K, 2.0, [0, 1, 2, 3])["value"]
    assert small <= big + 1e-12


def test_quasi_additivity_bounds(tree6):
    K = potlab.Kernel(tree6, 0.75)
    r = potlab.quasi_additivity(K, 2.0, count=4, seed=1)
    assert r["pass"]
    assert 1.0 - 1e-9 <= r["ratio"] <= r["bound"]
    # closed form of the constant at p = 2
    assert r["bound"] == pytest.approx(3 * K.norm_1() ** 2 + 2, rel=1e-12)


@pytest.mark.parametrize("kind", ["tree", "interval", "cantor"])
def test_poisson_reproduces_constants(kind):
    sp = potlab.Space(kind, N=6)
    P = potlab.Poisson(sp)
    heights, rows = P.field(np.ones(len(sp)))
    assert len(rows) == len(heights)
    assert np.max(np.abs(np.asarray(rows) - 1.0)) < 1e-12
    assert P.normalization_ratio() <= P.calibrate_normalization() * (1 + 1e-12)


def test_random_cube_function_depth_consistent():
    a = potlab.random_cube_function(potlab.Space("tree", N=6), 4, 9)
    b = potlab.random_cube_function(potlab.Space("tree", N=8), 4, 9)
    np.testing.assert_allclose(np.repeat(a, 4), b)


def test_convergence_helpers():
    sp = potlab.Space("interval", N=7)
    K = potlab.Kernel(sp, 0.8)
    P = potlab.Poisson(sp)
    f = potlab.profile(sp, "hat")
    split = potlab.approximation_split(P, K, 2.0, f, 0.05)
    assert split["within_target"]
    frac = potlab.nontangential_fraction(P, K, f, list(range(5, 128, 16)), 0.1)
    assert 0.0 <= frac <= 1.0
