import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chaosgal.dynamics import (DoublingMap, TorusAutomorphism, cat_map, doubling_step,
                               generate_trajectory, generate_trajectory_exact, hyperbolic_3d,
                               make_system, sample_trajectory, step, torus_distance)
from chaosgal.errors import InputError
from chaosgal.measures import GridDensity, density_from_samples, tv


def test_cat_map_fixed_point():
    assert np.array_equal(step(cat_map(), np.array([0.0, 0.0])), [0.0, 0.0])


def test_cat_map_half_point():
    assert np.array_equal(step(cat_map(), np.array([0.5, 0.5])), [0.5, 0.0])
    assert cat_map().step_exact((Fraction(1, 2), Fraction(1, 2))) == (Fraction(1, 2), 0)


def test_three_dimensional_fixed_point():
    assert np.array_equal(step(hyperbolic_3d(), np.zeros(3)), np.zeros(3))


def test_step_dimension_mismatch():
    with pytest.raises(InputError):
        step(cat_map(), np.zeros(3))


@pytest.mark.parametrize("matrix", [[[2, 0], [0, 1]], [[2, 1], [0, 1]], [[1, 0], [0, 1]],
                                    [[0, 1], [1, 0]]])
def test_invalid_matrices_rejected(matrix):
    with pytest.raises(InputError):
        TorusAutomorphism(matrix)


def test_torus_distance_examples():
    assert torus_distance(np.array([0.3, 0.4]), np.array([0.3, 0.4])) == 0.0
    assert torus_distance(np.array([0.1]), np.array([0.9])) == pytest.approx(0.2, abs=1e-15)
    d = torus_distance(np.array([0.9, 0.9]), np.array([0.1, 0.1]))
    assert d == pytest.approx(0.2 * math.sqrt(2), abs=1e-15)
    with pytest.raises(InputError):
        torus_distance(np.zeros(2), np.zeros(3))


def test_doubling_step_examples():
    assert doubling_step(0.0) == 0.0
    assert doubling_step(0.3) == 0.6
    assert doubling_step(0.75) == 0.5
    with pytest.raises(InputError):
        doubling_step(1.0)


def test_trajectory_examples():
    cat = cat_map()
    tr = generate_trajectory(cat, np.array([0.25, 0.5]), 1)
    assert tr.n == 1 and np.array_equal(tr.states, [[0.25, 0.5]])
    tr = generate_trajectory(cat, np.zeros(2), 5)
    assert np.array_equal(tr.states, np.zeros((5, 2)))
    tr = generate_trajectory(cat, np.array([0.5, 0.5]), 3)
    assert np.array_equal(tr.states, [[0.5, 0.5], [0.5, 0.0], [0.0, 0.5]])
    exact = generate_trajectory_exact(cat, (Fraction(1, 2), Fraction(1, 2)), 3)
    assert exact == [(Fraction(1, 2), Fraction(1, 2)), (Fraction(1, 2), 0), (0, Fraction(1, 2))]
    with pytest.raises(InputError):
        generate_trajectory(cat, np.zeros(2), 0)


def test_exact_and_float_agree_on_dyadic_points():
    cat = cat_map()
    x0 = (Fraction(3, 16), Fraction(5, 32))
    exact = generate_trajectory_exact(cat, x0, 12)
    fl = generate_trajectory(cat, np.array([float(v) for v in x0]), 12).states
    assert np.array_equal(fl, np.array([[float(v) for v in s] for s in exact]))


@given(st.lists(st.floats(0.0, 1.0, exclude_max=True), min_size=2, max_size=2))
def test_step_inverse_round_trip(x):
    cat = cat_map()
    x = np.array(x)
    back = cat.step_inverse(cat.step(x))
    assert np.all(torus_distance(back, x) <= 1e-12)


def test_cat_map_preserves_lebesgue():
    rng = np.random.default_rng(0)
    x = rng.random((1_000_000, 2))
    cat = cat_map()
    for _ in range(5):
        x = cat.step(x)
    h = density_from_samples(x, 32)
    assert tv(h, GridDensity.uniform(2, 32)) < 0.01


def test_doubling_map_preserves_lebesgue():
    rng = np.random.default_rng(1)
    x = rng.random(1_000_000)
    for _ in range(5):
        x = doubling_step(x)
    assert tv(density_from_samples(x, 64), GridDensity.uniform(1, 64)) < 0.01


def test_chaotic_separation_rate():
    cat = cat_map()
    rng = np.random.default_rng(2)
    x = rng.random(2)
    v = rng.standard_normal(2)
    y = x + 1e-9 * v / np.linalg.norm(v)
    logs = []
    for _ in range(16):
        logs.append(math.log(torus_distance(x, y)))
        x, y = cat.step(x), cat.step(y)
    slope = np.polyfit(np.arange(1, 16), logs[1:], 1)[0]
    target = math.log((3 + math.sqrt(5)) / 2)
    assert abs(slope - target) <= 0.1 * target
    assert cat.lyapunov_exponent == pytest.approx(target, rel=1e-12)


def test_doubling_sampler_is_an_orbit():
    tr = sample_trajectory(DoublingMap(), 500, 3)
    x = tr.states[:, 0]
    assert np.all((x >= 0) & (x < 1))
    # each state is the 53-bit truncation of the exact orbit
    assert np.max(np.abs(doubling_step(x[:-1]) - x[1:])) <= 2.0 ** -52


def test_sample_trajectory_is_deterministic():
    a = sample_trajectory(cat_map(), 100, 7).states
    b = sample_trajectory(cat_map(), 100, 7).states
    assert np.array_equal(a, b)
    assert make_system("cat").dim == 2 and make_system("torus3d").dim == 3
    with pytest.raises(InputError):
        make_system("henon")
