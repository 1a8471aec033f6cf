import math

import numpy as np
import pytest

from chaosgal.dynamics import torus_distance
from chaosgal.errors import InputError
from chaosgal.measures import GridDensity, density_from_samples, jsd, tv
from chaosgal.observable import (ObservableConfig, apply_g, jsd_approximation_bound, psi,
                                 pushforward_density, sup_bound)


def test_psi_examples():
    for eps in (0.1, 0.25, 0.4):
        assert psi(0.0, eps) == 0.0
        assert psi(1.0 - eps, eps) == pytest.approx(1.0, abs=1e-15)
        assert psi(1.0, eps) == 0.0
    with pytest.raises(InputError):
        psi(1.5, 0.25)


def test_config_validation():
    for eps in (0.0, 0.5, -0.1):
        with pytest.raises(InputError):
            ObservableConfig(eps)


def test_apply_g_examples():
    cfg = ObservableConfig(0.25, 2)
    assert np.array_equal(apply_g(cfg, np.zeros(2)), np.zeros(2))
    assert np.allclose(apply_g(cfg, np.array([0.375, 0.875])), [0.5, 0.5], atol=1e-15)


def test_apply_g_lipschitz():
    cfg = ObservableConfig(0.2, 2)
    rng = np.random.default_rng(0)
    x, y = rng.random((100_000, 2)), rng.random((100_000, 2))
    near = np.mod(x + 0.01 * rng.standard_normal(x.shape), 1.0)
    for a, b in ((x, y), (x, near)):
        lhs = np.linalg.norm(apply_g(cfg, a) - apply_g(cfg, b), axis=1)
        assert np.all(lhs <= cfg.lipschitz * torus_distance(a, b) + 1e-12)


def test_uniform_pushes_to_uniform():
    for d, res in ((1, 512), (2, 64)):
        cfg = ObservableConfig(0.3, d)
        out = pushforward_density(cfg, GridDensity.uniform(d, res))
        assert np.max(np.abs(out.values - 1.0)) < 1e-9


def test_sin_density_sup_bound():
    cfg = ObservableConfig(0.25, 1)
    f = lambda x: 1.0 + 0.1 * np.sin(2 * np.pi * x[:, 0])
    f_nu = GridDensity.from_function(f, 1, 512)
    f_mu = pushforward_density(cfg, f)
    M = 1.1 + 0.2 * math.pi  # sup plus Lipschitz constant
    assert np.max(np.abs(f_nu.values - f_mu.values)) <= sup_bound(cfg, M)


def _smooth_density(rng, terms=3):
    a = rng.uniform(-1, 1, terms)
    a *= 0.5 / np.abs(a).sum()
    ph = rng.uniform(0, 2 * np.pi, terms)
    k = np.arange(1, terms + 1)
    f = lambda x: 1.0 + np.sum(a * np.sin(2 * np.pi * k * x[:, :1] + ph), axis=1)
    M = 1.0 + np.abs(a).sum() + 2 * np.pi * np.sum(k * np.abs(a))
    return f, M


def test_mass_conservation():
    rng = np.random.default_rng(1)
    for _ in range(50):
        f, _ = _smooth_density(rng)
        out = pushforward_density(ObservableConfig(rng.uniform(0.05, 0.45)), f)
        assert abs(out.mass() - 1.0) <= 1e-9


def test_jsd_bound_examples():
    assert jsd_approximation_bound(ObservableConfig(0.1, 2), 1.0) == pytest.approx(
        math.log(2) / 2 * 5 * 0.1, abs=1e-12)
    assert jsd_approximation_bound(ObservableConfig(1e-12, 1), 1.0) < 1e-11
    assert round(jsd_approximation_bound(ObservableConfig(0.1, 2), 1.0), 5) == 0.17329


def test_measured_jsd_below_bound():
    rng = np.random.default_rng(2)
    for eps in (0.05, 0.1, 0.2):
        cfg = ObservableConfig(eps)
        for _ in range(20):
            f, M = _smooth_density(rng)
            f_nu = GridDensity.from_function(f, 1, 512)
            assert jsd(f_nu, pushforward_density(cfg, f)) <= jsd_approximation_bound(cfg, M)


def test_pushforward_matches_monte_carlo():
    cfg = ObservableConfig(0.25)
    f = lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x[:, 0])
    rng = np.random.default_rng(3)
    x = rng.random(3_000_000)
    keep = rng.random(x.size) * 1.5 < f(x[:, None])
    x = x[keep][:1_000_000]
    hist = density_from_samples(apply_g(cfg, x[:, None]), 64)
    assert tv(hist, pushforward_density(cfg, f, resolution=64)) < 0.01
