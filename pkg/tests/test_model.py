import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chaosgal.errors import ConfigError, InputError
from chaosgal.hypothesis import (DiscriminatorParams, GeneratorParams, ModelConfig,
                                 PolynomialField, apply_discriminator, apply_generator,
                                 apply_inverse, generator_density, holder_norm, load_params,
                                 optimal_discriminator, random_discriminator, random_generator,
                                 rosenblatt_transport, save_params)
from chaosgal.measures import LN2, GridDensity, jsd

SQRT = GeneratorParams((np.array([0.0, 2.0]),))  # inverse-CDF density 2y, phi(z) = sqrt z
CFG1 = ModelConfig(d=1)
CFG2 = ModelConfig(d=2)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(k=1)
    with pytest.raises(ConfigError):
        ModelConfig(B=0.5)
    assert ModelConfig(d=1, k=3, alpha=1.0).high_regularity
    assert not ModelConfig(d=2, k=2, alpha=1.0).high_regularity


def test_identity_generator():
    z = np.random.default_rng(0).random((100, 2))
    assert np.allclose(apply_generator(GeneratorParams.identity(2), z), z, atol=1e-12)
    assert np.allclose(generator_density(GeneratorParams.identity(1)).values, 1.0, atol=1e-12)


def test_sqrt_generator():
    assert apply_generator(SQRT, np.array([[0.25]]))[0, 0] == pytest.approx(0.5, abs=1e-12)
    dens = generator_density(SQRT, 512)
    y = (np.arange(512) + 0.5) / 512
    assert np.max(np.abs(dens.values - 2 * y)) < 1e-6


@pytest.mark.parametrize("cfg", [CFG1, CFG2])
def test_round_trip(cfg):
    rng = np.random.default_rng(1)
    for _ in range(5):
        g = random_generator(rng, cfg)
        z = rng.random((10_000, cfg.d))
        assert np.max(np.abs(apply_inverse(g, apply_generator(g, z)) - z)) < 1e-9


@given(st.integers(0, 2 ** 32 - 1))
def test_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    g = random_generator(rng, CFG1, spread=1.0)
    z = rng.random((200, 1))
    assert np.max(np.abs(apply_inverse(g, apply_generator(g, z)) - z)) < 1e-9


def test_density_mass_random_generators():
    rng = np.random.default_rng(2)
    for i in range(50):
        cfg = CFG1 if i % 2 else ModelConfig(d=2, grid=64)
        dens = generator_density(random_generator(rng, cfg), cfg.resolution)
        assert abs(dens.mass() - 1.0) < 1e-6
        assert dens.min_value() > 0


def test_negative_weights_rejected():
    with pytest.raises(InputError):
        GeneratorParams((np.array([1.0, -1.0]),))


def test_rosenblatt_uniform():
    fit = rosenblatt_transport(GridDensity.uniform(1, 512))
    z = np.linspace(0, 1, 1001)[:, None]
    assert np.max(np.abs(fit.params.apply(z) - z)) < 1e-6


def test_rosenblatt_linear_density():
    f = GridDensity.from_function(lambda y: 2 * y[:, 0], 1, 512)
    with pytest.raises(InputError):
        rosenblatt_transport(f, kappa=0.01)  # grid minimum is 1/512
    fit = rosenblatt_transport(f, kappa=0.0)
    z = np.linspace(0, 1, 1001)
    assert np.max(np.abs(fit.params.apply(z[:, None])[:, 0] - np.sqrt(z))) < 1e-4
    assert fit.model_jsd < 1e-4


def test_rosenblatt_two_dimensional():
    f = GridDensity.from_function(lambda y: (1 + 0.5 * y[:, 0]) * (0.8 + 0.4 * y[:, 1]) / 1.25,
                                  2, 64)
    fit = rosenblatt_transport(f, CFG2)
    assert fit.model_jsd < 1e-4


def test_discriminator_constant_half():
    xi = DiscriminatorParams.constant_half()
    assert np.all(apply_discriminator(xi, np.random.default_rng(3).random(100)) == 0.5)


def test_discriminator_clamp():
    rng = np.random.default_rng(4)
    for cfg in (CFG1, CFG2):
        for _ in range(10):
            xi = DiscriminatorParams.from_vector(rng.normal(0, 50, cfg.disc_size()), cfg)
            v = xi(rng.random((10_000, cfg.d)))
            assert np.all((v >= cfg.B) & (v <= 1 - cfg.B))


@pytest.mark.parametrize("cfg", [CFG1, CFG2])
def test_discriminator_gradient(cfg):
    rng = np.random.default_rng(5)
    xi = random_discriminator(rng, cfg)
    y = rng.uniform(0.01, 0.99, (100, cfg.d))
    h = 1e-5
    fd = np.stack([(xi(y + h * e) - xi(y - h * e)) / (2 * h) for e in np.eye(cfg.d)], axis=1)
    g = xi.gradient(y)
    rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)
    assert rel.max() < 1e-5


def test_discriminator_param_gradient():
    rng = np.random.default_rng(6)
    xi = random_discriminator(rng, CFG1)
    y = rng.random((20, 1))
    a = xi.vector()
    fd = np.zeros((20, a.size))
    for j in range(a.size):
        e = np.zeros_like(a)
        e[j] = 1e-6
        fd[:, j] = (DiscriminatorParams.from_vector(a + e, CFG1)(y)
                    - DiscriminatorParams.from_vector(a - e, CFG1)(y)) / 2e-6
    assert np.allclose(xi.param_gradient(y), fd, atol=1e-8)


def test_optimal_discriminator_examples():
    f = GridDensity.from_function(lambda y: 2 * y[:, 0], 1, 256)
    u = GridDensity.uniform(1, 256)
    assert np.all(optimal_discriminator(u, u).values == 0.5)
    assert np.allclose(optimal_discriminator(f, u).values, f.values / (f.values + 1))
    zero = GridDensity(np.concatenate([np.zeros(128), np.full(128, 2.0)]))
    with pytest.raises(InputError):
        optimal_discriminator(zero, u)


def test_risk_identity_at_optimal_discriminator():
    f_mu = GridDensity.from_function(lambda y: 0.5 + y[:, 0], 1, 512)
    f_phi = generator_density(random_generator(np.random.default_rng(7), CFG1), 512)
    xi = optimal_discriminator(f_mu, f_phi).values
    L = 0.5 * np.mean(f_mu.values * np.log(xi) + f_phi.values * np.log(1 - xi))
    assert L == pytest.approx(jsd(f_mu, f_phi) - LN2, abs=1e-6)


def test_holder_norm_examples():
    assert holder_norm(PolynomialField([[0.0, 1.0]]), 1).ck == pytest.approx(1.0)
    for c in (-2.5, 0.0, 3.0):
        assert holder_norm(PolynomialField([[c]]), 1).ck == pytest.approx(abs(c))


def test_holder_componentwise_bounds():
    rng = np.random.default_rng(8)
    for _ in range(100):
        f = PolynomialField(rng.normal(size=(2, 4)))
        full = holder_norm(f, 1, 0.5, grid=257, n_pairs=2000, seed=1)
        parts = [holder_norm(f.component(i), 1, 0.5, grid=257, n_pairs=2000, seed=1)
                 for i in range(2)]
        for p in parts:
            assert p.lower <= full.lower + 1e-12
        assert full.lower <= sum(p.lower for p in parts) + 1e-12


def test_save_load(tmp_path):
    rng = np.random.default_rng(9)
    g, xi = random_generator(rng, CFG2), random_discriminator(rng, CFG2)
    save_params(tmp_path / "p.txt", g, xi, CFG2)
    g2, xi2, cfg2 = load_params(tmp_path / "p.txt")
    assert all(np.array_equal(a, b) for a, b in zip(g.fields, g2.fields))
    assert np.array_equal(xi.coeffs, xi2.coeffs) and xi2.B == xi.B
    assert cfg2 == CFG2
