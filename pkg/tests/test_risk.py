import math

import numpy as np
import pytest

from chaosgal.errors import AuditFailure, InputError
from chaosgal.hypothesis import (DiscriminatorParams, GeneratorParams, ModelConfig,
                                 generator_density, optimal_discriminator, random_discriminator,
                                 random_generator)
from chaosgal.measures import LN2, GridDensity, jsd
from chaosgal.risk import (ModelErrors, RiskBreakdown, TrainConfig, decomposition_audit,
                           empirical_risk, generalization_error_lambda, generalization_error_mu,
                           linear_target, lipschitz_bounds_check, measure_model_errors,
                           population_risk, train_gal, uniform_target)

CFG = ModelConfig(d=1)
HALF = DiscriminatorParams.constant_half()


def _f_lin(res=512):
    return linear_target().grid_density(res)


def test_breakdown_identity():
    r = RiskBreakdown(-0.4, -0.9)
    assert r.L == 0.5 * (r.L_mu + r.L_lambda)


def test_population_constant_half():
    g = random_generator(np.random.default_rng(0), CFG)
    for method, f in (("grid", _f_lin()), ("latent", linear_target())):
        assert population_risk(f, g, HALF, method).L == pytest.approx(-LN2, abs=1e-12)


def test_population_at_equality():
    g = random_generator(np.random.default_rng(1), CFG)
    f_mu = generator_density(g, 512)
    xi = optimal_discriminator(f_mu, f_mu)
    assert population_risk(f_mu, g, xi).L == pytest.approx(-LN2, abs=1e-12)


def test_population_optimal_discriminator_linear_target():
    f_mu, u = _f_lin(), GridDensity.uniform(1, 512)
    g = GeneratorParams.identity(1)
    xi = optimal_discriminator(f_mu, u)
    assert population_risk(f_mu, g, xi).L == pytest.approx(jsd(f_mu, u) - LN2, abs=1e-6)


def test_optimal_discriminator_dominates():
    rng = np.random.default_rng(2)
    f_mu = _f_lin()
    for _ in range(100):
        g = random_generator(rng, CFG)
        best = population_risk(f_mu, g, optimal_discriminator(f_mu, generator_density(g, 512))).L
        assert population_risk(f_mu, g, random_discriminator(rng, CFG)).L <= best + 1e-6


def test_empirical_examples():
    rng = np.random.default_rng(3)
    Y, Z = rng.random((17, 1)), rng.random((17, 1))
    g = random_generator(rng, CFG)
    assert empirical_risk(Y, Z, g, HALF).L == pytest.approx(-LN2, abs=1e-15)
    B = 0.1
    xi = lambda y: B + (1 - 2 * B) * np.asarray(y)[:, 0]
    r = empirical_risk([[0.25], [0.75]], [[0.5], [0.5]], g, xi)
    assert r.L_mu == pytest.approx(0.5 * (math.log(0.3) + math.log(0.7)), abs=1e-15)
    assert r.n == 2 and r.source == "empirical"
    with pytest.raises(InputError):
        empirical_risk(np.zeros((0, 1)), np.zeros((0, 1)), g, HALF)


def test_empirical_converges_to_population():
    rng = np.random.default_rng(4)
    t = linear_target()
    xi = random_discriminator(rng, CFG)
    g = GeneratorParams.identity(1)
    Y = t.sample(1_000_000, rng)
    emp = empirical_risk(Y, rng.random((1_000_000, 1)), g, xi)
    pop = population_risk(t, g, xi, "latent")
    assert abs(emp.L_mu - pop.L_mu) < 3e-3


def test_train_uniform_target():
    rng = np.random.default_rng(5)
    Y = uniform_target().sample(4096, rng)
    res = train_gal(Y, 5, CFG)
    assert jsd(GridDensity.uniform(1, 512), generator_density(res.generator, 512)) < 0.01


def test_train_linear_target_and_determinism():
    Y = linear_target().sample(2 ** 14, np.random.default_rng(6))
    a = train_gal(Y, 6, CFG)
    assert jsd(_f_lin(), generator_density(a.generator, 512)) < 0.02
    b = train_gal(Y, 6, CFG)
    assert np.array_equal(a.theta, b.theta)
    assert np.array_equal(a.discriminator.vector(), b.discriminator.vector())
    assert a.log_csv() == b.log_csv()


def test_train_rejects_small_samples():
    with pytest.raises(InputError):
        train_gal(np.zeros((4, 1)), 0, CFG, TrainConfig(min_n=16))


def test_constant_discriminator_contributes_zero():
    rng = np.random.default_rng(7)
    Y, Z = linear_target().sample(100, rng), rng.random((100, 1))
    g = GeneratorParams.identity(1)
    emp = empirical_risk(Y, Z, g, HALF)
    pop = population_risk(linear_target(), g, HALF, "latent")
    assert emp.L_mu - pop.L_mu == pytest.approx(0.0, abs=1e-15)
    assert emp.L_lambda - pop.L_lambda == pytest.approx(0.0, abs=1e-15)


def test_generalization_errors_nonnegative_and_order_free():
    rng = np.random.default_rng(8)
    t = linear_target()
    Y = t.sample(512, rng)
    a = generalization_error_mu(Y, t, CFG)
    b = generalization_error_mu(Y[rng.permutation(512)], t, CFG)
    assert a >= 0 and b == pytest.approx(a, rel=1e-6)
    assert generalization_error_lambda(rng.random((128, 1)), CFG) >= 0


def test_generalization_mu_small_at_large_n():
    t = linear_target()
    Y = t.sample(2 ** 16, np.random.default_rng(9))
    assert generalization_error_mu(Y, t, CFG) < 0.02


def test_generalization_mu_median_decreases():
    t = linear_target()
    med = []
    for n in (2 ** 8, 2 ** 14):
        vals = [generalization_error_mu(t.sample(n, np.random.default_rng([s, n])), t, CFG, seed=s)
                for s in range(50)]
        med.append(np.median(vals))
    assert med[0] > med[1]


@pytest.mark.slow
def test_generalization_lambda_small_at_large_n():
    Z = np.random.default_rng(10).random((2 ** 16, 1))
    assert generalization_error_lambda(Z, CFG) < 0.02


@pytest.mark.slow
def test_generalization_lambda_median_decreases():
    med = []
    for n in (2 ** 8, 2 ** 14):
        vals = [generalization_error_lambda(np.random.default_rng([s, n]).random((n, 1)), CFG, seed=s)
                for s in range(50)]
        med.append(np.median(vals))
    assert med[0] > med[1]


def test_audit_trivial_cases():
    f_mu = _f_lin()
    zero = ModelErrors(0.0, 0.0, 0.0)
    rep = decomposition_audit(f_mu, f_mu, 0.0, 0.0, zero)
    assert rep.jsd_achieved == 0.0 and rep.passed
    u = GridDensity.uniform(1, 512)
    g = GeneratorParams.identity(1)
    Y = uniform_target().sample(4096, np.random.default_rng(11))
    me = measure_model_errors(u, CFG, probes=[g], n_random=2)
    rep = decomposition_audit(u, g, generalization_error_mu(Y, uniform_target(), CFG),
                              generalization_error_lambda(np.random.default_rng(12).random((256, 1)),
                                                          CFG, restarts=8),
                              me)
    assert rep.passed and rep.slack >= 0


def test_audit_failure_raised():
    f_mu = _f_lin()
    with pytest.raises(AuditFailure):
        decomposition_audit(f_mu, GridDensity.uniform(1, 512), 0.0, 0.0, ModelErrors(0, 0, 0),
                            tolerance=0.0)
    with pytest.raises(InputError):
        decomposition_audit(f_mu, f_mu, math.nan, 0.0, ModelErrors(0, 0, 0))


def test_lipschitz_bounds():
    rep = lipschitz_bounds_check(200, CFG, seed=13)
    assert rep.passed, rep.violations
    assert all(v <= 1.0 for v in rep.max_ratio.values())
