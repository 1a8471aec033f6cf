import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chaosgal.concentration import (IIDSource, TrajectorySource, birkhoff_observable,
                                    birkhoff_variance_scaling, chazottes_gouezel_bound,
                                    empirical_tail_check, fit_cg_constant, implied_tail_exponent,
                                    mcdiarmid_bound, sample_mean_observable,
                                    SeparatelyLipschitzObservable)
from chaosgal.dynamics import cat_map
from chaosgal.entropy import rate_constants
from chaosgal.errors import InputError
from chaosgal.hypothesis import ModelConfig
from chaosgal.suites import bernoulli, cat_lipschitz

coeffs = st.lists(st.floats(0.0, 10.0), min_size=1, max_size=20)


def test_mcdiarmid_examples():
    assert mcdiarmid_bound([1.0]) == 0.25
    assert mcdiarmid_bound(np.full(50, 1 / 50)) == pytest.approx(1 / 200, rel=1e-14)
    assert mcdiarmid_bound(np.zeros(5)) == 0.0
    with pytest.raises(InputError):
        mcdiarmid_bound([-1.0])


@given(coeffs, st.floats(0.0, 5.0))
def test_mcdiarmid_homogeneous(c, s):
    assert mcdiarmid_bound(np.array(c) * s) == pytest.approx(s * s * mcdiarmid_bound(c), rel=1e-9,
                                                            abs=1e-300)


def test_chazottes_gouezel_examples():
    assert chazottes_gouezel_bound(np.zeros(3), 1.0) == 0.0
    lip, n = 3.0, 64
    assert chazottes_gouezel_bound(np.full(n, lip / n), 1.0, 1.0) == pytest.approx(lip ** 2 / n)
    with pytest.raises(InputError):
        chazottes_gouezel_bound([1.0], 0.0)


@given(coeffs, st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_chazottes_gouezel_scaling(L, C, Lo):
    base = chazottes_gouezel_bound(L, 1.0, 1.0)
    assert chazottes_gouezel_bound(L, C, Lo) == pytest.approx(C * Lo * Lo * base, rel=1e-9,
                                                             abs=1e-300)


def test_implied_exponent_matches_gamma3():
    cfg = ModelConfig(d=1, B=0.1, C1=1.0)
    g3 = rate_constants(cfg, C_sys=1.0, L_obs=1.0).gamma3_hat
    for n in (10, 100, 1000):
        assert implied_tail_exponent(n, 0.1, 1.0, 1.0, 1.0) == pytest.approx(g3 * n, rel=1e-12)


def test_bernoulli_hoeffding():
    obs = sample_mean_observable(100)
    est = empirical_tail_check(obs, IIDSource(1, bernoulli), 10_000, t_grid=[0.1], center=0.5)
    assert est.bound[0] == pytest.approx(math.exp(-2.0), rel=1e-12)
    assert est.all_passed


def test_default_grid_never_exceeded():
    obs = sample_mean_observable(100)
    est = empirical_tail_check(obs, IIDSource(1, bernoulli), 10_000, center=0.5, seed=3)
    assert est.all_passed and len(est.rows()) == 20


def test_degenerate_observable():
    obs = SeparatelyLipschitzObservable(lambda y: np.zeros(y.shape[0]), np.zeros(10), bounded=True)
    est = empirical_tail_check(obs, IIDSource(), 200, t_grid=[0.01, 0.1])
    assert np.all(est.empirical_upper == 0) and np.all(est.empirical_lower == 0)
    with pytest.raises(InputError):
        empirical_tail_check(obs, IIDSource(), 50)


def test_observable_coefficients_validated():
    obs = birkhoff_observable(cat_lipschitz, 1.0, 16)
    assert obs.validate(1000) <= 1.0 + 1e-9
    bad = birkhoff_observable(lambda y: np.cos(2 * np.pi * y[..., 0]), 1.0, 16)
    assert bad.validate(1000) > 1.0


def test_iid_variance_slope():
    rep = birkhoff_variance_scaling(None, lambda y: y[..., 0], [2 ** e for e in range(6, 15)], 2000)
    assert abs(rep.slope + 1.0) <= 0.1
    assert rep.variances[0] == pytest.approx(1 / (12 * 64), rel=0.1)


def test_constant_observable_degenerate():
    rep = birkhoff_variance_scaling(None, lambda y: np.ones(y.shape[:-1]), [8, 16, 32, 64], 500)
    assert rep.degenerate
    with pytest.raises(InputError):
        birkhoff_variance_scaling(None, lambda y: y[..., 0], [8, 16, 32], 500)


def test_cat_map_tails_dominated_by_fitted_constant():
    src = TrajectorySource(cat_map())
    fit = fit_cg_constant(src, cat_lipschitz, 1.0, [256, 1024, 4096], 4000, seed=0)
    assert fit.stable(0.2)
    C = fit.C_raw[1]
    means = src.birkhoff_means(cat_lipschitz, [1024], 4000, seed=[0, 1])[0]
    obs = birkhoff_observable(cat_lipschitz, 1.0, 1024)
    est = empirical_tail_check(obs, src, 4000, variance_proxy=C / 1024, center=0.0, values=means)
    assert est.all_passed
