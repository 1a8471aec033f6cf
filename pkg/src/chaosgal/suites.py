"""Check suites behind the CLI: each returns (check, value, threshold, pass) rows."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import concentration as conc
from . import entropy as ent
from .dynamics import cat_map, doubling_step
from .tower import (check_semiconjugacy, doubling_tower, fit_tail_rate,
                    half_interval_doubling_tower, is_aperiodic, lift_and_push_measure,
                    tail_distribution)


def tower_suite(spec=None, samples=10_000, tail_n=40, invariance_samples=1_000_000, seed=0):
    """Semi-conjugacy, exact tails, aperiodicity and invariance of the lifted measure."""
    spec = spec or doubling_tower()
    rows = []
    sc = check_semiconjugacy(spec, doubling_step, samples, seed=seed)
    rows.append(("semiconjugacy_max_discrepancy", sc.max_discrepancy, 1e-12, sc.passed(1e-12)))
    exact = doubling_tower(levels=max(64, tail_n + 1), exact=True)
    bad = sum(1 for n in range(1, tail_n + 1)
              if tail_distribution(exact, n, exact=True) != Fraction(2) ** (1 - n))
    rows.append(("tail_exact_mismatches", bad, 0, bad == 0))
    gcd = math.gcd(*spec.return_times)
    rows.append(("return_time_gcd", gcd, 1, is_aperiodic(spec)))
    fit = fit_tail_rate(spec, tail_n)
    rows.append(("tail_rate_tau", fit.tau, 1.0, fit.exponential))
    inv = lift_and_push_measure(spec, doubling_step, invariance_samples, seed=seed)
    rows.append(("lifted_measure_tv", inv.tv, 0.01, inv.passed(0.01)))
    # a non-invariant construction must be detected
    ctrl = lift_and_push_measure(half_interval_doubling_tower(), doubling_step,
                                 invariance_samples, seed=seed)
    rows.append(("control_half_interval_tv", ctrl.tv, 0.01, not ctrl.passed(0.01)))
    ctrl = lift_and_push_measure(spec, doubling_step, invariance_samples, seed=seed,
                                 sampling="cells")
    rows.append(("control_unweighted_tv", ctrl.tv, 0.05, ctrl.tv >= 0.05))
    return rows


def cat_product(x):
    """cos(2 pi x1) cos(2 pi x2), the variance-scaling observable."""
    return np.cos(2.0 * np.pi * x[..., 0]) * np.cos(2.0 * np.pi * x[..., 1])


def cat_lipschitz(x):
    """cos(2 pi x1) / (2 pi): 1-Lipschitz on the torus, mean zero."""
    return np.cos(2.0 * np.pi * x[..., 0]) / (2.0 * np.pi)


def bernoulli(rng, shape):
    return (rng.random(shape) < 0.5).astype(float)


def concentration_suite(iid_n=100, iid_replicas=10_000, var_grid=tuple(2 ** e for e in range(6, 15)),
                        var_replicas=2000, cg_ns=(256, 1024, 4096), cg_replicas=4000, seed=0,
                        tail_rows=None):
    """Hoeffding tails for Bernoulli means, cat-map variance scaling and the fitted constant."""
    rows = []
    obs = conc.sample_mean_observable(iid_n)
    est = conc.empirical_tail_check(obs, conc.IIDSource(1, bernoulli), iid_replicas, center=0.5,
                                    seed=seed)
    worst = max(e / b for _, e, b, _ in est.rows())
    rows.append(("iid_tail_to_bound_ratio_max", worst, 1.0, est.all_passed))
    if tail_rows is not None:
        tail_rows.extend(est.rows())
    sc = conc.birkhoff_variance_scaling(cat_map(), cat_product, var_grid, var_replicas, seed=seed)
    rows.append(("cat_variance_slope_low", sc.slope, -1.2, sc.slope >= -1.2))
    rows.append(("cat_variance_slope_high", sc.slope, -0.8, sc.slope <= -0.8))
    fit = conc.fit_cg_constant(conc.TrajectorySource(cat_map()), cat_lipschitz, 1.0, cg_ns,
                               cg_replicas, seed=seed)
    for n, c, r in zip(fit.ns, fit.C_raw, fit.ratios()):
        rows.append((f"cg_constant_ratio_n{n}", r, 0.2, abs(r - 1.0) <= 0.2))
        rows.append((f"cg_constant_n{n}", c, math.nan, math.isfinite(c)))
    return rows


def entropy_suite(epsilons=(0.5, 0.25, 0.125, 0.0625), probes=1000, c1_eps=0.25, c1_probes=500,
                  spaces=30, dudley_trials=50, seed=0, reports=None):
    """Net coverage, growth exponent, subset covering inequality and Dudley quadrature."""
    rows = []
    reps, gamma = ent.sup_net_reports(ent.Ball(1, 0, 1.0, 1.0), epsilons, probes, seed=seed)
    if reports is not None:
        reports.extend(reps)
    for r in reps:
        rows.append((f"sup_net_coverage_eps{r.epsilon:g}", r.verified_fraction, 1.0,
                     r.verified_fraction == 1.0))
    sizes = [r.net_size for r in sorted(reps, key=lambda r: -r.epsilon)]
    mono = all(a <= b for a, b in zip(sizes, sizes[1:]))
    rows.append(("sup_net_size_monotone", int(mono), 1, mono))
    expo = ent.fit_growth_exponent(reps)
    rows.append(("sup_net_growth_exponent_low", expo, 0.8, expo >= 0.8))
    rows.append(("sup_net_growth_exponent_high", expo, 1.2, expo <= 1.2))
    rows.append(("sup_net_gamma_fit", gamma, math.nan, True))
    rng = np.random.default_rng([seed, 1])
    net = ent.build_c1_net(ent.Ball(1, 1, 1.0, 1.0), c1_eps)
    frac, _ = ent.verify_c1_net(net, [ent.random_c11_probe(rng) for _ in range(c1_probes)])
    rows.append((f"c1_net_coverage_eps{c1_eps:g}", frac, 1.0, frac == 1.0))
    rows.append(("c1_constant_net_size", len(net.constants), 4.0 / c1_eps,
                 len(net.constants) <= 4.0 / c1_eps))
    ck = ent.covering_subset_inequality_check(spaces, seed=seed)
    rows.append(("covering_subset_violations", ck.violations, 0, ck.violations == 0))
    rows.append(("greedy_cover_violations", ck.greedy_violations, 0, ck.greedy_violations == 0))
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    for _ in range(dudley_trials):
        g, s, d = rng.uniform(0.0, 10.0), rng.uniform(0.0, 1.9), rng.uniform(0.0, 2.0)
        worst = max(worst, abs(ent.dudley_integral(g, s, d) - ent.dudley_integral_numeric(g, s, d)))
    rows.append(("dudley_quadrature_max_error", worst, 1e-8, worst <= 1e-8))
    return rows


def write_rows(rows, path):
    lines = ["check,value,threshold,pass"]
    for check, value, threshold, ok in rows:
        lines.append(f"{check},{float(value)!r},{float(threshold)!r},{'true' if ok else 'false'}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
