import math
from fractions import Fraction

import numpy as np
import pytest

from chaosgal.dynamics import doubling_step
from chaosgal.errors import ConfigError, InputError
from chaosgal.tower import (TowerCell, TowerSpec, TowerState, check_semiconjugacy,
                            doubling_tower, dump_tower_spec, fit_tail_rate,
                            half_interval_doubling_tower, is_aperiodic, iterate_map,
                            level_counts, lift_and_push_measure, load_tower_spec,
                            polynomial_tail_tower, project, synthetic_tower, tail_distribution,
                            tower_step)


def test_step_climbs_below_return_time():
    spec = synthetic_tower([3])
    s = tower_step(spec, TowerState(0.1, 0, 0), iterate_map(doubling_step))
    assert (s.base_point, s.level) == (0.1, 1)


def test_step_returns_at_top():
    spec = half_interval_doubling_tower()
    s = tower_step(spec, TowerState(0.3, 1), iterate_map(doubling_step))
    assert s.level == 0
    assert s.base_point == pytest.approx(0.2, abs=1e-15)


def test_step_rejects_invalid_level():
    spec = synthetic_tower([2])
    with pytest.raises(InputError):
        tower_step(spec, TowerState(0.1, 2, 0), iterate_map(doubling_step))


def test_project():
    assert project(TowerState(0.3, 0), doubling_step) == 0.3
    assert project(TowerState(0.3, 1), doubling_step) == pytest.approx(0.6)
    from chaosgal.dynamics import cat_map
    cat = cat_map()
    assert np.array_equal(project(TowerState(np.zeros(2), 4), cat.step), np.zeros(2))


def test_semiconjugacy_doubling():
    rep = check_semiconjugacy(doubling_tower(), doubling_step, 10_000, seed=1)
    assert rep.max_discrepancy <= 1e-12 and rep.passed()


def test_semiconjugacy_unit_return_is_trivial():
    spec = TowerSpec([TowerCell(0, 1, 1.0, (0.0, 1.0))])
    assert check_semiconjugacy(spec, doubling_step, 500).max_discrepancy == 0.0


def test_semiconjugacy_detects_corrupted_return_map():
    bad = lambda x, r: iterate_map(doubling_step)(x, r + 1)
    rep = check_semiconjugacy(doubling_tower(), doubling_step, 200, return_map=bad)
    assert rep.max_discrepancy > 0.01 and not rep.passed()


def test_tail_distribution_examples():
    spec = doubling_tower()
    assert tail_distribution(spec, 0) == pytest.approx(1.0, abs=1e-15)
    assert tail_distribution(spec, 3) == pytest.approx(0.25, abs=1e-15)
    two = synthetic_tower([2, 3], [0.5, 0.5])
    assert tail_distribution(two, 2) == 0.5


def test_tail_exact_closed_form():
    spec = doubling_tower(exact=True)
    for n in range(1, 41):
        assert tail_distribution(spec, n, exact=True) == Fraction(2) ** (1 - n)


def test_tail_non_increasing():
    spec = polynomial_tail_tower(2000)
    tails = [tail_distribution(spec, n) for n in range(60)]
    assert tails[0] == pytest.approx(1.0)
    assert all(b <= a for a, b in zip(tails, tails[1:]))


def test_fit_tail_rate_doubling():
    fit = fit_tail_rate(doubling_tower(), 40)
    assert fit.tau == pytest.approx(0.5, abs=1e-6)
    assert fit.c == pytest.approx(2.0, abs=1e-4)
    assert fit.exponential is True


def test_fit_tail_rate_finite_support():
    fit = fit_tail_rate(synthetic_tower([2, 2]), 5)
    assert fit.finite_support and fit.exponential
    assert fit.n_used[-1] < 2


def test_fit_tail_rate_polynomial():
    fit = fit_tail_rate(polynomial_tail_tower(10_000, 2.0), 100)
    assert abs(fit.tau - 1.0) < 0.05
    assert fit.exponential is False


def test_aperiodicity():
    assert is_aperiodic(synthetic_tower([2, 3]))
    assert not is_aperiodic(synthetic_tower([2, 4]))
    assert is_aperiodic(doubling_tower())


def test_level_cardinality_figure_two():
    counts = level_counts(synthetic_tower([2, 4, 3, 4]))
    assert counts == [4, 4, 3, 2] and sum(counts) == 13


def test_lifted_measure_invariant():
    rep = lift_and_push_measure(doubling_tower(), doubling_step, 1_000_000, seed=0)
    assert rep.tv < 0.01


def test_lifted_measure_negative_controls():
    bad = lift_and_push_measure(doubling_tower(), doubling_step, 200_000, sampling="cells")
    assert bad.tv >= 0.05
    half = lift_and_push_measure(half_interval_doubling_tower(), doubling_step, 200_000)
    assert half.tv >= 0.05


def test_single_cell_identity_is_exact():
    spec = TowerSpec([TowerCell(0, 1, 1.0, (0.0, 1.0))])
    rep = lift_and_push_measure(spec, lambda x: x, 10_000)
    assert rep.tv == 0.0


def test_lift_requires_exponential_tails():
    spec = TowerSpec([TowerCell(i, int(r), float(m), (a, b)) for i, (r, m, a, b) in enumerate(
        [(k, 6 / (math.pi ** 2 * k * k), 0.0, 0.0) for k in range(1, 3)])],
        1 - sum(6 / (math.pi ** 2 * k * k) for k in range(1, 3)))
    with pytest.raises(ConfigError):
        lift_and_push_measure(spec, doubling_step, 100)


def test_weights_must_sum_to_one():
    with pytest.raises(InputError):
        TowerSpec([TowerCell(0, 2, 0.4)])


def test_spec_file_round_trip(tmp_path):
    spec = doubling_tower(levels=10)
    p = tmp_path / "tower.txt"
    dump_tower_spec(spec, p)
    back = load_tower_spec(p)
    assert back.return_times == spec.return_times
    assert [c.interval for c in back.cells] == [c.interval for c in spec.cells]
    assert float(back.truncation_tail_mass) == float(spec.truncation_tail_mass)
    (tmp_path / "bad.txt").write_text("cell x 2 0.5\n")
    with pytest.raises(InputError):
        load_tower_spec(tmp_path / "bad.txt")
