"""Combinatorial Young towers over a return-time partition.

A tower is described by cells (Lambda_i, R_i, m_i) partitioning the base
Lambda.  States are pairs (x, l) with 0 <= l < R(x); the tower map climbs one
level per step and applies T^R at the top, and the projection sends (x, l) to
T^l(x).

The canonical worked example is the doubling map with base [0, 1) and cells
[2^-i, 2^-(i-1)) of return time i + 1: T^(i+1) wraps each cell twice around
the circle, the base weights are m_i = 2^-i, the tail is exactly 2^(1-n) and
the projected tower measure is Lebesgue.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class TowerCell:
    index: int
    return_time: int
    weight: object  # float or Fraction
    interval: tuple | None = None


@dataclass(frozen=True)
class TowerState:
    base_point: object
    level: int
    cell: int | None = None


class TowerSpec:
    """Return-time partition with (possibly truncated) tail mass."""

    def __init__(self, cells, truncation_tail_mass=0, name="tower"):
        cells = tuple(cells)
        if not cells:
            raise InputError("a tower needs at least one cell")
        for c in cells:
            if int(c.return_time) != c.return_time or c.return_time < 1:
                raise InputError(f"cell {c.index}: return time must be a positive integer")
            if c.weight < 0:
                raise InputError(f"cell {c.index}: negative weight")
        total = sum((c.weight for c in cells), 0) + truncation_tail_mass
        if abs(float(total) - 1.0) > WEIGHT_TOL:
            raise InputError(f"weights plus tail mass sum to {float(total)!r}, not 1")
        self.cells = cells
        self.truncation_tail_mass = truncation_tail_mass
        self.name = name
        self._by_index = {c.index: k for k, c in enumerate(cells)}
        with_iv = [c for c in cells if c.interval is not None]
        self._sorted = sorted(with_iv, key=lambda c: c.interval[0])
        self._lefts = [c.interval[0] for c in self._sorted]

    @property
    def return_times(self):
        return [c.return_time for c in self.cells]

    @property
    def has_unit_return(self):
        """Flag for synthetic specs with R_i = 1 (outside the min R > 1 convention)."""
        return min(self.return_times) == 1

    def cell(self, index):
        return self.cells[self._by_index[index]]

    def cell_of(self, x):
        """Cell whose base interval contains the real point ``x``."""
        k = bisect.bisect_right(self._lefts, x) - 1
        if k < 0:
            raise InputError(f"point {x!r} lies in no cell")
        c = self._sorted[k]
        a, b = c.interval
        if not (a <= x < b):
            raise InputError(f"point {x!r} lies in no cell")
        return c

    def return_time_of(self, state):
        if state.cell is not None:
            return self.cell(state.cell).return_time
        return self.cell_of(state.base_point).return_time

    def mean_return_time(self):
        return sum(c.weight * c.return_time for c in self.cells)


def iterate_map(underlying_map):
    """Return map T^R built by iterating the underlying map R times."""

    def return_map(x, r):
        for _ in range(r):
            x = underlying_map(x)
        return x

    return return_map


def _validate_state(spec, s):
    if s.level < 0:
        raise InputError("negative level")
    r = spec.return_time_of(s)
    if s.level >= r:
        raise InputError(f"level {s.level} not below return time {r}")
    return r


def tower_step(spec, s, return_map):
    """One step of the tower map: climb, or return to the base at the top level."""
    r = _validate_state(spec, s)
    if s.level + 1 < r:
        return TowerState(s.base_point, s.level + 1, s.cell)
    x = return_map(s.base_point, r)
    cell = None
    if s.cell is not None and not spec._sorted:
        cell = s.cell
    return TowerState(x, 0, cell)


def project(s, underlying_map):
    """pi(x, l) = T^l(x)."""
    x = s.base_point
    for _ in range(s.level):
        x = underlying_map(x)
    return x


def level_counts(spec):
    """Number of tower cells (i, l) at each level l."""
    top = max(spec.return_times)
    return [sum(1 for r in spec.return_times if r > l) for l in range(top)]


@dataclass(frozen=True)
class SemiconjugacyReport:
    max_discrepancy: float
    samples: int

    def passed(self, tol=1e-12):
        return self.max_discrepancy <= tol


def _circle_or_torus_distance(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    d = np.abs(a - b)
    d = np.minimum(d, 1.0 - d)
    return float(np.sqrt(np.sum(d * d)))


def _sample_states(spec, count, rng, by_weight=True):
    cells = spec.cells
    if by_weight:
        w = np.array([float(c.weight) * c.return_time for c in cells])
    else:
        w = np.array([float(c.weight) for c in cells])
    w = w / w.sum()
    picks = rng.choice(len(cells), size=count, p=w)
    u = rng.random(count)
    lv = rng.random(count)
    states = []
    for k, uu, vv in zip(picks, u, lv):
        c = cells[k]
        level = min(int(vv * c.return_time), c.return_time - 1)
        if c.interval is not None:
            a, b = float(c.interval[0]), float(c.interval[1])
            x = a + (b - a) * uu
            if x >= b:
                x = a
            states.append(TowerState(x, level, None))
        else:
            states.append(TowerState(None, level, c.index))
    return states


def check_semiconjugacy(spec, underlying_map, samples, seed=0, return_map=None,
                        distance=_circle_or_torus_distance):
    """Largest discrepancy between T(pi(s)) and pi(T_hat(s)) over random states."""
    if samples < 1:
        raise InputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    rmap = return_map or iterate_map(underlying_map)
    worst = 0.0
    for s in _sample_states(spec, samples, rng, by_weight=False):
        lhs = underlying_map(project(s, underlying_map))
        rhs = project(tower_step(spec, s, rmap), underlying_map)
        worst = max(worst, distance(lhs, rhs))
    return SemiconjugacyReport(worst, samples)


def tail_distribution(spec, n, exact=False):
    """mu(R > n) including the truncated tail mass (an upper bound if truncated)."""
    if n < 0:
        raise InputError("n must be >= 0")
    zero = Fraction(0) if exact else 0.0
    total = zero
    for c in spec.cells:
        if c.return_time > n:
            total += Fraction(c.weight) if exact else float(c.weight)
    tail = spec.truncation_tail_mass
    total += Fraction(tail) if exact else float(tail)
    return total


@dataclass(frozen=True)
class TailFit:
    c: float
    tau: float
    exponential: bool
    n_used: tuple
    finite_support: bool


def fit_tail_rate(spec, n_max, split_tol=0.25):
    """Least-squares fit of log mu(R > n) against n for n = 1..n_max.

    Zero tails are dropped (the fit uses the positive prefix).  The verdict
    is exponential when tau < 1 and the rates fitted separately on the two
    halves of the range agree to a relative ``split_tol`` in log tau, or when
    the tail vanishes inside the range.
    """
    ns, logs = [], []
    finite = False
    for n in range(1, int(n_max) + 1):
        t = float(tail_distribution(spec, n))
        if t <= 0:
            finite = True
            break
        ns.append(n)
        logs.append(math.log(t))
    if len(ns) < 2:
        # not enough positive points: include n = 0 (tail 1)
        ns = [0] + ns
        logs = [0.0] + logs
    ns_a = np.array(ns, dtype=float)
    logs_a = np.array(logs)
    if len(ns) == 1:
        # every return time is 1: the tail is zero from n = 1 on
        tau, c = 0.0, 1.0
    else:
        slope, intercept = np.polyfit(ns_a, logs_a, 1)
        tau = math.exp(slope)
        c = math.exp(intercept)
    if finite:
        verdict = True
    else:
        half = len(ns) // 2
        stable = True
        if half >= 2 and len(ns) - half >= 2:
            s1 = np.polyfit(ns_a[:half], logs_a[:half], 1)[0]
            s2 = np.polyfit(ns_a[half:], logs_a[half:], 1)[0]
            stable = abs(s1 - s2) <= split_tol * max(abs(s1), abs(s2))
        verdict = bool(tau < 1.0 and stable)
    return TailFit(c=float(c), tau=float(tau), exponential=verdict, n_used=tuple(ns), finite_support=finite)


def is_aperiodic(spec):
    if not spec.cells:
        raise InputError("at least one cell required")
    return math.gcd(*[int(r) for r in spec.return_times]) == 1


@dataclass(frozen=True)
class InvarianceReport:
    tv: float
    samples: int
    bins: int
    sampling: str

    def passed(self, tol=0.01):
        return self.tv < tol


def lift_and_push_measure(spec, underlying_map, samples, bins=64, seed=0,
                          sampling="tower", n_max=40):
    """Compare the projected tower measure with its image under T.

    ``sampling='tower'`` draws cells proportionally to m_i R_i and a uniform
    level; ``sampling='cells'`` draws cells proportionally to m_i alone,
    dropping the return-time factor (a negative control, not invariant in
    general).
    """
    if sampling not in ("tower", "cells"):
        raise InputError("sampling must be 'tower' or 'cells'")
    if not fit_tail_rate(spec, n_max).exponential:
        raise ConfigError("lifted measure requires exponential tails")
    if any(c.interval is None for c in spec.cells):
        raise ConfigError("measure lifting needs concrete base intervals")
    rng = np.random.default_rng(seed)
    cells = spec.cells
    if sampling == "tower":
        w = np.array([float(c.weight) * c.return_time for c in cells])
        if not np.isfinite(w.sum()):
            raise ConfigError("sum of m_i R_i diverges")
    else:
        w = np.array([float(c.weight) for c in cells])
    w = w / w.sum()
    picks = rng.choice(len(cells), size=samples, p=w)
    u = rng.random(samples)
    v = rng.random(samples)
    a = np.array([float(c.interval[0]) for c in cells])[picks]
    b = np.array([float(c.interval[1]) for c in cells])[picks]
    r = np.array([c.return_time for c in cells])[picks]
    x = a + (b - a) * u
    x = np.where(x >= b, a, x)
    level = np.minimum((v * r).astype(np.int64), r - 1)
    y = x.copy()
    for l in range(int(level.max())):
        move = level > l
        y[move] = underlying_map(y[move])
    pushed = underlying_map(y)
    h0 = np.bincount(np.minimum((y * bins).astype(np.int64), bins - 1), minlength=bins)
    h1 = np.bincount(np.minimum((pushed * bins).astype(np.int64), bins - 1), minlength=bins)
    dist = 0.5 * np.abs(h0 - h1).sum() / samples
    return InvarianceReport(float(dist), samples, bins, sampling)


def doubling_tower(levels=64, exact=False):
    """Doubling-map tower on base [0, 1) with R_i = i + 1 and m_i = 2^-i."""
    cells = []
    one = Fraction(1) if exact else 1.0
    for i in range(1, levels + 1):
        lo = Fraction(1, 2 ** i) if exact else 2.0 ** -i
        hi = Fraction(1, 2 ** (i - 1)) if exact else 2.0 ** -(i - 1)
        cells.append(TowerCell(i, i + 1, one / 2 ** i, (lo, hi)))
    tail = one / 2 ** levels
    return TowerSpec(cells, tail, name="doubling")


def half_interval_doubling_tower(levels=64, exact=False):
    """Cells [2^-(i+1), 2^-i) of the half interval with R_i = i + 1, m_i = 2^-i.

    T^(i+1) maps each cell onto the whole circle rather than back into the
    base (0, 1/2), so the lifted measure is not T-invariant; kept as a
    counterexample and for the level arithmetic of small examples.
    """
    cells = []
    one = Fraction(1) if exact else 1.0
    for i in range(1, levels + 1):
        lo = Fraction(1, 2 ** (i + 1)) if exact else 2.0 ** -(i + 1)
        hi = Fraction(1, 2 ** i) if exact else 2.0 ** -i
        cells.append(TowerCell(i, i + 1, one / 2 ** i, (lo, hi)))
    return TowerSpec(cells, one / 2 ** levels, name="doubling-half")


def synthetic_tower(return_times, weights=None, name="synthetic"):
    """Cells without geometry, one per return time."""
    if weights is None:
        weights = [1.0 / len(return_times)] * len(return_times)
    cells = [TowerCell(i, int(r), w) for i, (r, w) in enumerate(zip(return_times, weights))]
    return TowerSpec(cells, 0.0, name=name)


def polynomial_tail_tower(cutoff=10_000, power=2.0):
    """Return times R_i = i with weights proportional to i^-power."""
    i = np.arange(1, cutoff + 1, dtype=float)
    w = i ** -power
    z = float(np.sum(w)) if power <= 1 else math.pi ** 2 / 6 if power == 2 else float(np.sum(w))
    w = w / z
    tail = max(0.0, 1.0 - float(np.sum(w)))
    cells = [TowerCell(int(k), int(k), float(m)) for k, m in zip(i, w)]
    return TowerSpec(cells, tail, name="polynomial")


def load_tower_spec(path):
    """Read lines ``cell <i> <R_i> <m_i> [<a> <b>]``; optional ``tail <mass>``."""
    cells, tail = [], 0.0
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "cell" and len(parts) in (4, 6):
                iv = (float(parts[4]), float(parts[5])) if len(parts) == 6 else None
                cells.append(TowerCell(int(parts[1]), int(parts[2]), float(parts[3]), iv))
            elif parts[0] == "tail" and len(parts) == 2:
                tail = float(parts[1])
            else:
                raise ValueError(line)
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: cannot parse {raw!r}") from exc
    return TowerSpec(cells, tail, name=Path(path).stem)


def dump_tower_spec(spec, path):
    lines = []
    for c in spec.cells:
        row = f"cell {c.index} {c.return_time} {float(c.weight)!r}"
        if c.interval is not None:
            row += f" {float(c.interval[0])!r} {float(c.interval[1])!r}"
        lines.append(row)
    lines.append(f"tail {float(spec.truncation_tail_mass)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_verdicts(rows, path):
    """Write ``check,value,threshold,pass`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "value", "threshold", "pass"])
        for check, value, threshold, ok in rows:
            w.writerow([check, repr(float(value)), repr(float(threshold)), "true" if ok else "false"])
