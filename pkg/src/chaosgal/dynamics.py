"""Chaotic data sources: hyperbolic torus automorphisms and the doubling map.

Float trajectories reduce mod 1 after every step.  Each system also has an
exact path over ``fractions.Fraction`` for rational inputs.

The doubling map needs care in floating point: ``2x mod 1`` is exact on
doubles, so a float orbit *is* the exact orbit of a dyadic rational and
collapses to 0 after at most 53 steps.  ``sample_trajectory`` therefore draws
the binary expansion of a Lebesgue-random point bit by bit and reports each
state truncated to 53 bits, which is the exact orbit of that point up to
2^-53 per state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InputError

EIG_TOL = 1e-9


def _int_det(m):
    """Determinant of a square integer matrix by fraction-free elimination."""
    a = [[int(v) for v in row] for row in m]
    n = len(a)
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if a[r][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _int_inverse(m, det):
    """Inverse of a unimodular integer matrix via the adjugate (Cramer's rule)."""
    n = len(m)
    if n == 1:
        return [[det]]
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[m[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            adj[j][i] = (-1) ** (i + j) * _int_det(minor)
    # det is +-1, so dividing by it is multiplying by it
    return [[v * det for v in row] for row in adj]


def _mod1(v):
    r = np.mod(v, 1.0)
    # np.mod can round a tiny negative up to exactly 1.0
    r[r >= 1.0] = 0.0
    return r


class TorusAutomorphism:
    """The map [x] -> [A x] on the d-torus for a symmetric unimodular A."""

    def __init__(self, matrix, name=None):
        a = np.asarray(matrix)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InputError("matrix must be square with d >= 1")
        if not np.all(np.equal(np.mod(a, 1), 0)):
            raise InputError("matrix entries must be integers")
        rows = [[int(v) for v in row] for row in a.tolist()]
        det = _int_det(rows)
        if abs(det) != 1:
            raise InputError(f"|det A| must be 1, got {det}")
        if any(rows[i][j] != rows[j][i] for i in range(len(rows)) for j in range(len(rows))):
            raise InputError("matrix must be symmetric")
        eig = np.linalg.eigvalsh(np.array(rows, dtype=float))
        if np.any(np.abs(np.abs(eig) - 1.0) <= EIG_TOL):
            raise InputError("matrix has an eigenvalue of modulus 1")
        self.rows = tuple(tuple(r) for r in rows)
        self.matrix = np.array(rows, dtype=np.int64)
        self.det = det
        inv = _int_inverse(rows, det)
        self.inverse_rows = tuple(tuple(r) for r in inv)
        self.inverse_matrix = np.array(inv, dtype=np.int64)
        self.eigenvalues = eig
        self.name = name or "torus" + "".join(str(v) for r in rows for v in r)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def lyapunov_exponent(self):
        """Largest Lyapunov exponent, log of the spectral radius."""
        return float(np.log(np.max(np.abs(self.eigenvalues))))

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise InputError(f"point dimension {x.shape[-1]} does not match system dimension {self.dim}")
        return x

    def step(self, x):
        """(A x) mod 1 for a point of shape (d,) or a batch of shape (N, d)."""
        x = self._check(x)
        return _mod1(x @ self.matrix.T.astype(float))

    def step_inverse(self, x):
        x = self._check(x)
        return _mod1(x @ self.inverse_matrix.T.astype(float))

    def step_exact(self, x):
        """Exact step on a sequence of Fractions (or ints)."""
        if len(x) != self.dim:
            raise InputError("dimension mismatch")
        x = [Fraction(v) for v in x]
        out = []
        for row in self.rows:
            s = sum((c * v for c, v in zip(row, x)), Fraction(0))
            out.append(s - math.floor(s))
        return tuple(out)

    def trajectory(self, x0, n):
        x = self._check(x0)
        if x.ndim != 1:
            raise InputError("trajectory takes a single initial point")
        out = np.empty((n, self.dim))
        out[0] = x
        a = self.matrix.T.astype(float)
        for i in range(1, n):
            out[i] = _mod1(out[i - 1] @ a)
        return out

    def batch_trajectories(self, x0, n):
        """Iterate R initial points jointly; returns shape (n, R, d)."""
        x = self._check(x0)
        out = np.empty((n,) + x.shape)
        out[0] = x
        a = self.matrix.T.astype(float)
        for i in range(1, n):
            out[i] = _mod1(out[i - 1] @ a)
        return out

    def sample_initial(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.random(shape)

    def sample_trajectory(self, n, rng):
        return self.trajectory(self.sample_initial(rng), n)


class DoublingMap:
    """T(x) = 2x mod 1 on the circle."""

    dim = 1
    name = "doubling"

    def step(self, x):
        return doubling_step(x)

    def step_exact(self, x):
        x = Fraction(x)
        y = 2 * x
        return y - math.floor(y)

    def trajectory(self, x0, n):
        x = np.asarray(x0, dtype=float).reshape(-1)
        if x.shape != (1,):
            raise InputError("doubling map states are scalars")
        out = np.empty((n, 1))
        out[0] = x
        for i in range(1, n):
            out[i] = doubling_step(out[i - 1])
        return out

    def sample_initial(self, rng, size=None):
        shape = (1,) if size is None else (size, 1)
        return rng.random(shape)

    def sample_trajectory(self, n, rng):
        """Orbit of a Lebesgue-random point, each state truncated to 53 bits."""
        bits = rng.integers(0, 2, size=n + 52, dtype=np.int8).astype(float)
        window = np.lib.stride_tricks.sliding_window_view(bits, 53)
        weights = np.ldexp(1.0, -np.arange(1, 54))
        # each state is a subset sum of distinct powers of two: exact in float
        return (window @ weights)[:, None]


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    system_id: str
    seed: int | None
    n: int


def cat_map():
    return TorusAutomorphism([[2, 1], [1, 1]], name="cat")


def hyperbolic_3d():
    """Symmetric unimodular hyperbolic 3x3 example."""
    return TorusAutomorphism([[2, 0, 1], [0, 1, 1], [1, 1, 2]], name="torus3d")


def step(sys, x):
    return sys.step(x)


def doubling_step(x):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    if np.any(x < 0) or np.any(x >= 1):
        raise InputError("doubling_step takes points in [0, 1)")
    y = 2.0 * x
    y = np.where(y >= 1.0, y - 1.0, y)
    return float(y) if scalar else y


def torus_distance(x, y):
    """Flat-torus distance: the minimum of |x - y + p| over integer shifts p."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1:] != y.shape[-1:] and not (x.ndim == 0 and y.ndim == 0):
        raise InputError("dimension mismatch")
    delta = np.abs(x - y)
    delta = np.minimum(delta, 1.0 - delta)
    if delta.ndim == 0:
        return float(delta)
    return np.sqrt(np.sum(delta * delta, axis=-1))


def generate_trajectory(sys, x0, n, seed=None):
    """Trajectory of length n starting at ``x0``; float arithmetic, mod 1 per step."""
    if n < 1:
        raise InputError("trajectory length must be at least 1")
    states = sys.trajectory(x0, int(n))
    return Trajectory(states=states, system_id=sys.name, seed=seed, n=int(n))


def generate_trajectory_exact(sys, x0, n):
    """Exact rational trajectory for Fraction-valued initial conditions."""
    if n < 1:
        raise InputError("trajectory length must be at least 1")
    if isinstance(sys, DoublingMap):
        out = [Fraction(x0)]
    else:
        out = [tuple(Fraction(v) for v in x0)]
    for _ in range(n - 1):
        out.append(sys.step_exact(out[-1]))
    return out


def sample_trajectory(sys, n, seed):
    """Trajectory started from a Lebesgue-distributed initial point."""
    if n < 1:
        raise InputError("trajectory length must be at least 1")
    rng = np.random.default_rng(seed)
    states = sys.sample_trajectory(int(n), rng)
    return Trajectory(states=states, system_id=sys.name, seed=seed, n=int(n))


def make_system(name):
    key = name.strip().lower()
    if key in ("cat", "cat_map"):
        return cat_map()
    if key in ("doubling", "doubling_map"):
        return DoublingMap()
    if key in ("torus3d", "3d"):
        return hyperbolic_3d()
    raise InputError(f"unknown system {name!r}")
