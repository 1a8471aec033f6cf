"""Subgaussian variance proxies and their Monte Carlo checks.

K(y_1, .., y_n) is separately bounded (coefficients c_i) or separately
Lipschitz (coefficients L_i).  For i.i.d. inputs the bounded-differences
inequality gives the variance proxy (1/4) sum c_i^2; for trajectories of a
system with a Young tower the proxy is C sum L_i^2 with an unknown system
constant C, which picks up a factor L^2 when K is composed with an
L-Lipschitz observable.  Tail bounds are exp(-t^2 / (2 sigma^2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DoublingMap, TorusAutomorphism, _mod1, torus_distance
from .errors import InputError


def mcdiarmid_bound(c):
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise InputError("coefficients must be non-negative")
    return float(0.25 * np.sum(c * c))


def chazottes_gouezel_bound(L, C_sys, L_obs=1.0):
    L = np.asarray(L, dtype=float)
    if np.any(L < 0):
        raise InputError("coefficients must be non-negative")
    if not C_sys > 0:
        raise InputError("system constant must be positive")
    return float(C_sys * L_obs ** 2 * np.sum(L * L))


def tail_bound(t, variance_proxy):
    t = np.asarray(t, dtype=float)
    if variance_proxy <= 0:
        return np.where(t > 0, 0.0, 1.0)
    return np.exp(-t * t / (2.0 * variance_proxy))


def implied_tail_exponent(n, B, C_sys, L_obs, C1):
    """Tail exponent per t^2 for K with coefficients C1 / (B n): equals gamma3_hat * n."""
    proxy = chazottes_gouezel_bound(np.full(n, C1 / (B * n)), C_sys, L_obs)
    return 1.0 / (2.0 * proxy)


# ----------------------------------------------------------------------------
# observables


@dataclass
class SeparatelyLipschitzObservable:
    """K on n-tuples with declared per-coordinate coefficients.

    ``evaluator`` maps an array (R, n, d) to R values.  With ``bounded`` the
    coefficients are c_i bounds on coordinate changes; otherwise L_i with
    respect to ``metric`` ("cube" Euclidean or "torus").
    """

    evaluator: object
    coefficients: np.ndarray
    metric: str = "cube"
    bounded: bool = False
    dim: int = 1

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if np.any(self.coefficients < 0):
            raise InputError("coefficients must be non-negative")
        if self.metric not in ("cube", "torus"):
            raise InputError("metric must be 'cube' or 'torus'")

    @property
    def n(self):
        return self.coefficients.size

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim == 2:
            return float(self.evaluator(y[None])[0])
        return np.asarray(self.evaluator(y), dtype=float)

    def distance(self, a, b):
        if self.metric == "torus":
            return torus_distance(a, b)
        return np.linalg.norm(a - b, axis=-1)

    def validate(self, trials=1000, seed=0, sampler=None, adversarial=True):
        """Check the declared coefficients on random single-coordinate changes.

        Half the trials use uniformly random replacements, half (with
        ``adversarial``) tiny or antipodal moves where Lipschitz ratios peak.
        Returns the largest observed ratio |dK| / (L_i d) (or |dK| / c_i).
        """
        rng = np.random.default_rng(seed)
        n, d = self.n, self.dim
        sampler = sampler or (lambda size: rng.random(size))
        y = sampler((trials, n, d))
        i = rng.integers(0, n, trials)
        y2 = y.copy()
        new = sampler((trials, d))
        if adversarial:
            half = trials // 2
            old = y[np.arange(half), i[:half]]
            step = 10.0 ** rng.uniform(-6, -0.3, (half, 1)) * rng.choice([-1, 1], (half, d))
            cand = old + step
            if self.metric == "torus":
                cand = _mod1(cand)
            else:
                cand = np.clip(cand, 0.0, 1.0)
            new[:half] = cand
        y2[np.arange(trials), i] = new
        dk = np.abs(self.evaluator(y) - self.evaluator(y2))
        c = self.coefficients[i]
        if self.bounded:
            ratio = np.where(c > 0, dk / np.where(c > 0, c, 1), np.where(dk > 0, np.inf, 0))
        else:
            dist = self.distance(y[np.arange(trials), i], new)
            den = c * dist
            ratio = np.where(den > 0, dk / np.where(den > 0, den, 1), np.where(dk > 0, np.inf, 0))
        return float(np.max(ratio))


def birkhoff_observable(f, lip, n, metric="torus", dim=2):
    """(1/n) sum f(y_i) with coefficients Lip(f)/n."""
    return SeparatelyLipschitzObservable(lambda y: np.mean(f(y.reshape(-1, y.shape[-1])).reshape(y.shape[:-1]), axis=-1),
                                         np.full(n, lip / n), metric=metric, dim=dim)


def sample_mean_observable(n, dim=1):
    """Sample mean of points in [0,1]: bounded differences 1/n."""
    return SeparatelyLipschitzObservable(lambda y: y[..., 0].mean(axis=-1), np.full(n, 1.0 / n),
                                         bounded=True, dim=dim)


# ----------------------------------------------------------------------------
# data sources


class IIDSource:
    """Independent samples from ``sampler(rng, shape)`` (default uniform)."""

    def __init__(self, dim=1, sampler=None, name="iid"):
        self.dim = dim
        self.sampler = sampler or (lambda rng, shape: rng.random(shape))
        self.name = name

    def samples(self, n, replicas, seed):
        rng = np.random.default_rng(seed)
        return self.sampler(rng, (replicas, n, self.dim))

    def birkhoff_means(self, f, checkpoints, replicas, seed, chunk=1024):
        checkpoints = sorted(int(c) for c in checkpoints)
        rng = np.random.default_rng(seed)
        out = np.empty((len(checkpoints), replicas))
        total = np.zeros(replicas)
        done = 0
        for k, c in enumerate(checkpoints):
            while done < c:
                m = min(chunk, c - done)
                x = self.sampler(rng, (m, replicas, self.dim))
                total += f(x.reshape(-1, self.dim)).reshape(m, replicas).sum(axis=0)
                done += m
            out[k] = total / c
        return out


class TrajectorySource:
    """Replica trajectories of a system from independent Lebesgue initial points."""

    def __init__(self, system):
        self.system = system
        self.dim = system.dim
        self.name = getattr(system, "name", "system")

    def _initial(self, rng, replicas):
        return self.system.sample_initial(rng, replicas)

    def samples(self, n, replicas, seed):
        rng = np.random.default_rng(seed)
        if isinstance(self.system, DoublingMap):
            return np.stack([self.system.sample_trajectory(n, rng) for _ in range(replicas)])
        x = self._initial(rng, replicas)
        return np.transpose(self.system.batch_trajectories(x, n), (1, 0, 2))

    def birkhoff_means(self, f, checkpoints, replicas, seed):
        """Partial Birkhoff means at each checkpoint without storing orbits."""
        checkpoints = sorted(int(c) for c in checkpoints)
        rng = np.random.default_rng(seed)
        if isinstance(self.system, DoublingMap):
            n = checkpoints[-1]
            out = np.empty((len(checkpoints), replicas))
            for r in range(replicas):
                v = np.cumsum(f(self.system.sample_trajectory(n, rng)))
                out[:, r] = [v[c - 1] / c for c in checkpoints]
            return out
        a = self.system.matrix.T.astype(float)
        x = self._initial(rng, replicas)
        out = np.empty((len(checkpoints), replicas))
        total = np.zeros(replicas)
        k = 0
        for i in range(1, checkpoints[-1] + 1):
            total += f(x)
            if i == checkpoints[k]:
                out[k] = total / i
                k += 1
            x = _mod1(x @ a)
        return out


# ----------------------------------------------------------------------------
# tail checks


@dataclass
class SubgaussianEstimate:
    variance_proxy_bound: float
    n_replicas: int
    t: np.ndarray
    empirical_upper: np.ndarray
    empirical_lower: np.ndarray
    bound: np.ndarray
    passed: np.ndarray = field(init=False)

    def __post_init__(self):
        self.passed = (self.empirical_upper <= self.bound) & (self.empirical_lower <= self.bound)

    @property
    def all_passed(self):
        return bool(np.all(self.passed))

    def rows(self):
        """(t, empirical_tail, bound_tail, pass); the empirical tail is the larger side."""
        emp = np.maximum(self.empirical_upper, self.empirical_lower)
        return [(float(t), float(e), float(b), bool(p))
                for t, e, b, p in zip(self.t, emp, self.bound, self.passed)]


def default_t_grid(sigma, points=20):
    return np.linspace(0.5 * sigma, 4.0 * sigma, points)


def tails(values, center, t):
    dev = np.asarray(values, dtype=float) - center
    up = np.array([np.mean(dev >= s) for s in t])
    lo = np.array([np.mean(-dev >= s) for s in t])
    return up, lo


def empirical_tail_check(obs, data_source, replicas, t_grid=None, variance_proxy=None,
                         center=None, seed=0, values=None):
    """Compare P(K - EK >= t) and P(EK - K >= t) with exp(-t^2 / (2 sigma^2)).

    ``variance_proxy`` defaults to the bounded-differences proxy for bounded
    observables; for Lipschitz observables it must be given.  ``center``
    defaults to the replica mean.
    """
    if replicas < 100:
        raise InputError("need at least 100 replicas")
    if values is None:
        y = data_source.samples(obs.n, replicas, seed)
        values = obs(y)
    values = np.asarray(values, dtype=float)
    if variance_proxy is None:
        if not obs.bounded:
            raise InputError("variance proxy required for Lipschitz observables")
        variance_proxy = mcdiarmid_bound(obs.coefficients)
    mu = float(values.mean()) if center is None else float(center)
    if t_grid is None:
        s = float(values.std())
        t_grid = default_t_grid(s if s > 0 else math.sqrt(variance_proxy) or 1.0)
    t = np.asarray(t_grid, dtype=float)
    up, lo = tails(values, mu, t)
    return SubgaussianEstimate(float(variance_proxy), int(values.size), t, up, lo,
                               tail_bound(t, variance_proxy))


def fit_variance_constant(values, n, lip, center, t_grid=None, min_count=1):
    """Smallest C with empirical two-sided tails <= exp(-t^2 n / (2 C lip^2)).

    Only t with at least ``min_count`` exceedances enter; the default keeps
    every non-empty tail, so the fitted C dominates all of them.
    """
    values = np.asarray(values, dtype=float)
    if t_grid is None:
        t_grid = default_t_grid(float(values.std()))
    up, lo = tails(values, center, t_grid)
    best = 0.0
    used = 0
    for t, p in zip(t_grid, np.maximum(up, lo)):
        if p * values.size < min_count or p <= 0:
            continue
        if p >= 1:
            return math.inf
        best = max(best, t * t * n / (2.0 * lip * lip * -math.log(p)))
        used += 1
    return float(best) if used else math.nan


@dataclass
class ConstantFit:
    ns: list
    C_raw: list
    C_normalized: list
    L_obs: float
    reference: int

    def ratios(self):
        ref = self.C_raw[self.ns.index(self.reference)]
        return [c / ref for c in self.C_raw]

    def stable(self, tol=0.2):
        return all(abs(r - 1.0) <= tol for r in self.ratios())


def fit_cg_constant(data_source, f, lip, ns, replicas, seed=0, L_obs=1.0, center=0.0,
                    reference=None, min_count=1):
    """Fit the system constant from Birkhoff-mean tails at each n.

    ``C_raw`` absorbs the observable factor L_obs^2; ``C_normalized`` divides
    it out.  ``center`` is the exact mean of f under the invariant measure.
    """
    ns = [int(n) for n in ns]
    raw = []
    for k, n in enumerate(ns):
        means = data_source.birkhoff_means(f, [n], replicas, seed=[seed, k])[0]
        raw.append(fit_variance_constant(means, n, lip, center, min_count=min_count))
    ref = reference if reference is not None else ns[len(ns) // 2]
    return ConstantFit(ns, raw, [c / L_obs ** 2 for c in raw], L_obs, ref)


@dataclass
class ScalingReport:
    ns: list
    variances: list
    slope: float
    degenerate: bool


def birkhoff_variance_scaling(system, f, n_grid, replicas, seed=0):
    """Slope of log Var[(1/n) sum f(Y_i)] against log n.

    ``system`` is a dynamical system or ``None`` for i.i.d. uniform data.
    """
    n_grid = sorted(int(n) for n in n_grid)
    if len(n_grid) < 4:
        raise InputError("need at least 4 grid points")
    if replicas < 500:
        raise InputError("need at least 500 replicas")
    src = IIDSource(1 if system is None else system.dim) if system is None else TrajectorySource(system)
    means = src.birkhoff_means(f, n_grid, replicas, seed)
    var = means.var(axis=1, ddof=1)
    if np.any(var <= 1e-30):
        return ScalingReport(n_grid, var.tolist(), math.nan, True)
    slope = float(np.polyfit(np.log(n_grid), np.log(var), 1)[0])
    return ScalingReport(n_grid, var.tolist(), slope, False)


def write_tail_csv(est, path):
    lines = ["t,empirical_tail,bound_tail,pass"]
    for t, e, b, p in est.rows():
        lines.append(f"{t!r},{e!r},{b!r},{int(p)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
