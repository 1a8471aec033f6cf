"""Covering numbers: explicit nets of Hoelder balls, finite metric spaces,
Dudley entropy integrals and the rate constants built from them.

Balls use ||f|| = ||f||_{C^k} + max_beta [D_beta f]_alpha with the C^k part a
maximum over derivative orders; for the Lipschitz ball (k = 0, alpha = 1) this
is sup|f| + Lip(f) <= r.

Sup-norm nets (d = 1) are piecewise-linear interpolants of quantized values
on a mesh of pitch h = eps / r with value quantum eps: the interpolation error
of an r-Lipschitz function is at most r h / 2 and rounding adds eps / 2.
Consecutive quantized values of a ball member differ by at most two quanta, so
the net consists of the level paths with jumps in {-2, .., 2}.  Its size is
counted by dynamic programming and the nearest member to a piecewise-linear
probe is found exactly by a minimax Viterbi pass over the mesh.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, InputError

JUMP = 2


# ----------------------------------------------------------------------------
# sup-norm nets


@dataclass(frozen=True)
class Ball:
    d: int = 1
    k: int = 0
    alpha: float = 1.0
    radius: float = 1.0

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InputError("net construction supports d = 1 and d = 2")
        if not (0 < self.alpha <= 1) or self.radius <= 0 or self.k < 0:
            raise InputError("invalid ball parameters")


class SupNet:
    """eps-net in sup distance of a Lipschitz ball (see module docstring)."""

    def __init__(self, ball, epsilon):
        if epsilon <= 0:
            raise InputError("epsilon must be positive")
        if ball.k != 0:
            raise InputError("sup nets are built for k = 0; use build_c1_net for one derivative")
        self.ball = ball
        self.epsilon = float(epsilon)
        r = ball.radius
        L = r  # Lipschitz constant is at most the norm
        self.trivial = epsilon >= r
        if self.trivial:
            # sup|f| <= r <= eps: the zero function covers the ball
            self.M, self.J, self.delta = 1, 0, epsilon
            self.size = 1
            return
        self.delta = self.epsilon
        if ball.alpha < 1:
            if ball.d != 1:
                raise InputError("d = 2 nets are built for alpha = 1")
            # the interpolant lies between endpoint values: error <= r h^alpha <= eps/2
            h = (self.epsilon / (2 * r)) ** (1.0 / ball.alpha)
        else:
            h = self.epsilon / L
        if ball.d == 1:
            self.M = int(math.ceil(1.0 / h - 1e-12))
        else:
            # piecewise constant on cells of side h / sqrt(2): error <= eps / 2
            self.M = int(math.ceil(math.sqrt(2.0) / h - 1e-12))
        self.J = int(math.floor(r / self.delta + 0.5))
        self.size = self._count()

    @property
    def levels(self):
        return 2 * self.J + 1

    @property
    def log_size(self):
        if self.size == 1:
            return 0.0
        return _log_int(self.size)

    def _count(self):
        n_lev = self.levels
        if self.ball.d == 2:
            return n_lev ** (self.M * self.M)
        ways = [1] * n_lev
        for _ in range(self.M):
            new = [0] * n_lev
            for j in range(n_lev):
                lo, hi = max(0, j - JUMP), min(n_lev - 1, j + JUMP)
                new[j] = sum(ways[lo:hi + 1])
            ways = new
        return sum(ways)

    def mesh(self):
        return np.arange(self.M + 1) / self.M

    def nearest(self, probe):
        """Exact smallest sup distance from a piecewise-linear probe to the net."""
        if self.trivial:
            return probe.sup_norm(), None
        if self.ball.d == 2:
            return self._nearest_2d(probe)
        return _viterbi(self, probe)

    def members(self):
        """Enumerate all members as level tuples (small nets only)."""
        if self.trivial:
            yield (0,)
            return
        if self.size > 200_000:
            raise InputError("net too large to enumerate")
        lev = range(-self.J, self.J + 1)
        for path in itertools.product(lev, repeat=self.M + 1):
            if all(abs(a - b) <= JUMP for a, b in zip(path, path[1:])):
                yield path

    def distance_to_member(self, probe, path):
        pts = np.union1d(self.mesh(), probe.knots)
        member = np.interp(pts, self.mesh(), np.asarray(path, dtype=float) * self.delta)
        return float(np.max(np.abs(probe(pts) - member)))

    def _nearest_2d(self, probe):
        lo, hi = probe.cell_range(self.M)
        mid = 0.5 * (lo + hi)
        j = np.clip(np.round(mid / self.delta), -self.J, self.J)
        v = j * self.delta
        return float(np.max(np.maximum(hi - v, v - lo))), j.astype(int)


def _log_int(n):
    # log of a possibly huge Python int
    b = n.bit_length()
    if b < 1000:
        return math.log(n)
    shift = b - 60
    return math.log(n >> shift) + shift * math.log(2.0)


def _viterbi(net, probe):
    mesh = net.mesh()
    pts_all = np.union1d(mesh, probe.knots)
    vals_all = probe(pts_all)
    lev = np.arange(-net.J, net.J + 1) * net.delta
    jumps = np.arange(-JUMP, JUMP + 1)
    n_lev = lev.size
    cost = np.zeros(n_lev)
    back = []
    for i in range(net.M):
        a, b = mesh[i], mesh[i + 1]
        sel = (pts_all >= a) & (pts_all <= b)
        p, fv = pts_all[sel], vals_all[sel]
        s = (p - a) / (b - a)
        # line from level j to level j + jump evaluated at the segment points
        start = lev[:, None, None]
        line = start + (jumps * net.delta)[None, :, None] * s[None, None, :]
        seg = np.max(np.abs(fv[None, None, :] - line), axis=2)  # (n_lev, 5)
        new = np.full(n_lev, np.inf)
        arg = np.zeros(n_lev, dtype=int)
        for t, jmp in enumerate(jumps):
            src = np.arange(n_lev)
            dst = src + jmp
            ok = (dst >= 0) & (dst < n_lev)
            c = np.maximum(cost[src[ok]], seg[src[ok], t])
            better = c < new[dst[ok]]
            idx = dst[ok][better]
            new[idx] = c[better]
            arg[idx] = src[ok][better]
        back.append(arg)
        cost = new
    end = int(np.argmin(cost))
    path = [end]
    for arg in reversed(back):
        path.append(int(arg[path[-1]]))
    path = [int(j) - net.J for j in reversed(path)]
    return float(cost[end]), tuple(path)


def build_sup_net(ball, epsilon):
    """Sup-norm eps-net of the ball; returns a SupNet (``.size`` is its cardinality)."""
    if not isinstance(ball, Ball):
        ball = Ball(*ball)
    return SupNet(ball, epsilon)


# ----------------------------------------------------------------------------
# probes


class PiecewiseLinear:
    """Continuous piecewise-linear function on [0,1] given by knots and values."""

    def __init__(self, knots, values):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)

    def __call__(self, x):
        return np.interp(x, self.knots, self.values)

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def lipschitz(self):
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.knots))))

    def integral_at(self, x):
        """int_0^x of the function (exact, piecewise quadratic)."""
        k, v = self.knots, self.values
        seg = 0.5 * (v[1:] + v[:-1]) * np.diff(k)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(k, x, side="right") - 1, 0, k.size - 2)
        dx = x - k[i]
        slope = (v[i + 1] - v[i]) / (k[i + 1] - k[i])
        return cum[i] + v[i] * dx + 0.5 * slope * dx * dx


class SeparableProbe:
    """f(x1, x2) = b + g1(x1) + g2(x2) with piecewise-linear g1, g2."""

    def __init__(self, g1, g2, b=0.0):
        self.g1, self.g2, self.b = g1, g2, b

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.b + self.g1(x[:, 0]) + self.g2(x[:, 1])

    def sup_norm(self):
        return abs(self.b) + self.g1.sup_norm() + self.g2.sup_norm()

    def cell_range(self, M):
        """Exact min and max of f over each cell of an M x M grid."""
        lo1, hi1 = _pl_cell_range(self.g1, M)
        lo2, hi2 = _pl_cell_range(self.g2, M)
        return self.b + lo1[:, None] + lo2[None, :], self.b + hi1[:, None] + hi2[None, :]


def _pl_cell_range(g, M):
    edges = np.arange(M + 1) / M
    lo = np.empty(M)
    hi = np.empty(M)
    for i in range(M):
        p = np.union1d([edges[i], edges[i + 1]], g.knots[(g.knots > edges[i]) & (g.knots < edges[i + 1])])
        v = g(p)
        lo[i], hi[i] = v.min(), v.max()
    return lo, hi


def random_lipschitz_probe(rng, radius=1.0, max_knots=40):
    """Random member of {sup|f| + Lip(f) <= radius}, built by slope capping and rescaling."""
    K = int(rng.integers(1, max_knots))
    knots = np.sort(np.concatenate([[0.0, 1.0], rng.random(K - 1)]))
    kind = rng.integers(0, 3)
    if kind == 0:
        slopes = rng.uniform(-1.0, 1.0, K)
    elif kind == 1:
        slopes = np.where(np.arange(K) % 2 == 0, 1.0, -1.0)  # zigzag
    else:
        slopes = np.clip(rng.standard_normal(K), -1.0, 1.0)
    vals = np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
    vals -= 0.5 * (vals.max() + vals.min())
    lip = float(np.max(np.abs(slopes))) if K else 0.0
    sup = float(np.max(np.abs(vals)))
    budget = radius * rng.uniform(0.6, 1.0)
    scale = budget / (lip + sup) if lip + sup > 0 else 0.0
    vals = vals * scale
    spare = radius - scale * (lip + sup)
    vals = vals + rng.uniform(-spare, spare)
    return PiecewiseLinear(knots, vals)


def random_separable_probe(rng, radius=1.0):
    g1 = random_lipschitz_probe(rng, 1.0)
    g2 = random_lipschitz_probe(rng, 1.0)
    lip = math.hypot(g1.lipschitz(), g2.lipschitz())
    sup = g1.sup_norm() + g2.sup_norm()
    s = radius * rng.uniform(0.6, 1.0) / (lip + sup)
    g1 = PiecewiseLinear(g1.knots, g1.values * s)
    g2 = PiecewiseLinear(g2.knots, g2.values * s)
    return SeparableProbe(g1, g2, 0.0)


@dataclass
class CoveringReport:
    epsilon: float
    net_size: int
    log_size: float
    log_bound: float
    verified_fraction: float
    max_distance: float


def verify_sup_net(net, probes):
    dists = np.array([net.nearest(p)[0] for p in probes])
    return float(np.mean(dists <= net.epsilon + 1e-12)), float(dists.max())


def sup_net_reports(ball, epsilons, probes=1000, seed=0, gamma=None):
    """Build, verify and bound nets over a list of eps values."""
    rng = np.random.default_rng(seed)
    if not isinstance(ball, Ball):
        ball = Ball(*ball)
    make = random_lipschitz_probe if ball.d == 1 else random_separable_probe
    pr = [make(rng, ball.radius) for _ in range(probes)]
    s = ball.d / (ball.alpha + ball.k)
    nets = [build_sup_net(ball, e) for e in epsilons]
    if gamma is None:
        gamma = max(n.log_size * n.epsilon ** s for n in nets)
    out = []
    for net in nets:
        frac, dmax = verify_sup_net(net, pr)
        out.append(CoveringReport(net.epsilon, net.size, net.log_size, gamma * net.epsilon ** (-s),
                                  frac, dmax))
    return out, gamma


def fit_growth_exponent(reports):
    """Slope of log log N against log(1/eps) over the non-trivial nets."""
    pts = [(math.log(1.0 / r.epsilon), math.log(r.log_size)) for r in reports if r.log_size > 0]
    if len(pts) < 2:
        raise InputError("need two non-trivial nets to fit an exponent")
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


# ----------------------------------------------------------------------------
# C^1 nets


class C1Net:
    """Antiderivative net for the ball ||F||_{C^{1,1}} <= r on [0,1].

    J is a sup-norm eps/8-net of the derivative ball and C holds
    floor(4r/eps) evenly spaced constants in [-r, r] (covering radius at most
    eps/2, so |C| <= 4r/eps); members are G = c + int_0^x g for (c, g) in
    C x J, with C^1 distance at most eps/2 + eps/8.
    """

    def __init__(self, ball, epsilon):
        if ball.d != 1:
            raise InputError("C1 nets are built for d = 1")
        if ball.k != 1:
            raise InputError("C1 nets need one derivative (k = 1)")
        self.ball = ball
        self.epsilon = float(epsilon)
        self.J = SupNet(Ball(1, 0, ball.alpha, ball.radius), epsilon / 8.0)
        r = ball.radius
        count = max(1, int(math.floor(4.0 * r / epsilon + 1e-12)))
        if count == 1:
            self.constants = np.array([0.0])
        else:
            h = 2.0 * r / count
            self.constants = -r + h / 2.0 + h * np.arange(count)
        self.size = count * self.J.size

    @property
    def log_size(self):
        return 0.0 if self.size == 1 else _log_int(self.size)

    def nearest(self, F):
        """Certified C^1 distance from F = (value at 0, derivative probe) to the net."""
        F0, dF = F
        c = self.constants[np.argmin(np.abs(self.constants - F0))]
        if self.J.trivial:
            dg = dF.sup_norm()
        else:
            dg, _ = self.J.nearest(dF)
        return max(abs(F0 - c) + dg, dg)


def build_c1_net(ball, epsilon):
    if not isinstance(ball, Ball):
        ball = Ball(*ball)
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    return C1Net(ball, epsilon)


def random_c11_probe(rng, radius=1.0):
    """(F(0), F') for a random F with max(sup|F|, sup|F'|) + Lip(F') <= radius."""
    g = random_lipschitz_probe(rng, radius * rng.uniform(0.5, 1.0))
    s, l = g.sup_norm(), g.lipschitz()
    spare = max(radius - s - l, 0.0)
    c = rng.uniform(-spare, spare)
    return c, g


def verify_c1_net(net, probes):
    d = np.array([net.nearest(p) for p in probes])
    return float(np.mean(d <= net.epsilon + 1e-12)), float(d.max())


# ----------------------------------------------------------------------------
# finite metric spaces


def random_metric_space(rng, n):
    """Random finite metric: Euclidean points or a shortest-path graph metric."""
    if rng.random() < 0.5:
        pts = rng.random((n, 2))
        return np.linalg.norm(pts[:, None] - pts[None], axis=2)
    w = rng.uniform(0.1, 1.0, (n, n))
    w = np.minimum(w, w.T)
    mask = rng.random((n, n)) < 0.5
    mask = mask | mask.T
    D = np.where(mask, w, np.inf)
    np.fill_diagonal(D, 0.0)
    # ring edges keep the graph connected
    for i in range(n):
        j = (i + 1) % n
        D[i, j] = D[j, i] = min(D[i, j], w[i, j])
    for k in range(n):
        D = np.minimum(D, D[:, k:k + 1] + D[k:k + 1, :])
    return D


def covering_number(D, idx, epsilon):
    """Exact internal covering number of the points ``idx`` (exhaustive search)."""
    idx = list(idx)
    m = len(idx)
    if m == 0:
        return 0
    full = (1 << m) - 1
    masks = []
    for a in idx:
        mk = 0
        for t, b in enumerate(idx):
            if D[a, b] <= epsilon:
                mk |= 1 << t
        masks.append(mk)
    for size in range(1, m + 1):
        for comb in itertools.combinations(range(m), size):
            acc = 0
            for c in comb:
                acc |= masks[c]
            if acc == full:
                return size
    return m


def greedy_cover(D, idx, epsilon):
    idx = list(idx)
    left = set(idx)
    count = 0
    while left:
        best = max(idx, key=lambda a: (sum(1 for b in left if D[a, b] <= epsilon), -a))
        left -= {b for b in left if D[best, b] <= epsilon}
        count += 1
    return count


@dataclass
class CoveringCheck:
    cases: int
    violations: int
    greedy_violations: int
    rows: list


def covering_subset_inequality_check(spaces=30, epsilons=(0.1, 0.2, 0.35, 0.5), seed=0,
                                     max_points=12):
    """N(T', eps) <= N(T, eps/2) for random subsets T' of random finite T."""
    rng = np.random.default_rng(seed)
    rows = []
    bad = gbad = 0
    for s in range(spaces):
        n = int(rng.integers(2, max_points + 1))
        D = random_metric_space(rng, n)
        sub = sorted(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False).tolist())
        for e in epsilons:
            left = covering_number(D, sub, e)
            right = covering_number(D, range(n), e / 2.0)
            greedy = greedy_cover(D, range(n), e / 2.0)
            ok = left <= right
            gok = greedy <= right * (1.0 + math.log(n))
            bad += not ok
            gbad += not gok
            rows.append((s, n, len(sub), e, left, right, greedy, ok))
    return CoveringCheck(len(rows), bad, gbad, rows)


# ----------------------------------------------------------------------------
# Dudley integral and rate constants


class DivergentIntegralError(InputError):
    pass


def dudley_integral(gamma, s, delta):
    """int_0^delta sqrt(gamma eps^{-s}) d eps = sqrt(gamma) delta^{1-s/2} / (1 - s/2)."""
    if s >= 2:
        raise DivergentIntegralError(
            "entropy exponent s >= 2 makes the integral diverge; the high-regularity "
            "condition k > 2 - alpha + d/2 is violated")
    if gamma < 0 or delta < 0:
        raise InputError("gamma and delta must be non-negative")
    if gamma == 0 or delta == 0:
        return 0.0
    return math.sqrt(gamma) * delta ** (1.0 - s / 2.0) / (1.0 - s / 2.0)


def dudley_integral_numeric(gamma, s, delta):
    """Adaptive quadrature with the algebraic endpoint weight (QUADPACK QAWS)."""
    if s >= 2:
        raise DivergentIntegralError("entropy exponent s >= 2 makes the integral diverge")
    if gamma == 0 or delta == 0:
        return 0.0
    val, _ = quad(lambda e: 1.0, 0.0, delta, weight="alg", wvar=(-s / 2.0, 0.0),
                  epsabs=1e-14, epsrel=1e-13)
    return math.sqrt(gamma) * val


@dataclass
class RateConstants:
    gamma1_hat: float
    gamma2_hat: float
    gamma3_hat: float
    tau_threshold_mu: float
    tau_threshold_lambda: float
    delta_c1: float
    delta_rho: float
    rho_factor: float
    s: float


def rho_factor(cfg, C_sys, L_obs):
    """sqrt(C) L (C1 / B^2 + sqrt(d) / B), the C^1-to-rho scaling."""
    return math.sqrt(C_sys) * L_obs * (cfg.c1_bound / cfg.B ** 2 + math.sqrt(cfg.d) / cfg.B)


def discriminator_c1_diameter(cfg, samples=200, seed=0, grid=2049):
    """Largest C^1 distance found between family members (d = 1), a lower bound on the diameter."""
    from .hypothesis import DiscriminatorParams, random_discriminator
    if cfg.d != 1:
        raise InputError("diameter measurement implemented for d = 1")
    rng = np.random.default_rng(seed)
    y = np.linspace(0.0, 1.0, grid)[:, None]
    members = []
    b = cfg.disc_bound
    for s in range(samples):
        if s < 2:
            a = np.full(cfg.disc_size(), b if s == 0 else -b)
        else:
            a = rng.choice([-b, b], cfg.disc_size()) if s % 2 else random_discriminator(rng, cfg).vector()
        xi = DiscriminatorParams.from_vector(a, cfg)
        members.append((xi(y), xi.gradient(y)[:, 0]))
    best = 0.0
    for i in range(len(members)):
        for j in range(i):
            d0 = np.max(np.abs(members[i][0] - members[j][0]))
            d1 = np.max(np.abs(members[i][1] - members[j][1]))
            best = max(best, float(max(d0, d1)))
    return best


def rate_constants(cfg, C_sys, L_obs, gamma_input=1.0, delta_c1=None):
    """Explicit constants of the rate results for a model configuration.

    gamma3 = B^2 / (2 C L^2 C1^2); tau_lambda = sqrt(2 (log B)^2);
    tau_mu = 1 / sqrt(gamma3); gamma1 = gamma (2 C2 rho)^s with
    s = d / (alpha + k - 2); gamma2 = 24 sqrt(gamma1) delta^{1 - s/2} / (1 - s/2)
    with delta the rho-diameter of the discriminator family.
    """
    if not cfg.high_regularity:
        raise ConfigError("high-regularity condition k > 2 - alpha + d/2 is violated")
    if C_sys <= 0 or L_obs <= 0 or gamma_input < 0:
        raise InputError("C_sys and L_obs must be positive, gamma non-negative")
    C1 = cfg.c1_bound
    g3 = cfg.B ** 2 / (2.0 * C_sys * L_obs ** 2 * C1 ** 2)
    tau_l = math.sqrt(2.0 * math.log(cfg.B) ** 2)
    tau_m = 1.0 / math.sqrt(g3)
    s = cfg.d / (cfg.alpha + cfg.k - 2)
    fac = rho_factor(cfg, C_sys, L_obs)
    g1 = gamma_input * (2.0 * cfg.C2 * fac) ** s
    if delta_c1 is None:
        delta_c1 = discriminator_c1_diameter(cfg)
    delta = fac * delta_c1
    g2 = 24.0 * math.sqrt(g1) * delta ** (1.0 - s / 2.0) / (1.0 - s / 2.0)
    return RateConstants(g1, g2, g3, tau_m, tau_l, delta_c1, delta, fac, s)


def write_entropy_csv(reports, path):
    lines = ["epsilon,net_size,log_bound,verified_fraction"]
    for r in reports:
        lines.append(f"{float(r.epsilon)!r},{int(r.net_size)},{float(r.log_bound)!r},{float(r.verified_fraction)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
