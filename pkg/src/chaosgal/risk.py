"""GAL risk functions, minimax training, generalization errors and the audit.

The risk of a pair (phi, xi) is

    L = 1/2 [ E log xi(Y) + E log(1 - xi(phi(Z))) ],   Y ~ mu, Z ~ uniform,

with the empirical version replacing both expectations by sample means.
Population values use quadrature against a ``Target`` (any object exposing
``nodes()``, ``grid_density(resolution)`` and ``sample(n, rng)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import AuditFailure, ConfigError, InputError, TrainingError
from .hypothesis import (DiscriminatorParams, GeneratorParams, GridField, ModelConfig,
                         _sigmoid, bernstein_integral_matrix, bernstein_matrix,
                         _bernstein_derivative_matrix, discriminator_features,
                         generator_density, optimal_discriminator, random_discriminator,
                         random_generator, rosenblatt_transport)
from .measures import LN2, GridDensity, _shape, composite_gauss, gauss_legendre_unit, jsd


# ----------------------------------------------------------------------------
# targets


def _cube_nodes(d, panels=64, nodes=8):
    x, w = composite_gauss(np.linspace(0.0, 1.0, panels + 1), nodes)
    if d == 1:
        return x[:, None], w
    g0, g1 = np.meshgrid(x, x, indexing="ij")
    return np.stack([g0.ravel(), g1.ravel()], 1), np.outer(w, w).ravel()


class DensityTarget:
    """Target with an analytic density ``fn`` on the cube and a sampler."""

    def __init__(self, fn, dim=1, sampler=None, name="density"):
        self.fn = fn
        self.dim = dim
        self.sampler = sampler
        self.name = name

    def nodes(self):
        p, w = _cube_nodes(self.dim, 64 if self.dim == 1 else 16)
        return p, w * self.fn(p)

    def grid_density(self, resolution=None):
        r = resolution or (512 if self.dim == 1 else 256)
        return GridDensity.from_function(self.fn, self.dim, r, nodes=8, normalize=True)

    def sample(self, n, rng):
        if self.sampler is None:
            raise InputError("target has no sampler")
        return self.sampler(n, rng)


def linear_target():
    """f(y) = 2y on [0,1], sampled as sqrt(U)."""
    return DensityTarget(lambda y: 2.0 * y[:, 0], 1,
                         lambda n, rng: np.sqrt(rng.random((n, 1))), name="linear")


class GeneratorTarget:
    """mu = w_* lambda for a fixed generator w."""

    def __init__(self, g, name="generator"):
        self.g = g
        self.dim = g.dim
        self.name = name

    def nodes(self):
        p, w = _cube_nodes(self.dim, 64 if self.dim == 1 else 16)
        return p, w * self.g.density(p)

    def grid_density(self, resolution=None):
        return generator_density(self.g, resolution or (512 if self.dim == 1 else 256))

    def sample(self, n, rng):
        return self.g.apply(rng.random((n, self.dim)))


def uniform_target(d=1):
    return GeneratorTarget(GeneratorParams.identity(d), name="uniform")


class ObservableTarget:
    """mu = g_* nu for the tent observable; nu is Lebesgue unless ``f_nu`` given."""

    def __init__(self, cfg, f_nu=None, name="observable"):
        self.cfg = cfg
        self.dim = cfg.dim
        self.f_nu = f_nu
        self.name = name

    def nodes(self):
        from .observable import observable_nodes
        return observable_nodes(self.cfg, per_piece=64 if self.dim == 1 else 12, f_nu=self.f_nu)

    def grid_density(self, resolution=None):
        from .observable import pushforward_density
        r = resolution or (512 if self.dim == 1 else 256)
        if self.f_nu is None:
            return pushforward_density(self.cfg, GridDensity.uniform(self.dim, r, "torus"))
        return pushforward_density(self.cfg, self.f_nu, resolution=r)

    def sample(self, n, rng):
        from .observable import apply_g
        if self.f_nu is not None:
            raise InputError("i.i.d. sampling needs nu = Lebesgue")
        return apply_g(self.cfg, rng.random((n, self.dim)))


# ----------------------------------------------------------------------------
# risks


@dataclass(frozen=True)
class RiskBreakdown:
    L_mu: float
    L_lambda: float
    n: int | None = None
    source: str = "population"

    @property
    def L(self):
        return 0.5 * (self.L_mu + self.L_lambda)


def _log_xi_pair(xi, y):
    v = xi(y)
    return np.log(v), np.log1p(-v)


def _cell_log_means(xi, shape, nodes=4):
    """Per-cell averages of log xi and log(1 - xi)."""
    if isinstance(xi, GridField):
        if xi.shape != tuple(shape):
            raise InputError("discriminator grid does not match the density grid")
        return np.log(xi.values), np.log1p(-xi.values)
    x, w = gauss_legendre_unit(nodes)
    if len(shape) == 1:
        r = shape[0]
        pts = ((np.arange(r)[:, None] + x[None, :]) / r).reshape(-1, 1)
        a, b = _log_xi_pair(xi, pts)
        return a.reshape(r, nodes) @ w, b.reshape(r, nodes) @ w
    r0, r1 = shape
    p0 = ((np.arange(r0)[:, None] + x[None, :]) / r0).ravel()
    p1 = ((np.arange(r1)[:, None] + x[None, :]) / r1).ravel()
    g0, g1 = np.meshgrid(p0, p1, indexing="ij")
    a, b = _log_xi_pair(xi, np.stack([g0.ravel(), g1.ravel()], 1))
    red = lambda v: np.einsum("anbm,n,m->ab", v.reshape(r0, nodes, r1, nodes), w, w)
    return red(a), red(b)


def population_risk(f_mu, g, xi, method="grid"):
    """Population risk of (g, xi) against ``f_mu``.

    ``method="grid"``: f_mu is a GridDensity and f_phi its exact cell-mass
    discretization; both are piecewise constant and log xi is integrated per
    cell, so L(phi, xi) <= L(phi, xi_phi) holds cell by cell and
    L(phi, xi_phi) = jsd - ln 2 holds to rounding.
    ``method="latent"``: f_mu is a Target and both expectations use its
    quadrature nodes; the latent expectation over z is computed after the
    change of variables y = phi(z), i.e. against the analytic f_phi.
    """
    if method == "grid":
        if not isinstance(f_mu, GridDensity):
            raise InputError("grid method needs a GridDensity target")
        f_phi = g if isinstance(g, GridDensity) else generator_density(g, f_mu.shape)
        lx, l1x = _cell_log_means(xi, f_mu.shape)
        v = f_mu.cell_volume
        return RiskBreakdown(float(np.sum(f_mu.values * lx) * v),
                             float(np.sum(f_phi.values * l1x) * v))
    if method == "latent":
        p, w = f_mu.nodes()
        Lmu = float(np.dot(w, np.log(xi(p))))
        q, wq = _cube_nodes(g.dim, 64 if g.dim == 1 else 16)
        Llam = float(np.dot(wq * g.density(q), np.log1p(-xi(q))))
        return RiskBreakdown(Lmu, Llam)
    raise InputError(f"unknown method {method!r}")


def empirical_risk(samples_Y, samples_Z, g, xi):
    Y = np.asarray(samples_Y, dtype=float)
    Z = np.asarray(samples_Z, dtype=float)
    if Y.size == 0 or Z.size == 0:
        raise InputError("empirical risk needs non-empty samples")
    Y = Y.reshape(Y.shape[0], -1)
    Z = Z.reshape(Z.shape[0], -1)
    if Y.shape[0] != Z.shape[0]:
        raise InputError("sample counts differ")
    Lmu = float(np.mean(np.log(xi(Y))))
    Llam = float(np.mean(np.log1p(-xi(g.apply(Z)))))
    return RiskBreakdown(Lmu, Llam, n=Y.shape[0], source="empirical")


# ----------------------------------------------------------------------------
# differentiable pieces


def _xi_terms(q, B):
    """xi, d log xi / dq and d log(1 - xi) / dq for logits q."""
    s = _sigmoid(q)
    c = 1.0 - 2.0 * B
    xi = B + c * s
    ds = c * s * (1.0 - s)
    return xi, ds / xi, -ds / (1.0 - xi)


def _logit_grad_y(a, y, degree):
    """Gradient of the logit with respect to y, shape (N, d)."""
    from numpy.polynomial import legendre as L
    u = 2.0 * y - 1.0
    if y.shape[1] == 1:
        return (2.0 * L.legval(u[:, 0], L.legder(a)))[:, None]
    c = a.reshape(degree + 1, degree + 1)
    d0 = 2.0 * L.legval2d(u[:, 0], u[:, 1], L.legder(c, axis=0))
    d1 = 2.0 * L.legval2d(u[:, 0], u[:, 1], L.legder(c, axis=1))
    return np.stack([d0, d1], 1)


def generator_vjp(g, z, y, gy):
    """sum_i gy_i . d phi(z_i) / d weights, for y = phi(z)."""
    m = g.order - 1
    w1 = g.fields[0]
    z = z.reshape(-1, g.dim)
    d1 = bernstein_matrix(y[:, 0], m) @ w1
    dF1 = (bernstein_integral_matrix(y[:, 0], m) - z[:, :1] / (m + 1))  # (N, m+1), times 1/S
    S1 = w1.sum() / (m + 1)
    # dy1/dw1 = -(dF1/S1) / (d1/S1) = -dF1 / d1
    dy1 = -dF1 / d1[:, None]
    if g.dim == 1:
        return gy[:, 0] @ dy1
    W = g.fields[1]
    ca = W.shape[0] - 1
    Ba = bernstein_matrix(y[:, 0], ca)
    dBa = _bernstein_derivative_matrix(y[:, 0], ca)
    Bb = bernstein_matrix(y[:, 1], m)
    beta = bernstein_integral_matrix(y[:, 1], m) - z[:, 1:2] / (m + 1)  # (N, m+1)
    v = Ba @ W
    S2 = v.sum(axis=1) / (m + 1)
    rho2 = np.sum(Bb * v, axis=1)  # = S2 * dF2/dy2
    dF2_dy1 = np.sum((dBa @ W) * beta, axis=1)  # times 1/S2
    # dy2 = -(dF2/dy1 dy1 + dF2/dW dW) / dF2/dy2, the 1/S2 factors cancel
    dy2_dy1 = -dF2_dy1 / rho2
    g1 = gy[:, 0] + gy[:, 1] * dy2_dy1
    grad1 = g1 @ dy1
    coef = -gy[:, 1] / rho2
    grad2 = np.einsum("n,na,nb->ab", coef, Ba, beta)
    return np.concatenate([grad1, grad2.ravel()])


def density_param_grad(g, y, gw):
    """sum_k gw_k d f_phi(y_k) / d weights."""
    m = g.order - 1
    w1 = g.fields[0]
    S1 = w1.sum() / (m + 1)
    B1 = bernstein_matrix(y[:, 0], m)
    rho1 = B1 @ w1 / S1
    if g.dim == 1:
        return gw @ (B1 / S1 - rho1[:, None] / ((m + 1) * S1))
    W = g.fields[1]
    Ba = bernstein_matrix(y[:, 0], W.shape[0] - 1)
    Bb = bernstein_matrix(y[:, 1], m)
    v = Ba @ W
    S2 = v.sum(axis=1) / (m + 1)
    rho2 = np.sum(Bb * v, axis=1) / S2
    grad1 = (gw * rho2) @ (B1 / S1 - rho1[:, None] / ((m + 1) * S1))
    c = gw * rho1 / S2
    grad2 = np.einsum("n,na,nb->ab", c, Ba, Bb) - np.einsum("n,na->a", c * rho2 / (m + 1), Ba)[:, None]
    return np.concatenate([grad1, grad2.ravel()])


# ----------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    solver: str = "best_response"
    restarts: int = 4
    iterations: int = 20_000
    lr_g: float = 1e-2
    lr_d: float = 3e-2
    d_steps: int = 5
    outer_maxiter: int = 200
    inner_maxiter: int = 200
    init_spread: float = 0.3
    min_n: int = 16
    log_every: int = 1

    def __post_init__(self):
        if self.solver not in ("best_response", "gda"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.restarts < 1 or self.iterations < 1 or self.d_steps < 1:
            raise ConfigError("restarts, iterations and d_steps must be positive")
        if not (self.lr_g > 0 and self.lr_d > 0):
            raise ConfigError("step sizes must be positive")


@dataclass
class TrainResult:
    generator: GeneratorParams
    discriminator: DiscriminatorParams
    theta: np.ndarray
    loss: float
    converged: bool
    restart: int
    restart_losses: list
    log: list = field(default_factory=list)

    def log_csv(self):
        lines = ["restart,iteration,L,L_mu,L_lambda,grad_norm_g,grad_norm_d"]
        for r in self.log:
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in r))
        return "\n".join(lines) + "\n"


class _Objective:
    """Empirical risk as a function of (theta, a) with analytic gradients."""

    def __init__(self, Y, Z, cfg):
        self.cfg = cfg
        self.Z = Z
        self.VY = discriminator_features(Y, cfg.degree)
        self.n = Y.shape[0]
        self._y0 = None

    def generator(self, theta):
        return GeneratorParams.from_theta(theta, self.cfg)

    def push(self, theta):
        g = self.generator(theta)
        y = g.apply(self.Z, self._y0)
        self._y0 = y
        if not np.all(np.isfinite(y)):
            raise TrainingError("generator produced non-finite samples", {"theta": theta.tolist()})
        return g, y

    def disc_value(self, a, Vy):
        B = self.cfg.B
        xY, dY, _ = _xi_terms(self.VY @ a, B)
        xy, _, dy = _xi_terms(Vy @ a, B)
        Lmu = float(np.mean(np.log(xY)))
        Llam = float(np.mean(np.log1p(-xy)))
        grad = 0.5 * (self.VY.T @ dY + Vy.T @ dy) / self.n
        return Lmu, Llam, grad

    def inner_max(self, Vy, a0):
        b = self.cfg.disc_bound

        def f(a):
            Lmu, Llam, gr = self.disc_value(a, Vy)
            return -0.5 * (Lmu + Llam), -gr

        res = minimize(f, a0, jac=True, method="L-BFGS-B", bounds=[(-b, b)] * a0.size,
                       options={"maxiter": self.cfg_inner, "ftol": 1e-15, "gtol": 1e-11})
        return res.x

    def gen_grad(self, theta, g, y, a):
        B = self.cfg.B
        q = discriminator_features(y, self.cfg.degree) @ a
        _, _, dl = _xi_terms(q, B)
        gy = dl[:, None] * _logit_grad_y(a, y, self.cfg.degree)
        gw = 0.5 * generator_vjp(g, self.Z, y, gy) / self.n
        return gw * 2.0 * theta


def _projected_grad_norm(a, grad, bound):
    pg = grad.copy()
    pg[(a >= bound) & (grad > 0)] = 0.0
    pg[(a <= -bound) & (grad < 0)] = 0.0
    return float(np.linalg.norm(pg))


def _best_response_run(obj, theta0, tcfg, restart, log):
    cfg = obj.cfg
    state = {"a": np.zeros(cfg.disc_size()), "it": 0}
    obj.cfg_inner = tcfg.inner_maxiter

    def phi(theta):
        g, y = obj.push(theta)
        Vy = discriminator_features(y, cfg.degree)
        a = obj.inner_max(Vy, state["a"])
        state["a"] = a
        Lmu, Llam, ga = obj.disc_value(a, Vy)
        gt = obj.gen_grad(theta, g, y, a)
        L = 0.5 * (Lmu + Llam)
        if not (np.isfinite(L) and np.all(np.isfinite(gt))):
            raise TrainingError("loss not finite", {"restart": restart, "iteration": state["it"]})
        if state["it"] % tcfg.log_every == 0:
            log.append((restart, state["it"], L, Lmu, Llam, float(np.linalg.norm(gt)),
                        _projected_grad_norm(a, ga, cfg.disc_bound)))
        state["it"] += 1
        return L, gt

    res = minimize(phi, theta0, jac=True, method="L-BFGS-B",
                   bounds=[(0.0, cfg.theta_max)] * theta0.size,
                   options={"maxiter": tcfg.outer_maxiter, "ftol": 1e-13, "gtol": 1e-8})
    theta = res.x
    L, _ = phi(theta)
    return theta, state["a"], L, bool(res.success)


def _gda_run(obj, theta0, tcfg, restart, log):
    cfg = obj.cfg
    b = cfg.disc_bound
    theta = theta0.copy()
    a = np.zeros(cfg.disc_size())
    for it in range(tcfg.iterations):
        g, y = obj.push(theta)
        Vy = discriminator_features(y, cfg.degree)
        for _ in range(tcfg.d_steps):
            Lmu, Llam, ga = obj.disc_value(a, Vy)
            a = np.clip(a + tcfg.lr_d * ga, -b, b)
        Lmu, Llam, ga = obj.disc_value(a, Vy)
        gt = obj.gen_grad(theta, g, y, a)
        L = 0.5 * (Lmu + Llam)
        if not (np.isfinite(L) and np.all(np.isfinite(gt))):
            raise TrainingError("loss not finite", {"restart": restart, "iteration": it})
        if it % tcfg.log_every == 0:
            log.append((restart, it, L, Lmu, Llam, float(np.linalg.norm(gt)),
                        _projected_grad_norm(a, ga, b)))
        theta = np.clip(theta - tcfg.lr_g * gt, 0.0, cfg.theta_max)
    # final loss is the inner-maximized one, as for the other solver
    obj.cfg_inner = tcfg.inner_maxiter
    g, y = obj.push(theta)
    Vy = discriminator_features(y, cfg.degree)
    a = obj.inner_max(Vy, a)
    Lmu, Llam, ga = obj.disc_value(a, Vy)
    return theta, a, 0.5 * (Lmu + Llam), _projected_grad_norm(a, ga, b) < 1e-6


def train_gal(samples_Y, noise_seed, model=None, config=None, samples_Z=None):
    """Solve min_phi max_xi of the empirical risk over the parametric families.

    ``samples_Y`` are the data (trajectory images or i.i.d.); the latent
    sample Z is drawn uniformly with ``noise_seed`` unless given.  Restart 0
    starts at the identity, the others at seeded random perturbations; the
    generator with the lowest inner-maximized loss wins, lowest index on ties.
    """
    model = model or ModelConfig()
    config = config or TrainConfig()
    Y = np.asarray(samples_Y, dtype=float).reshape(-1, model.d)
    n = Y.shape[0]
    if n < config.min_n:
        raise InputError(f"need at least {config.min_n} samples, got {n}")
    if samples_Z is None:
        samples_Z = np.random.default_rng(noise_seed).random((n, model.d))
    Z = np.asarray(samples_Z, dtype=float).reshape(-1, model.d)
    obj = _Objective(Y, Z, model)
    run = _best_response_run if config.solver == "best_response" else _gda_run
    best = None
    losses = []
    log = []
    P = model.theta_size()
    th_id = np.full(P, math.sqrt(max(1.0 - model.floor, 0.0)))
    for r in range(config.restarts):
        if r == 0:
            t0 = th_id
        else:
            rr = np.random.default_rng([noise_seed, r])
            t0 = np.clip(th_id * (1.0 + config.init_spread * rr.standard_normal(P)),
                         0.05, model.theta_max)
        theta, a, L, conv = run(obj, t0, config, r, log)
        losses.append(L)
        if best is None or L < best[2]:
            best = (theta, a, L, conv, r)
    theta, a, L, conv, r = best
    g = GeneratorParams.from_theta(theta, model)
    xi = DiscriminatorParams.from_vector(a, model)
    return TrainResult(g, xi, theta, L, conv, r, losses, log)


# ----------------------------------------------------------------------------
# generalization errors


def _disc_net(cfg, size=64, seed=20240601):
    rng = np.random.default_rng(seed)
    net = [np.zeros(cfg.disc_size())]
    while len(net) < size:
        net.append(random_discriminator(rng, cfg).vector())
    return net


def _multistart_max(fun, dim, bounds, starts, net):
    """max over starts (L-BFGS-B on +-fun) and a fixed net of |fun|."""
    best = 0.0
    values = []
    for x in net:
        best = max(best, abs(fun(x)[0]))
    for x0 in starts:
        for sign in (1.0, -1.0):
            def f(x):
                v, gr = fun(x)
                return -sign * v, -sign * gr
            res = minimize(f, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": 200, "ftol": 1e-11, "gtol": 1e-9})
            v = abs(fun(res.x)[0])
            values.append(v)
            best = max(best, v)
    return best, values


def generalization_error_mu(samples_Y, target, config=None, restarts=8, net_size=64, seed=0,
                            info=None):
    """Lower bound on sup_xi |L^mu_hat(xi) - L^mu(xi)| by multi-start ascent plus a net."""
    cfg = config or ModelConfig()
    Y = np.asarray(samples_Y, dtype=float).reshape(-1, cfg.d)
    if Y.shape[0] < 1:
        raise InputError("need at least one sample")
    VY = discriminator_features(Y, cfg.degree)
    p, w = target.nodes()
    Vp = discriminator_features(p, cfg.degree)
    B = cfg.B
    n = Y.shape[0]

    def fun(a):
        xY, dY, _ = _xi_terms(VY @ a, B)
        xp, dp, _ = _xi_terms(Vp @ a, B)
        v = float(np.mean(np.log(xY)) - np.dot(w, np.log(xp)))
        return v, VY.T @ dY / n - Vp.T @ (w * dp)

    rng = np.random.default_rng([seed, 1])
    b = cfg.disc_bound
    starts = [rng.uniform(-b, b, cfg.disc_size()) * 0.5 for _ in range(restarts)]
    val, vals = _multistart_max(fun, cfg.disc_size(), [(-b, b)] * cfg.disc_size(), starts,
                                _disc_net(cfg, net_size))
    if info is not None:
        info["restart_values"] = vals
    return val


def generalization_error_lambda(samples_Z, config=None, restarts=8, net_size=64, seed=0,
                                info=None):
    """Lower bound on sup_{phi, xi} |L^lambda_hat - L^lambda| (joint maximization)."""
    cfg = config or ModelConfig()
    Z = np.asarray(samples_Z, dtype=float).reshape(-1, cfg.d)
    n = Z.shape[0]
    if n < 1:
        raise InputError("need at least one sample")
    q, wq = _cube_nodes(cfg.d, 64 if cfg.d == 1 else 16)
    Vq = discriminator_features(q, cfg.degree)
    P = cfg.theta_size()
    B = cfg.B

    warm = {}

    def fun(x):
        theta, a = x[:P], x[P:]
        g = GeneratorParams.from_theta(theta, cfg)
        y = g.apply(Z, warm.get("y"))
        warm["y"] = y
        Vy = discriminator_features(y, cfg.degree)
        xy, _, dy = _xi_terms(Vy @ a, B)
        xq, _, dq = _xi_terms(Vq @ a, B)
        rho = g.density(q)
        l1q = np.log1p(-xq)
        v = float(np.mean(np.log1p(-xy)) - np.dot(wq * rho, l1q))
        ga = Vy.T @ dy / n - Vq.T @ (wq * rho * dq)
        gy = dy[:, None] * _logit_grad_y(a, y, cfg.degree)
        gw = generator_vjp(g, Z, y, gy) / n - density_param_grad(g, q, wq * l1q)
        return v, np.concatenate([gw * 2.0 * theta, ga])

    rng = np.random.default_rng([seed, 2])
    b = cfg.disc_bound
    bounds = [(0.0, cfg.theta_max)] * P + [(-b, b)] * cfg.disc_size()
    starts = []
    for _ in range(restarts):
        th = np.clip(1.0 + 0.4 * rng.standard_normal(P), 0.05, cfg.theta_max)
        starts.append(np.concatenate([th, rng.uniform(-b, b, cfg.disc_size()) * 0.5]))
    nrng = np.random.default_rng(20240602)
    net = [np.concatenate([np.ones(P), np.zeros(cfg.disc_size())])]
    for a in _disc_net(cfg, net_size)[1:]:
        th = np.clip(1.0 + 0.4 * nrng.standard_normal(P), 0.05, cfg.theta_max)
        net.append(np.concatenate([th, a]))
    val, vals = _multistart_max(fun, len(bounds), bounds, starts, net)
    if info is not None:
        info["restart_values"] = vals
    return val


# ----------------------------------------------------------------------------
# model errors and the decomposition audit


@dataclass(frozen=True)
class ModelErrors:
    eps_model_G: float
    eps_model_D: float
    rosenblatt_sup_error: float


def best_discriminator_risk(f_mu, f_phi, cfg, starts=4, seed=0):
    """max over the discriminator family of the grid population risk."""
    x, w = gauss_legendre_unit(4)
    shape = f_mu.shape
    if len(shape) == 1:
        r = shape[0]
        pts = ((np.arange(r)[:, None] + x[None, :]) / r).reshape(-1, 1)
        wm = np.repeat(f_mu.values / r, 4) * np.tile(w, r)
        wp = np.repeat(f_phi.values / r, 4) * np.tile(w, r)
    else:
        r0, r1 = shape
        p0 = ((np.arange(r0)[:, None] + x[None, :]) / r0).ravel()
        p1 = ((np.arange(r1)[:, None] + x[None, :]) / r1).ravel()
        g0, g1 = np.meshgrid(p0, p1, indexing="ij")
        pts = np.stack([g0.ravel(), g1.ravel()], 1)
        ww = np.einsum("n,m->nm", w, w)
        wm = (f_mu.values[:, None, :, None] * ww[None, :, None, :]).reshape(-1) / (r0 * r1)
        wp = (f_phi.values[:, None, :, None] * ww[None, :, None, :]).reshape(-1) / (r0 * r1)
    V = discriminator_features(pts, cfg.degree)
    B = cfg.B

    def f(a):
        xi, d1, d2 = _xi_terms(V @ a, B)
        L = 0.5 * (np.dot(wm, np.log(xi)) + np.dot(wp, np.log1p(-xi)))
        return -L, -0.5 * (V.T @ (wm * d1 + wp * d2))

    rng = np.random.default_rng(seed)
    b = cfg.disc_bound
    best = -math.inf
    for s in range(starts):
        a0 = np.zeros(cfg.disc_size()) if s == 0 else rng.uniform(-b, b, cfg.disc_size()) * 0.5
        res = minimize(f, a0, jac=True, method="L-BFGS-B", bounds=[(-b, b)] * a0.size,
                       options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def measure_model_errors(f_mu, cfg, probes=(), n_random=8, seed=0):
    """eps_model^G from the Rosenblatt fit; eps_model^D over probe generators."""
    fit = rosenblatt_transport(f_mu, cfg, kappa=min(cfg.kappa, 0.5 * f_mu.min_value()))
    epsG = jsd(f_mu, generator_density(fit.params, f_mu.shape))
    rng = np.random.default_rng([seed, 3])
    gens = [GeneratorParams.identity(cfg.d, cfg.gen_order, cfg.cond_order), fit.params]
    gens += list(probes)
    gens += [random_generator(rng, cfg) for _ in range(n_random)]
    epsD = 0.0
    for g in gens:
        f_phi = generator_density(g, f_mu.shape)
        opt = jsd(f_mu, f_phi) - LN2
        epsD = max(epsD, opt - best_discriminator_risk(f_mu, f_phi, cfg))
    return ModelErrors(epsG, max(epsD, 0.0), fit.sup_error)


@dataclass(frozen=True)
class DecompositionReport:
    jsd_achieved: float
    eps_model_G: float
    eps_model_D: float
    eps_gen_mu: float
    eps_gen_lambda: float
    tolerance: float = 0.02

    @property
    def bound(self):
        return self.eps_model_G + self.eps_model_D + self.eps_gen_mu + self.eps_gen_lambda

    @property
    def slack(self):
        return self.bound + self.tolerance - self.jsd_achieved

    @property
    def passed(self):
        return self.jsd_achieved <= self.bound + self.tolerance


def decomposition_audit(f_mu, trained, eps_mu, eps_lambda, model_errors, tolerance=0.02,
                        strict=True):
    vals = [eps_mu, eps_lambda, model_errors.eps_model_G, model_errors.eps_model_D]
    if not all(np.isfinite(v) for v in vals):
        raise InputError("audit inputs must be finite")
    f_phi = trained if isinstance(trained, GridDensity) else generator_density(trained, f_mu.shape)
    rep = DecompositionReport(jsd(f_mu, f_phi), model_errors.eps_model_G,
                              model_errors.eps_model_D, float(eps_mu), float(eps_lambda), tolerance)
    if strict and not rep.passed:
        raise AuditFailure(f"jsd {rep.jsd_achieved:.6g} exceeds error sum {rep.bound:.6g} + {tolerance}")
    return rep


# ----------------------------------------------------------------------------
# Lipschitz continuity of the risks


@dataclass(frozen=True)
class LipschitzReport:
    pairs: int
    max_ratio: dict
    violations: dict

    @property
    def passed(self):
        return all(v == 0 for v in self.violations.values())


def lipschitz_bounds_check(pairs, config=None, target=None, n_samples=100, seed=0, grid=4097):
    """Evaluate the four Lipschitz inequalities on random pairs.

    Sup norms are grid suprema; C1 is the family bound of the configuration.
    The population L^lambda uses the latent quadrature (change of variables
    to y = phi(z)), the empirical one n_samples uniform latent points.
    """
    if pairs < 1:
        raise InputError("pairs must be positive")
    cfg = config or ModelConfig()
    if cfg.d != 1:
        raise InputError("grid-sup norms are implemented for d = 1")
    target = target or linear_target()
    rng = np.random.default_rng(seed)
    p, w = target.nodes()
    Y = target.sample(n_samples, rng)
    Z = rng.random((n_samples, 1))
    ug = np.linspace(0.0, 1.0, grid)[:, None]
    q, wq = _cube_nodes(1, 64)
    B, C1 = cfg.B, cfg.c1_bound
    keys = ("mu", "lambda", "mu_hat", "lambda_hat")
    ratio = {k: 0.0 for k in keys}
    bad = {k: 0 for k in keys}
    for _ in range(pairs):
        g1, g2 = random_generator(rng, cfg), random_generator(rng, cfg)
        x1, x2 = random_discriminator(rng, cfg), random_discriminator(rng, cfg)
        if rng.random() < 0.1:
            x2 = x1
        dxi = float(np.max(np.abs(x1(ug) - x2(ug))))
        dphi = float(np.max(np.abs(g1.apply(ug) - g2.apply(ug))))
        lhs = {
            "mu": abs(np.dot(w, np.log(x1(p)) - np.log(x2(p)))),
            "lambda": abs(np.dot(wq * g1.density(q), np.log1p(-x1(q)))
                          - np.dot(wq * g2.density(q), np.log1p(-x2(q)))),
            "mu_hat": abs(np.mean(np.log(x1(Y)) - np.log(x2(Y)))),
            "lambda_hat": abs(np.mean(np.log1p(-x1(g1.apply(Z))) - np.log1p(-x2(g2.apply(Z))))),
        }
        rhs = {"mu": dxi / B, "mu_hat": dxi / B,
               "lambda": (dxi + C1 * dphi) / B, "lambda_hat": (dxi + C1 * dphi) / B}
        for k in keys:
            if lhs[k] > rhs[k]:
                bad[k] += 1
            if rhs[k] > 0:
                ratio[k] = max(ratio[k], lhs[k] / rhs[k])
    return LipschitzReport(pairs, ratio, bad)
