"""Finite-parameter generators and discriminators.

Generators are triangular bijections of [0,1]^d described through their
inverse.  Coordinate j of phi^{-1} is the conditional CDF

    F_j(y_j | y_<j) = int_0^{y_j} rho_j(y_<j, t) dt / int_0^1 rho_j(y_<j, t) dt

of a non-negative Bernstein-polynomial field rho_j, so the generator density
f_phi = |det D phi^{-1}| = prod_j rho_j / N_j is available in closed form and
cell masses are exact differences of CDF values.  phi itself is evaluated by
safeguarded Newton iteration on the monotone polynomial CDFs.  Trainable
generators use weights w = floor + theta^2.

Discriminators are xi(y) = B + (1 - 2B) * sigmoid(p(y)) with p a (tensor)
Legendre polynomial on the shifted cube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from math import comb
from pathlib import Path

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly
from scipy.optimize import nnls

from .errors import ConfigError, DegenerateGeneratorError, InputError
from .measures import GridDensity, _shape, composite_gauss, gauss_legendre_unit

POSITIVITY_FLOOR = 1e-6


# ----------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ModelConfig:
    d: int = 1
    k: int = 3
    alpha: float = 1.0
    K: float = 1e4
    K_hat: float = 1e4
    B: float = 0.05
    C1: float | None = None
    C2: float = 1e4
    kappa: float = 1e-3
    gen_order: int = 8
    cond_order: int = 4
    disc_degree: int | None = None
    disc_bound: float = 4.0
    theta_max: float = 2.0
    floor: float = 1e-4
    grid: int | None = None

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigError("dimension must be 1 or 2")
        if self.k < 2:
            raise ConfigError("smoothness order k must be >= 2")
        if not (0 < self.alpha <= 1):
            raise ConfigError("alpha must lie in (0, 1]")
        if not (0 < self.B < 0.5):
            raise ConfigError("clamp B must lie in (0, 1/2)")
        for name in ("K", "K_hat", "C2", "kappa", "disc_bound", "theta_max", "floor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.C1 is not None and not self.C1 > 0:
            raise ConfigError("C1 must be positive")
        if self.gen_order < 2 or self.cond_order < 1:
            raise ConfigError("basis orders too small")

    @property
    def high_regularity(self):
        return self.k > 2 - self.alpha + self.d / 2

    @property
    def degree(self):
        if self.disc_degree is not None:
            return self.disc_degree
        return 6 if self.d == 1 else 4

    @property
    def resolution(self):
        if self.grid is not None:
            return self.grid
        return 512 if self.d == 1 else 256

    @property
    def c1_bound(self):
        """Lipschitz bound of the discriminator family (declared or certified from the box)."""
        if self.C1 is not None:
            return self.C1
        return discriminator_lipschitz_bound(self.d, self.degree, self.disc_bound, self.B)

    def theta_size(self):
        if self.d == 1:
            return self.gen_order
        return self.gen_order + self.cond_order * self.gen_order

    def disc_size(self):
        return (self.degree + 1) ** self.d


# ----------------------------------------------------------------------------
# Bernstein utilities


def bernstein_matrix(t, m):
    """B_{j,m}(t) for j = 0..m, shape (N, m+1)."""
    t = np.asarray(t, dtype=float).reshape(-1)
    # rows are built contiguously and the transpose is returned as a view
    tp = np.empty((m + 1, t.size))
    sp = np.empty((m + 1, t.size))
    tp[0] = 1.0
    sp[0] = 1.0
    s = 1.0 - t
    for k in range(1, m + 1):
        np.multiply(tp[k - 1], t, out=tp[k])
        np.multiply(sp[k - 1], s, out=sp[k])
    out = tp
    for j in range(m + 1):
        out[j] *= sp[m - j]
        out[j] *= comb(m, j)
    return out.T


def bernstein_integral_matrix(t, m):
    """int_0^t B_{j,m}, shape (N, m+1); each column integrates to 1/(m+1) at t = 1."""
    b = bernstein_matrix(t, m + 1).T
    tail = np.cumsum(b[::-1], axis=0)[::-1]
    return tail[1:].T / (m + 1)


def _bernstein_to_power(m):
    """Matrix M with B_{j,m}(t) = sum_k M[j,k] t^k."""
    out = np.zeros((m + 1, m + 1))
    for j in range(m + 1):
        for k in range(j, m + 1):
            out[j, k] = comb(m, j) * comb(m - j, k - j) * (-1) ** (k - j)
    return out


_B2P = {}


def _b2p(m):
    if m not in _B2P:
        _B2P[m] = _bernstein_to_power(m)
    return _B2P[m]


def _solve_monotone(F, dF, z, y0=None, maxiter=100, tol=1e-13):
    """Solve F(y) = z on [0,1] for increasing F with F(0)=0, F(1)=1."""
    z = np.asarray(z, dtype=float)
    y = np.clip(z if y0 is None else y0, 0.0, 1.0).astype(float)
    lo = np.zeros_like(z)
    hi = np.ones_like(z)
    for _ in range(maxiter):
        f = F(y) - z
        lo = np.where(f <= 0, y, lo)
        hi = np.where(f >= 0, y, hi)
        d = dF(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            y_new = y - f / d
        bad = ~np.isfinite(y_new) | (y_new < lo) | (y_new > hi)
        y_new = np.where(bad, 0.5 * (lo + hi), y_new)
        step = np.max(np.abs(y_new - y)) if y.size else 0.0
        y = y_new
        if step <= tol:
            break
    return np.clip(y, 0.0, 1.0)


class _Cdf1D:
    """Normalized CDF of a Bernstein field with fixed weights."""

    def __init__(self, w):
        w = np.asarray(w, dtype=float)
        self.w = w
        self.m = w.size - 1
        self.S = float(w.sum() / (self.m + 1))
        if not self.S > 0:
            raise DegenerateGeneratorError("generator field has zero mass")
        dens = (w @ _b2p(self.m)) / self.S
        self.dens_c = dens
        cdf = np.zeros(self.m + 2)
        cdf[1:] = dens / np.arange(1, self.m + 2)
        self.cdf_c = cdf

    def cdf(self, y):
        out = nppoly.polyval(y, self.cdf_c)
        return np.where(y >= 1.0, 1.0, np.where(y <= 0.0, 0.0, out))

    def cdf_exact(self, y):
        """CDF through the Bernstein integral basis (used where mass must telescope)."""
        y = np.asarray(y, dtype=float)
        return np.clip(bernstein_integral_matrix(y, self.m) @ self.w / self.S, 0.0, 1.0)

    def density(self, y):
        return nppoly.polyval(y, self.dens_c)

    def density_derivative(self, y, order=1):
        c = self.dens_c
        for _ in range(order):
            c = nppoly.polyder(c)
        return nppoly.polyval(y, c)

    def inverse(self, z, y0=None):
        return _solve_monotone(self.cdf, self.density, z, y0=y0)


# ----------------------------------------------------------------------------
# generators


@dataclass(frozen=True, eq=False)
class GeneratorParams:
    """Triangular generator defined by Bernstein field weights.

    ``fields[0]`` has shape (order,) and defines the first coordinate; for
    d = 2, ``fields[1]`` has shape (cond_order, order): rows index the
    Bernstein basis in y_1, columns the basis in y_2.
    """

    fields: tuple
    smoothness: int = 3

    def __post_init__(self):
        fs = tuple(np.array(f, dtype=float) for f in self.fields)
        for f in fs:
            f.setflags(write=False)
            if np.any(f < 0) or not np.all(np.isfinite(f)):
                raise InputError("generator weights must be finite and non-negative")
        if len(fs) not in (1, 2):
            raise InputError("generators are implemented for d = 1 and d = 2")
        if fs[0].ndim != 1 or (len(fs) == 2 and fs[1].ndim != 2):
            raise InputError("malformed generator weights")
        object.__setattr__(self, "fields", fs)
        object.__setattr__(self, "_c1", _Cdf1D(fs[0]))

    @property
    def dim(self):
        return len(self.fields)

    @property
    def order(self):
        return self.fields[0].size

    @classmethod
    def identity(cls, d=1, order=8, cond_order=4):
        if d == 1:
            return cls((np.ones(order),))
        return cls((np.ones(order), np.ones((cond_order, order))))

    @classmethod
    def from_theta(cls, theta, cfg):
        theta = np.asarray(theta, dtype=float)
        w = cfg.floor + theta * theta
        n = cfg.gen_order
        if cfg.d == 1:
            return cls((w,), smoothness=cfg.k)
        return cls((w[:n], w[n:].reshape(cfg.cond_order, n)), smoothness=cfg.k)

    def theta(self):
        """Non-negative theta with floor + theta^2 = weights (floor taken as 0 if unknown)."""
        return np.concatenate([np.sqrt(f).ravel() for f in self.fields])

    # -- inverse side (analytic)
    def _cond_weights(self, y1):
        rows = self.fields[1].shape[0]
        return bernstein_matrix(y1, rows - 1) @ self.fields[1]

    def inverse(self, y):
        """phi^{-1}(y) for y of shape (N, d)."""
        y = _as_points(y, self.dim)
        z1 = self._c1.cdf(y[:, 0])
        if self.dim == 1:
            return z1[:, None]
        v = self._cond_weights(y[:, 0])
        m = v.shape[1] - 1
        S = v.sum(axis=1) / (m + 1)
        z2 = np.sum(bernstein_integral_matrix(y[:, 1], m) * v, axis=1) / S
        return np.stack([z1, np.clip(z2, 0.0, 1.0)], axis=1)

    def apply(self, z, y0=None):
        """phi(z) for z of shape (N, d), by Newton iteration on the CDFs."""
        z = _as_points(z, self.dim)
        y1 = self._c1.inverse(z[:, 0], None if y0 is None else y0[:, 0])
        if self.dim == 1:
            return y1[:, None]
        v = self._cond_weights(y1)
        m = v.shape[1] - 1
        S = v.sum(axis=1) / (m + 1)

        def F(t):
            return np.sum(bernstein_integral_matrix(t, m) * v, axis=1) / S

        def dF(t):
            return np.sum(bernstein_matrix(t, m) * v, axis=1) / S

        y2 = _solve_monotone(F, dF, z[:, 1], None if y0 is None else y0[:, 1])
        return np.stack([y1, y2], axis=1)

    def density(self, y):
        """f_phi(y) = |det D phi^{-1}(y)|, pointwise."""
        y = _as_points(y, self.dim)
        f = self._c1.density(y[:, 0])
        if self.dim == 2:
            v = self._cond_weights(y[:, 0])
            m = v.shape[1] - 1
            S = v.sum(axis=1) / (m + 1)
            f = f * np.sum(bernstein_matrix(y[:, 1], m) * v, axis=1) / S
        return f

    def cell_masses(self, shape, nodes=None):
        """Exact (d=1) or Gauss-in-y1 (d=2) masses of the grid cells under phi_* lambda."""
        if self.dim == 1:
            r = shape[0]
            cdf = self._c1.cdf_exact(np.arange(r + 1) / r)
            cdf[0], cdf[-1] = 0.0, 1.0
            return np.diff(cdf)
        r0, r1 = shape
        m1 = self.order - 1
        # the y1-marginal density is a polynomial of degree m1 and the
        # conditional masses are smooth in y1: Gauss nodes per column
        q = nodes or max(8, (m1 + 2) // 2 + 4)
        x, wq = gauss_legendre_unit(q)
        pts = ((np.arange(r0)[:, None] + x[None, :]) / r0).ravel()
        marg = self._c1.density(pts) * np.tile(wq, r0) / r0
        v = self._cond_weights(pts)
        m = v.shape[1] - 1
        S = v.sum(axis=1) / (m + 1)
        edges = np.arange(r1 + 1) / r1
        beta = bernstein_integral_matrix(edges, m)  # (r1+1, m+1)
        cond = (v @ beta.T) / S[:, None]
        cond[:, 0], cond[:, -1] = 0.0, 1.0
        cmass = np.diff(cond, axis=1)  # (r0*q, r1)
        masses = (marg[:, None] * cmass).reshape(r0, q, r1).sum(axis=1)
        # column totals are the exact marginal masses
        col = np.diff(np.clip(self._c1.cdf_exact(np.arange(r0 + 1) / r0), 0, 1))
        tot = masses.sum(axis=1)
        scale = np.where(tot > 0, col / np.where(tot > 0, tot, 1), 0.0)
        return masses * scale[:, None]

    def min_derivative_on_grid(self, resolution):
        """Smallest per-coordinate partial derivative of phi^{-1} at cell centers."""
        shape = _shape(self.dim, resolution)
        c = GridDensity.uniform(self.dim, shape).centers().reshape(-1, self.dim)
        d1 = self._c1.density(c[:, 0])
        if self.dim == 1:
            return float(d1.min())
        v = self._cond_weights(c[:, 0])
        m = v.shape[1] - 1
        S = v.sum(axis=1) / (m + 1)
        d2 = np.sum(bernstein_matrix(c[:, 1], m) * v, axis=1) / S
        return float(min(d1.min(), d2.min()))

    def check_valid(self, resolution=512):
        if self.min_derivative_on_grid(resolution) < POSITIVITY_FLOOR:
            raise DegenerateGeneratorError("monotone derivative below the positivity floor")
        return True

    # -- parameter IO
    def to_text(self, cfg=None):
        lines = ["[generator]", f"dim = {self.dim}", f"order = {self.order}",
                 f"smoothness = {self.smoothness}"]
        lines.append("field0 = " + ", ".join(repr(float(v)) for v in self.fields[0]))
        if self.dim == 2:
            lines.append(f"cond_order = {self.fields[1].shape[0]}")
            lines.append("field1 = " + ", ".join(repr(float(v)) for v in self.fields[1].ravel()))
        if cfg is not None:
            lines += ["", "[model]"] + [f"{k} = {v}" for k, v in _cfg_items(cfg)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        sec = _parse_sections(text)
        if "generator" not in sec:
            raise InputError("missing [generator] section")
        g = sec["generator"]
        f0 = _floats(g["field0"])
        dim = int(g.get("dim", 1))
        if len(f0) != int(g.get("order", len(f0))):
            raise InputError("field0 length does not match order")
        smooth = int(g.get("smoothness", 3))
        if dim == 1:
            return cls((f0,), smoothness=smooth)
        f1 = _floats(g["field1"]).reshape(int(g["cond_order"]), len(f0))
        return cls((f0, f1), smoothness=smooth)


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    if x.ndim == 1:
        x = x[:, None] if d == 1 else x[None, :]
    if x.shape[1] != d:
        raise InputError(f"points of dimension {x.shape[1]} for a {d}-dimensional map")
    return x


def apply_generator(g, z):
    return g.apply(z)


def apply_inverse(g, y):
    return g.inverse(y)


def generator_density(g, resolution=512):
    """Grid density of phi_* lambda from exact cell masses."""
    shape = _shape(g.dim, resolution)
    g.check_valid(shape)
    masses = g.cell_masses(shape)
    return GridDensity.from_cell_masses(masses, check=False)


def random_generator(rng, cfg, spread=0.5):
    theta = np.abs(1.0 + spread * rng.standard_normal(cfg.theta_size()))
    theta = np.clip(theta, 0.0, cfg.theta_max)
    return GeneratorParams.from_theta(theta, cfg)


# ----------------------------------------------------------------------------
# discriminators


def _sigmoid(q):
    return 0.5 * (1.0 + np.tanh(0.5 * q))


def discriminator_lipschitz_bound(d, degree, bound, B):
    """Certified sup |grad xi| over coefficient boxes |a| <= bound."""
    j = np.arange(degree + 1)
    dsup = 2.0 * j * (j + 1) / 2.0  # sup |d/dy P_j(2y - 1)| = j(j+1)
    if d == 1:
        s = bound * dsup.sum()
    else:
        # |d/dy1 sum a_jk P_j P_k| <= bound * sum_j dsup_j * (degree+1); two axes
        s = math.sqrt(2.0) * bound * dsup.sum() * (degree + 1)
    return (1.0 - 2.0 * B) / 4.0 * s


@dataclass(frozen=True, eq=False)
class DiscriminatorParams:
    """xi(y) = B + (1 - 2B) sigmoid(p(y)), p a Legendre series on [0,1]^d."""

    coeffs: np.ndarray
    B: float = 0.05

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if not np.all(np.isfinite(c)):
            raise InputError("discriminator coefficients must be finite")
        if c.ndim not in (1, 2):
            raise InputError("coefficients must be a vector (d=1) or square matrix (d=2)")
        if not (0 < self.B < 0.5):
            raise InputError("clamp B must lie in (0, 1/2)")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self):
        return self.coeffs.ndim

    @property
    def degree(self):
        return self.coeffs.shape[0] - 1

    @classmethod
    def constant_half(cls, d=1, degree=6, B=0.05):
        shape = (degree + 1,) * d
        return cls(np.zeros(shape), B)

    @classmethod
    def from_vector(cls, a, cfg):
        a = np.asarray(a, dtype=float)
        shape = (cfg.degree + 1,) * cfg.d
        return cls(a.reshape(shape), cfg.B)

    def vector(self):
        return self.coeffs.ravel()

    def logit(self, y):
        y = _as_points(y, self.dim)
        u = 2.0 * y - 1.0
        if self.dim == 1:
            return npleg.legval(u[:, 0], self.coeffs)
        return npleg.legval2d(u[:, 0], u[:, 1], self.coeffs)

    def __call__(self, y):
        # the clip only absorbs rounding so the range [B, 1 - B] holds exactly
        v = self.B + (1.0 - 2.0 * self.B) * _sigmoid(self.logit(y))
        return np.clip(v, self.B, 1.0 - self.B)

    def features(self, y):
        """Basis matrix V with logit(y) = V @ vector()."""
        y = _as_points(y, self.dim)
        return discriminator_features(y, self.degree)

    def gradient(self, y):
        """Gradient of xi with respect to y, shape (N, d)."""
        y = _as_points(y, self.dim)
        u = 2.0 * y - 1.0
        s = _sigmoid(self.logit(y))
        scale = (1.0 - 2.0 * self.B) * s * (1.0 - s)
        if self.dim == 1:
            dq = 2.0 * npleg.legval(u[:, 0], npleg.legder(self.coeffs))
            return (scale * dq)[:, None]
        c = self.coeffs
        d0 = 2.0 * npleg.legval2d(u[:, 0], u[:, 1], npleg.legder(c, axis=0))
        d1 = 2.0 * npleg.legval2d(u[:, 0], u[:, 1], npleg.legder(c, axis=1))
        return np.stack([scale * d0, scale * d1], axis=1)

    def param_gradient(self, y):
        """d xi / d coefficients, shape (N, n_coeffs)."""
        v = self.features(y)
        s = _sigmoid(v @ self.vector())
        return ((1.0 - 2.0 * self.B) * s * (1.0 - s))[:, None] * v

    def logit_derivative(self, y, beta):
        """Partial derivative D_beta of the logit."""
        y = _as_points(y, self.dim)
        u = 2.0 * y - 1.0
        c = self.coeffs
        if self.dim == 1:
            return 2.0 ** beta[0] * npleg.legval(u[:, 0], npleg.legder(c, beta[0]))
        cc = npleg.legder(npleg.legder(c, beta[0], axis=0), beta[1], axis=1)
        return 2.0 ** (beta[0] + beta[1]) * npleg.legval2d(u[:, 0], u[:, 1], cc)

    def to_text(self):
        return ("[discriminator]\n"
                f"dim = {self.dim}\ndegree = {self.degree}\nB = {self.B!r}\n"
                "coeffs = " + ", ".join(repr(float(v)) for v in self.coeffs.ravel()) + "\n")

    @classmethod
    def from_text(cls, text):
        sec = _parse_sections(text)["discriminator"]
        dim = int(sec["dim"])
        deg = int(sec["degree"])
        c = _floats(sec["coeffs"]).reshape((deg + 1,) * dim)
        return cls(c, float(sec["B"]))


def discriminator_features(y, degree):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    u = 2.0 * y - 1.0
    if y.shape[1] == 1:
        return npleg.legvander(u[:, 0], degree)
    return npleg.legvander2d(u[:, 0], u[:, 1], [degree, degree])


def apply_discriminator(xi, y):
    return xi(y)


def random_discriminator(rng, cfg, scale=None):
    scale = cfg.disc_bound if scale is None else scale
    a = rng.uniform(-scale, scale, cfg.disc_size())
    decay = 1.0 / (1.0 + np.arange(cfg.disc_size())) if cfg.d == 1 else 1.0
    return DiscriminatorParams.from_vector(np.clip(a * decay, -cfg.disc_bound, cfg.disc_bound), cfg)


# ----------------------------------------------------------------------------
# optimal discriminator on a grid


@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar function tabulated on grid cells (not necessarily a density)."""

    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def evaluate(self, y):
        return GridDensity(self.values, check=False).evaluate(y)


def optimal_discriminator(f_mu, f_phi):
    """Pointwise f_mu / (f_mu + f_phi) on the common grid."""
    if f_mu.shape != f_phi.shape:
        raise InputError("grid mismatch")
    a, b = f_mu.values, f_phi.values
    if np.any(a <= 0) or np.any(b <= 0):
        raise InputError("optimal discriminator needs strictly positive densities")
    return GridField(a / (a + b))


# ----------------------------------------------------------------------------
# Hoelder norms


class PolynomialField:
    """Vector field with components given as power-basis coefficient arrays.

    ``coeffs`` has shape (m,) + (deg+1,)*d: component i is
    sum c[i, k] x^k (tensor monomials for d = 2).
    """

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        self.coeffs = c
        self.dim = c.ndim - 1
        self.out_dim = c.shape[0]

    def component(self, i):
        return PolynomialField(self.coeffs[i:i + 1])

    def partial(self, beta, x):
        x = _as_points(x, self.dim)
        out = []
        for c in self.coeffs:
            cc = c
            for ax, b in enumerate(beta):
                cc = nppoly.polyder(cc, b, axis=ax) if b else cc
            if self.dim == 1:
                out.append(nppoly.polyval(x[:, 0], cc))
            else:
                out.append(nppoly.polyval2d(x[:, 0], x[:, 1], cc))
        return np.stack(out, axis=1)


class CallableField:
    """Field built from a derivative callback ``fn(beta, x) -> (N, m)``."""

    def __init__(self, fn, dim=1, out_dim=1):
        self.fn = fn
        self.dim = dim
        self.out_dim = out_dim

    def partial(self, beta, x):
        v = np.asarray(self.fn(tuple(beta), _as_points(x, self.dim)), dtype=float)
        return v.reshape(v.shape[0], -1)


class GeneratorField:
    """phi as a field; analytic derivatives in d=1, C^1 analytic and finite
    differences of the Jacobian beyond that in d=2."""

    def __init__(self, g):
        self.g = g
        self.dim = g.dim
        self.out_dim = g.dim

    def partial(self, beta, x):
        g = self.g
        x = _as_points(x, self.dim)
        if self.dim == 1:
            y = g.apply(x)[:, 0]
            c = g._c1
            f1 = c.density(y)
            order = beta[0]
            if order == 0:
                return y[:, None]
            f2 = c.density_derivative(y, 1)
            if order == 1:
                return (1.0 / f1)[:, None]
            if order == 2:
                return (-f2 / f1 ** 3)[:, None]
            f3 = c.density_derivative(y, 2)
            if order == 3:
                return ((3.0 * f2 ** 2 - f1 * f3) / f1 ** 5)[:, None]
            raise InputError("generator derivatives implemented up to order 3")
        order = sum(beta)
        if order == 0:
            return g.apply(x)
        if order == 1:
            j = self._jacobian(x)
            ax = beta.index(1)
            return j[:, :, ax]
        h = 1e-4
        ax = next(i for i, b in enumerate(beta) if b)
        rest = list(beta)
        rest[ax] -= 1
        xp, xm = x.copy(), x.copy()
        xp[:, ax] = np.minimum(xp[:, ax] + h, 1.0)
        xm[:, ax] = np.maximum(xm[:, ax] - h, 0.0)
        return (self.partial(tuple(rest), xp) - self.partial(tuple(rest), xm)) / (xp[:, ax] - xm[:, ax])[:, None]

    def _jacobian(self, z):
        g = self.g
        y = g.apply(z)
        c = g._c1
        v = g._cond_weights(y[:, 0])
        m = v.shape[1] - 1
        S = v.sum(axis=1) / (m + 1)
        rows = g.fields[1].shape[0]
        dv = _bernstein_derivative_matrix(y[:, 0], rows - 1) @ g.fields[1]
        dS = dv.sum(axis=1) / (m + 1)
        beta = bernstein_integral_matrix(y[:, 1], m)
        G = np.sum(beta * v, axis=1)
        dG = np.sum(beta * dv, axis=1)
        a11 = c.density(y[:, 0])
        a21 = dG / S - G * dS / S ** 2
        a22 = np.sum(bernstein_matrix(y[:, 1], m) * v, axis=1) / S
        # D phi = (D phi^{-1})^{-1} for the lower-triangular inverse Jacobian
        j = np.zeros((z.shape[0], 2, 2))
        j[:, 0, 0] = 1.0 / a11
        j[:, 1, 1] = 1.0 / a22
        j[:, 1, 0] = -a21 / (a11 * a22)
        return j


def _bernstein_derivative_matrix(t, m):
    if m == 0:
        return np.zeros((np.asarray(t).size, 1))
    b = bernstein_matrix(t, m - 1)
    out = np.zeros((b.shape[0], m + 1))
    out[:, :-1] -= m * b
    out[:, 1:] += m * b
    return out


class DiscriminatorField:
    """xi with derivatives via the chain rule on the sigmoid (d=1 only)."""

    def __init__(self, xi):
        if xi.dim != 1:
            raise InputError("DiscriminatorField supports d = 1")
        self.xi = xi
        self.dim = 1
        self.out_dim = 1

    def partial(self, beta, x):
        xi = self.xi
        order = beta[0]
        q = xi.logit(x)
        s = _sigmoid(q)
        c = 1.0 - 2.0 * xi.B
        if order == 0:
            return (xi.B + c * s)[:, None]
        q1 = xi.logit_derivative(x, (1,))
        s1 = s * (1 - s)
        if order == 1:
            return (c * s1 * q1)[:, None]
        s2 = s1 * (1 - 2 * s)
        q2 = xi.logit_derivative(x, (2,))
        if order == 2:
            return (c * (s2 * q1 ** 2 + s1 * q2))[:, None]
        s3 = s1 * (1 - 6 * s + 6 * s * s)
        q3 = xi.logit_derivative(x, (3,))
        if order == 3:
            return (c * (s3 * q1 ** 3 + 3 * s2 * q1 * q2 + s1 * q3))[:, None]
        raise InputError("discriminator derivatives implemented up to order 3")


@dataclass(frozen=True)
class HolderNorm:
    ck: float
    seminorm_lower: float
    seminorm_upper: float

    @property
    def lower(self):
        return self.ck + self.seminorm_lower

    @property
    def upper(self):
        return self.ck + self.seminorm_upper


def _multi_indices(d, order):
    if d == 1:
        return [(order,)]
    return [(a, order - a) for a in range(order, -1, -1)]


def holder_norm(field, k_order, alpha=0.0, grid=1025, n_pairs=100_000, seed=0):
    """C^{k,alpha} norm estimate of a field on [0,1]^d.

    The C^k part is a supremum over a uniform grid.  The Hoelder seminorm of
    the order-k derivatives is estimated from below by the largest difference
    quotient over random pairs and grid neighbours, and from above (heuristic)
    by L^alpha (2S)^(1-alpha) with L and S grid suprema of the next derivative
    and of the derivative itself.  ``alpha = 0`` gives the plain C^k norm.
    """
    d = field.dim
    if d == 1:
        pts = np.linspace(0.0, 1.0, grid)[:, None]
    else:
        g = int(round(math.sqrt(grid))) if grid > 400 else grid
        ax = np.linspace(0.0, 1.0, g)
        pts = np.stack([a.ravel() for a in np.meshgrid(ax, ax, indexing="ij")], axis=1)
    ck = 0.0
    for order in range(k_order + 1):
        for beta in _multi_indices(d, order):
            v = field.partial(beta, pts)
            ck = max(ck, float(np.max(np.linalg.norm(v, axis=1))))
    if alpha <= 0:
        return HolderNorm(ck, 0.0, 0.0)
    rng = np.random.default_rng(seed)
    xa = rng.random((n_pairs, d))
    # pairs at mixed scales so small-distance quotients are probed too
    scale = 10.0 ** rng.uniform(-4, 0, (n_pairs, 1))
    xb = np.clip(xa + scale * rng.uniform(-1, 1, (n_pairs, d)), 0.0, 1.0)
    low, up = 0.0, 0.0
    for beta in _multi_indices(d, k_order):
        fa = field.partial(beta, xa)
        fb = field.partial(beta, xb)
        dist = np.linalg.norm(xa - xb, axis=1)
        ok = dist > 0
        q = np.linalg.norm(fa - fb, axis=1)[ok] / dist[ok] ** alpha
        low = max(low, float(q.max()) if q.size else 0.0)
        gv = field.partial(beta, pts)
        if d == 1:
            gd = np.linalg.norm(np.diff(gv, axis=0), axis=1) / (1.0 / (grid - 1)) ** alpha
            low = max(low, float(gd.max()))
        S = float(np.max(np.linalg.norm(gv, axis=1)))
        L = 0.0
        for j in range(d):
            nb = list(beta)
            nb[j] += 1
            try:
                L += float(np.max(np.linalg.norm(field.partial(tuple(nb), pts), axis=1))) ** 2
            except InputError:
                L = math.inf
        L = math.sqrt(L)
        up = max(up, L ** alpha * (2 * S) ** (1 - alpha) if alpha < 1 else L)
    return HolderNorm(ck, low, max(up, low))


def validate_generator_norm(g, cfg, grid=2049):
    """Hard check that phi and phi^{-1} respect the configured Hoelder bounds (d = 1)."""
    if g.dim != 1:
        est = holder_norm(GeneratorField(g), min(cfg.k, 2), 0.0, grid=65)
        if est.lower > cfg.K:
            raise DegenerateGeneratorError(f"generator norm {est.lower:.4g} exceeds K = {cfg.K}")
        return est
    k = min(cfg.k, 2)
    est = holder_norm(GeneratorField(g), k, cfg.alpha, grid=grid, n_pairs=20_000)
    if est.lower > cfg.K:
        raise DegenerateGeneratorError(f"generator norm {est.lower:.4g} exceeds K = {cfg.K}")
    inv = _inverse_field(g)
    est_inv = holder_norm(inv, k, cfg.alpha, grid=grid, n_pairs=20_000)
    if est_inv.lower > cfg.K_hat:
        raise DegenerateGeneratorError(f"inverse norm {est_inv.lower:.4g} exceeds K_hat = {cfg.K_hat}")
    return est


def _inverse_field(g):
    c = g._c1

    def fn(beta, x):
        o = beta[0]
        if o == 0:
            return c.cdf(x[:, 0])[:, None]
        return c.density_derivative(x[:, 0], o - 1)[:, None]

    return CallableField(fn)


# ----------------------------------------------------------------------------
# Rosenblatt transport


@dataclass(frozen=True)
class RosenblattFit:
    params: GeneratorParams
    sup_error: float
    model_jsd: float


def _inverse_piecewise_linear_cdf(masses, z):
    """Inverse of the CDF of a piecewise-constant density on [0,1]."""
    r = masses.size
    cdf = np.concatenate([[0.0], np.cumsum(masses)])
    cdf /= cdf[-1]
    k = np.clip(np.searchsorted(cdf, z, side="right") - 1, 0, r - 1)
    m = masses[k] / masses.sum()
    frac = np.where(m > 0, (z - cdf[k]) / np.where(m > 0, m, 1), 0.0)
    return (k + np.clip(frac, 0, 1)) / r


def rosenblatt_transport(f, cfg=None, order=None, cond_order=None, kappa=None):
    """Triangular transport of the uniform measure to the grid density ``f``,
    fitted to the Bernstein generator family by non-negative least squares.

    Returns a ``RosenblattFit`` with the fitted parameters, the sup distance
    between the fitted map and the exact transport of the piecewise-constant
    density (on a z-grid), and the JSD between the fitted and target densities.
    """
    from .measures import jsd

    cfg = cfg or ModelConfig(d=f.dim)
    order = order or cfg.gen_order
    cond_order = cond_order or cfg.cond_order
    kappa = cfg.kappa if kappa is None else kappa
    if f.dim > 2:
        raise InputError("Rosenblatt transport is implemented for d <= 2")
    if f.min_value() < kappa:
        raise InputError(f"density minimum {f.min_value():.3g} below kappa = {kappa}")
    m = order - 1
    if f.dim == 1:
        r = f.shape[0]
        edges = np.arange(r + 1) / r
        A = np.diff(bernstein_integral_matrix(edges, m), axis=0) * r
        w, _ = nnls(A, f.values, maxiter=50 * order)
        g = GeneratorParams((w,), smoothness=cfg.k)
        zz = (np.arange(4096) + 0.5) / 4096
        raw = _inverse_piecewise_linear_cdf(f.cell_masses(), zz)
        sup = float(np.max(np.abs(g.apply(zz[:, None])[:, 0] - raw)))
    else:
        r0, r1 = f.shape
        marg = f.values.mean(axis=1)
        e0 = np.arange(r0 + 1) / r0
        A = np.diff(bernstein_integral_matrix(e0, m), axis=0) * r0
        w1, _ = nnls(A, marg, maxiter=50 * order)
        cond = f.values / marg[:, None]
        c0 = (np.arange(r0) + 0.5) / r0
        Bc = bernstein_matrix(c0, cond_order - 1)  # (r0, cond_order)
        e1 = np.arange(r1 + 1) / r1
        Ay = np.diff(bernstein_integral_matrix(e1, m), axis=0) * r1  # (r1, order)
        design = np.einsum("ia,jb->ijab", Bc, Ay).reshape(r0 * r1, cond_order * order)
        w2, _ = nnls(design, cond.ravel(), maxiter=50 * design.shape[1])
        g = GeneratorParams((w1, w2.reshape(cond_order, order)), smoothness=cfg.k)
        zz = (np.arange(512) + 0.5) / 512
        raw = _inverse_piecewise_linear_cdf(f.cell_masses().sum(axis=1), zz)
        sup = float(np.max(np.abs(g.apply(np.stack([zz, np.full_like(zz, 0.5)], 1))[:, 0] - raw)))
    dens = generator_density(g, f.shape)
    return RosenblattFit(g, sup, jsd(f, dens))


# ----------------------------------------------------------------------------
# text IO helpers


def _parse_sections(text):
    sections, cur = {}, None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1].strip()
            sections.setdefault(cur, {})
            continue
        if "=" not in line or cur is None:
            raise InputError(f"cannot parse line {raw!r}")
        k, v = line.split("=", 1)
        sections[cur][k.strip()] = v.strip()
    return sections


def _floats(s):
    return np.array([float(t) for t in s.replace(",", " ").split()])


def _cfg_items(cfg):
    for k in ModelConfig.__dataclass_fields__:
        yield k, getattr(cfg, k)


def model_config_from_dict(d):
    unknown = sorted(set(d) - set(ModelConfig.__dataclass_fields__))
    if unknown:
        raise ConfigError(f"unknown model keys: {', '.join(unknown)}")
    kw = {}
    for k, f in ModelConfig.__dataclass_fields__.items():
        if k not in d:
            continue
        v = d[k]
        if isinstance(v, str):
            if v.lower() == "none":
                v = None
            elif k in ("d", "k", "gen_order", "cond_order", "disc_degree", "grid"):
                v = int(v)
            else:
                v = float(v)
        kw[k] = v
    return ModelConfig(**kw)


def save_params(path, g=None, xi=None, cfg=None):
    parts = []
    if g is not None:
        parts.append(g.to_text(cfg))
    if xi is not None:
        parts.append(xi.to_text())
    Path(path).write_text("\n".join(parts))


def load_params(path):
    text = Path(path).read_text()
    sec = _parse_sections(text)
    g = GeneratorParams.from_text(text) if "generator" in sec else None
    xi = DiscriminatorParams.from_text(text) if "discriminator" in sec else None
    cfg = model_config_from_dict(sec["model"]) if "model" in sec else None
    return g, xi, cfg
