"""Tent-type observable from the torus to the cube and its pushforward densities.

psi(x) = x / (1 - eps) on [0, 1 - eps] and (1 - x) / eps on [1 - eps, 1].
g applies psi coordinate-wise and then an optional warp, a fixed generator
from ``hypothesis``, which makes the learning target non-uniform while keeping
its density analytic.

For a density f_nu on the torus the pushforward under the coordinate-wise psi
is the convex combination

    f(y) = sum_i f_nu(h_i(y)) (1 - eps)^{m(i)} eps^{d - m(i)}

over the 2^d local inverses h_i, where branch 1 is y -> (1 - eps) y and
branch 2 is y -> 1 - eps y, and m(i) counts branch-1 coordinates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .hypothesis import GeneratorParams
from .measures import LN2, MASS_TOL, GridDensity, _shape, cell_average, gauss_legendre_unit


@dataclass(frozen=True, eq=False)
class ObservableConfig:
    eps: float
    dim: int = 1
    warp: GeneratorParams | None = None

    def __post_init__(self):
        if not (0.0 < self.eps < 0.5):
            raise InputError("eps must lie in (0, 1/2)")
        if self.dim < 1:
            raise InputError("dimension must be positive")
        if self.warp is not None:
            if self.warp.dim != self.dim:
                raise InputError("warp dimension does not match the observable")
            self.warp.check_valid()

    @property
    def lipschitz(self):
        """Lipschitz constant of psi (the warp factor is not included)."""
        return 1.0 / self.eps


def psi(x, eps):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1) or np.any(np.isnan(x)):
        raise InputError("psi takes points in [0, 1]")
    out = np.where(x <= 1.0 - eps, x / (1.0 - eps), (1.0 - x) / eps)
    return float(out) if out.ndim == 0 else out


def apply_g(cfg, x):
    """psi per coordinate, then the warp if configured.

    Accepts a single point of shape (d,) (or a scalar when d = 1), a batch of
    shape (N, d), or for d = 1 a flat batch of shape (N,); the output has the
    input's shape.
    """
    x = np.asarray(x, dtype=float)
    if cfg.dim == 1 and x.ndim <= 1:
        pts = x.reshape(-1, 1)
    elif x.ndim == 1:
        pts = x[None, :]
    else:
        pts = x
    if pts.ndim != 2 or pts.shape[1] != cfg.dim:
        raise InputError(f"point shape {x.shape} does not match observable dimension {cfg.dim}")
    y = psi(pts, cfg.eps)
    if cfg.warp is not None:
        y = cfg.warp.apply(y)
    if x.ndim == 0:
        return float(y[0, 0])
    return y.reshape(x.shape)


def branch_weights(eps, d):
    """Pairs (branch tuple, weight) over {1,2}^d; weights sum to one."""
    out = []
    for br in itertools.product((1, 2), repeat=d):
        m = sum(1 for b in br if b == 1)
        out.append((br, (1.0 - eps) ** m * eps ** (d - m)))
    return out


def _h(branch, y, eps):
    return (1.0 - eps) * y if branch == 1 else 1.0 - eps * y


def psi_density_pointwise(f_nu, y, eps):
    """Density of psi_* nu at points y of shape (N, d) for a callable f_nu."""
    y = np.asarray(y, dtype=float)
    d = y.shape[1]
    out = np.zeros(y.shape[0])
    for br, w in branch_weights(eps, d):
        x = np.stack([_h(b, y[:, j], eps) for j, b in enumerate(br)], axis=1)
        out += w * np.asarray(f_nu(x), dtype=float)
    return out


def _cum_table(f):
    """Cumulative mass table C[i0, .., i_{d-1}] of a grid density (zero-padded)."""
    c = f.cell_masses()
    for ax in range(c.ndim):
        c = np.cumsum(c, axis=ax)
        pad = [(0, 0)] * c.ndim
        pad[ax] = (1, 0)
        c = np.pad(c, pad)
    return c


def _grid_cdf(f, cum, t):
    """Exact CDF of a piecewise-constant density at corner points t of shape (N, d)."""
    d = f.dim
    if d == 1:
        r = f.shape[0]
        u = np.clip(t[:, 0], 0.0, 1.0) * r
        i = np.minimum(np.floor(u).astype(np.int64), r - 1)
        frac = u - i
        return cum[i] + frac * (cum[i + 1] - cum[i])
    if d == 2:
        r0, r1 = f.shape
        u0 = np.clip(t[:, 0], 0.0, 1.0) * r0
        u1 = np.clip(t[:, 1], 0.0, 1.0) * r1
        i0 = np.minimum(np.floor(u0).astype(np.int64), r0 - 1)
        i1 = np.minimum(np.floor(u1).astype(np.int64), r1 - 1)
        a, b = u0 - i0, u1 - i1
        # bilinear interpolation of the cumulative table is exact here
        return ((1 - a) * (1 - b) * cum[i0, i1] + a * (1 - b) * cum[i0 + 1, i1]
                + (1 - a) * b * cum[i0, i1 + 1] + a * b * cum[i0 + 1, i1 + 1])
    raise InputError("grid pushforward is implemented for d <= 2")


def _psi_cdf(f, cum, t, eps):
    """P_nu(psi(X) <= t) per coordinate box, exact for grid densities.

    psi^{-1}([0, t]) = [0, (1 - eps) t] u [1 - eps t, 1] in each coordinate.
    """
    d = f.dim
    total = np.zeros(t.shape[0])
    for choice in itertools.product((0, 1), repeat=d):
        # choice 0: lower interval [0, (1-eps)t]; 1: upper interval [1 - eps t, 1]
        lo = np.zeros_like(t)
        hi = np.zeros_like(t)
        for j, c in enumerate(choice):
            if c == 0:
                lo[:, j], hi[:, j] = 0.0, (1.0 - eps) * t[:, j]
            else:
                lo[:, j], hi[:, j] = 1.0 - eps * t[:, j], 1.0
        # inclusion-exclusion over the corners of the box [lo, hi]
        mass = np.zeros(t.shape[0])
        for corner in itertools.product((0, 1), repeat=d):
            pt = np.stack([hi[:, j] if c else lo[:, j] for j, c in enumerate(corner)], axis=1)
            sign = (-1) ** (d - sum(corner))
            mass += sign * _grid_cdf(f, cum, pt)
        total += mass
    return total


def pushforward_density(cfg, f_nu, resolution=None, nodes=8):
    """Density of mu = (warp o psi)_* nu on the cube grid.

    A ``GridDensity`` input is treated as the piecewise-constant density it
    represents and pushed forward exactly through cell CDF differences (d = 1,
    or d = 2 without warp).  A callable input, or a 2-d warp, uses Gauss
    quadrature of the pointwise formula per output cell.
    """
    d = cfg.dim
    if isinstance(f_nu, GridDensity):
        if f_nu.dim != d:
            raise InputError("density dimension does not match the observable")
        if abs(f_nu.mass() - 1.0) > MASS_TOL:
            raise InputError("input density is not normalized")
        shape = _shape(d, resolution) if resolution is not None else f_nu.shape
        cum = _cum_table(f_nu)
        if d == 1 or cfg.warp is None:
            edges = [np.arange(r + 1) / r for r in shape]
            if d == 1:
                e = edges[0]
                if cfg.warp is not None:
                    e = cfg.warp._c1.cdf_exact(e)
                    e[0], e[-1] = 0.0, 1.0
                F = _psi_cdf(f_nu, cum, e[:, None], cfg.eps)
                masses = np.diff(F)
            else:
                g0, g1 = np.meshgrid(edges[0], edges[1], indexing="ij")
                F = _psi_cdf(f_nu, cum, np.stack([g0.ravel(), g1.ravel()], 1), cfg.eps)
                F = F.reshape(g0.shape)
                masses = F[1:, 1:] - F[:-1, 1:] - F[1:, :-1] + F[:-1, :-1]
            masses = np.maximum(masses, 0.0)
            return GridDensity.from_cell_masses(masses, domain="cube", check=True)
        fn = f_nu.evaluate
    elif callable(f_nu):
        fn = f_nu
        shape = _shape(d, resolution or (512 if d == 1 else 256))
    else:
        raise InputError("f_nu must be a GridDensity or a callable density")

    def dens(y):
        if cfg.warp is None:
            return psi_density_pointwise(fn, y, cfg.eps)
        z = cfg.warp.inverse(y)
        return psi_density_pointwise(fn, z, cfg.eps) * cfg.warp.density(y)

    vals = cell_average(dens, shape, nodes)
    out = GridDensity(vals, domain="cube", check=False)
    if abs(out.mass() - 1.0) > 1e-6:
        raise InputError(f"pushforward mass {out.mass():.9g}: input density not normalized")
    # quadrature leaves O(1e-12) mass error; renormalize to the exact total
    return GridDensity(vals / out.mass(), domain="cube")


def pushforward_pointwise(cfg, f_nu, y):
    """Pointwise density of mu at y of shape (N, d) for a callable f_nu."""
    y = np.asarray(y, dtype=float).reshape(-1, cfg.dim)
    if cfg.warp is None:
        return psi_density_pointwise(f_nu, y, cfg.eps)
    z = cfg.warp.inverse(y)
    return psi_density_pointwise(f_nu, z, cfg.eps) * cfg.warp.density(y)


def jsd_approximation_bound(cfg, M_norm):
    """(ln 2 / 2) (2^d + d - 1) M eps."""
    if M_norm < 0:
        raise InputError("M_norm must be non-negative")
    d = cfg.dim
    return 0.5 * LN2 * (2 ** d + d - 1) * M_norm * cfg.eps


def sup_bound(cfg, M_norm):
    """(2^d + d - 1) M eps, the pointwise bound on |f_nu - f_mu|."""
    return (2 ** cfg.dim + cfg.dim - 1) * M_norm * cfg.eps


def observable_nodes(cfg, per_piece=64, nodes=8, f_nu=None):
    """Quadrature (points, weights) for E_mu[h] = int h(g(x)) f_nu(x) dx.

    Panels are split at 1 - eps so the rule is smooth on each piece of psi.
    """
    e = cfg.eps
    b1 = np.linspace(0.0, 1.0 - e, per_piece + 1)
    b2 = np.linspace(1.0 - e, 1.0, max(4, int(math.ceil(per_piece * e / (1 - e)))) + 1)
    x, w = gauss_legendre_unit(nodes)
    breaks = np.concatenate([b1, b2[1:]])
    a, b = breaks[:-1, None], breaks[1:, None]
    px = (a + (b - a) * x).ravel()
    pw = ((b - a) * w).ravel()
    if cfg.dim == 1:
        pts = px[:, None]
        wts = pw
    else:
        g0, g1 = np.meshgrid(px, px, indexing="ij")
        pts = np.stack([g0.ravel(), g1.ravel()], 1)
        wts = np.outer(pw, pw).ravel()
    if f_nu is not None:
        wts = wts * np.asarray(f_nu(pts), dtype=float)
    return apply_g(cfg, pts).reshape(-1, cfg.dim), wts
