"""Grid densities on [0,1]^d and the divergences between them.

Densities are stored as cell averages on a uniform tensor grid, so a
``GridDensity`` is a piecewise-constant density and every divergence below is
the exact divergence between two such piecewise-constant densities (the
midpoint rule when the values are point samples at cell centers).
All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

LN2 = math.log(2.0)
MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Density tabulated on the cells of a uniform grid over [0,1]^d.

    ``values[i0, ..., i_{d-1}]`` is the density on the cell
    ``prod_j [i_j h_j, (i_j + 1) h_j)`` with ``h_j = 1 / shape[j]``.
    """

    values: np.ndarray
    domain: str = "cube"
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.ndim < 1:
            raise InputError("density values need at least one axis")
        if self.domain not in ("cube", "torus"):
            raise InputError(f"unknown domain tag {self.domain!r}")
        if not np.all(np.isfinite(v)):
            raise InputError("density values must be finite")
        if np.any(v < 0):
            raise InputError("density values must be non-negative")
        if self.check and abs(self.mass() - 1.0) > MASS_TOL:
            raise InputError(f"density mass {self.mass():.12g} differs from 1")

    @property
    def dim(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def resolution(self):
        return self.values.shape

    @property
    def cell_volume(self):
        return 1.0 / float(np.prod(self.values.shape))

    def mass(self):
        return float(self.values.sum() * self.cell_volume)

    def min_value(self):
        """Smallest tabulated value (the grid surrogate for kappa)."""
        return float(self.values.min())

    def centers(self):
        """Cell centers as an array of shape ``shape + (d,)``."""
        axes = [(np.arange(r) + 0.5) / r for r in self.shape]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def cell_masses(self):
        return self.values * self.cell_volume

    def same_grid(self, other):
        return self.shape == other.shape

    def evaluate(self, y):
        """Piecewise-constant lookup at points ``y`` of shape (N, d) or (N,)."""
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        idx = []
        for j, r in enumerate(self.shape):
            idx.append(np.clip(np.floor(y[:, j] * r).astype(np.int64), 0, r - 1))
        return self.values[tuple(idx)]

    @classmethod
    def uniform(cls, dim=1, resolution=512, domain="cube"):
        shape = _shape(dim, resolution)
        return cls(np.ones(shape), domain=domain)

    @classmethod
    def from_cell_masses(cls, masses, domain="cube", check=True):
        masses = np.asarray(masses, dtype=float)
        return cls(masses * masses.size, domain=domain, check=check)

    @classmethod
    def from_function(cls, f, dim=1, resolution=512, nodes=4, domain="cube",
                      normalize=False):
        """Tabulate cell averages of a vectorized density ``f`` by Gauss-Legendre.

        ``f`` receives points of shape (N, d) and returns N values.  With
        ``normalize`` the cell averages are rescaled to unit mass, which only
        absorbs quadrature error for an ``f`` that already integrates to one.
        """
        shape = _shape(dim, resolution)
        vals = cell_average(f, shape, nodes)
        if normalize:
            vals = vals / (vals.sum() / vals.size)
        return cls(vals, domain=domain)

    def to_csv(self, path):
        path = Path(path)
        lines = [f"# dims={self.dim} resolution={'x'.join(map(str, self.shape))} domain={self.domain}"]
        lines.append(",".join([f"i{j}" for j in range(self.dim)] + ["value"]))
        for idx in np.ndindex(*self.shape):
            lines.append(",".join([str(i) for i in idx] + [repr(float(self.values[idx]))]))
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def from_csv(cls, path):
        text = Path(path).read_text().splitlines()
        if not text or not text[0].startswith("#"):
            raise InputError(f"{path}: missing density header")
        meta = dict(tok.split("=", 1) for tok in text[0][1:].split())
        shape = tuple(int(s) for s in meta["resolution"].split("x"))
        if len(shape) != int(meta["dims"]):
            raise InputError(f"{path}: dims and resolution disagree")
        vals = np.zeros(shape)
        seen = 0
        for line in text[2:]:
            if not line.strip():
                continue
            parts = line.split(",")
            vals[tuple(int(p) for p in parts[:-1])] = float(parts[-1])
            seen += 1
        if seen != vals.size:
            raise InputError(f"{path}: expected {vals.size} rows, found {seen}")
        return cls(vals, domain=meta.get("domain", "cube"))


def _shape(dim, resolution):
    if isinstance(resolution, (tuple, list)):
        if len(resolution) != dim:
            raise InputError("resolution tuple length must equal dim")
        return tuple(int(r) for r in resolution)
    return (int(resolution),) * int(dim)


def gauss_legendre_unit(nodes):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def composite_gauss(breaks, nodes=8):
    """Composite Gauss-Legendre rule over consecutive intervals of ``breaks``."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre_unit(nodes)
    a, b = breaks[:-1, None], breaks[1:, None]
    pts = a + (b - a) * x[None, :]
    wts = (b - a) * w[None, :]
    return pts.ravel(), wts.ravel()


def cell_average(f, shape, nodes=4):
    """Cell averages of ``f`` over a uniform grid with a tensor Gauss rule."""
    x, w = gauss_legendre_unit(nodes)
    d = len(shape)
    if d == 1:
        r = shape[0]
        pts = ((np.arange(r)[:, None] + x[None, :]) / r).ravel()
        vals = np.asarray(f(pts[:, None]), dtype=float).reshape(r, nodes)
        return vals @ w
    if d == 2:
        r0, r1 = shape
        p0 = ((np.arange(r0)[:, None] + x[None, :]) / r0).ravel()
        p1 = ((np.arange(r1)[:, None] + x[None, :]) / r1).ravel()
        g0, g1 = np.meshgrid(p0, p1, indexing="ij")
        pts = np.stack([g0.ravel(), g1.ravel()], axis=1)
        vals = np.asarray(f(pts), dtype=float).reshape(r0, nodes, r1, nodes)
        return np.einsum("anbm,n,m->ab", vals, w, w)
    raise InputError("cell averages are implemented for d = 1 and d = 2")


def _check_pair(p, q):
    if not isinstance(p, GridDensity) or not isinstance(q, GridDensity):
        raise InputError("divergences take GridDensity arguments")
    if p.shape != q.shape:
        raise InputError(f"grid mismatch: {p.shape} vs {q.shape}")


def _xlogy_ratio(a, b):
    # a * log(a / b) with 0 log 0 = 0; callers guarantee b > 0 where a > 0
    out = np.zeros_like(a)
    pos = a > 0
    out[pos] = a[pos] * np.log(a[pos] / b[pos])
    return out


def kl(p, q):
    """Kullback-Leibler divergence; ``math.inf`` when p is not dominated by q."""
    _check_pair(p, q)
    a, b = p.values, q.values
    if np.any((a > 0) & (b <= 0)):
        return math.inf
    return float(_xlogy_ratio(a, b).sum() * p.cell_volume)


def jsd(p, q):
    """Jensen-Shannon divergence, clipped to the admissible range [0, ln 2]."""
    _check_pair(p, q)
    a, b = p.values, q.values
    m = 0.5 * (a + b)
    val = 0.5 * (_xlogy_ratio(a, m).sum() + _xlogy_ratio(b, m).sum()) * p.cell_volume
    return float(min(max(val, 0.0), LN2))


def tv(p, q):
    """Total variation distance, half the L1 distance of the densities."""
    _check_pair(p, q)
    return float(0.5 * np.abs(p.values - q.values).sum() * p.cell_volume)


def l1(p, q):
    """L1 distance of the densities (twice ``tv``)."""
    return 2.0 * tv(p, q)


def density_from_samples(samples, resolution=64, domain="cube"):
    """Normalized histogram of points in [0,1]^d on a uniform grid."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InputError("density_from_samples needs at least one sample")
    if x.ndim == 1:
        x = x[:, None]
    d = x.shape[1]
    shape = _shape(d, resolution)
    if np.any(x < 0) or np.any(x > 1):
        raise InputError("samples must lie in [0,1]^d")
    flat = np.zeros(x.shape[0], dtype=np.int64)
    for j, r in enumerate(shape):
        idx = np.minimum((x[:, j] * r).astype(np.int64), r - 1)
        flat = flat * r + idx
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    return GridDensity.from_cell_masses(counts / x.shape[0], domain=domain)
