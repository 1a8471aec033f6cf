"""End-to-end rate experiments: data, training, divergences, fits and reports.

A cell is one (n, seed) pair.  Each cell draws one long trajectory (and, for
the baseline, one i.i.d. sample) from the seed and uses its first n points,
so the grid is nested.  The latent sample Z is shared between sources, which
makes the latent generalization error a property of the cell rather than of
the source.
"""

from __future__ import annotations

import configparser
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .dynamics import make_system, sample_trajectory
from .errors import ConfigError, DegenerateGeneratorError, InputError, TrainingError
from .hypothesis import ModelConfig, generator_density, model_config_from_dict, random_generator
from .measures import LN2, jsd
from .observable import ObservableConfig, apply_g
from .risk import (ObservableTarget, TrainConfig, generalization_error_lambda,
                   generalization_error_mu, train_gal)

SOURCES = ("trajectory", "iid")

# thresholds of the scaled-down rate checks
SLOPE_RANGE = (-0.7, -0.3)
GEN_SLOPE_RANGE = (-0.65, -0.35)
IID_SLOPE_GAP = 0.15


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "rates"  # or "oracle"
    system: str = "doubling"
    sources: tuple = SOURCES
    eps: float = 0.1
    warp_seed: int | None = 7
    warp_spread: float = 0.5
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_grid: tuple = tuple(2 ** e for e in range(8, 17))
    seeds: tuple = (0, 1, 2, 3, 4)
    out: str = "out"
    resolution: int | None = None
    gen_restarts: int = 8
    net_size: int = 64
    measure_gen: bool = True

    def __post_init__(self):
        if self.kind not in ("rates", "oracle"):
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        grid = list(self.n_grid)
        if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid must be strictly increasing with at least two entries")
        if grid[0] < 2:
            raise ConfigError("n_grid entries must be at least 2")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        for s in self.sources:
            if s not in SOURCES:
                raise ConfigError(f"unknown data source {s!r}")
        if not self.sources:
            raise ConfigError("need at least one data source")

    @property
    def dim(self):
        return make_system(self.system).dim


def observable_config(cfg):
    d = cfg.dim
    model = cfg.model if cfg.model.d == d else replace(cfg.model, d=d)
    warp = None
    if cfg.warp_seed is not None:
        warp = random_generator(np.random.default_rng(cfg.warp_seed), model, cfg.warp_spread)
    return ObservableConfig(cfg.eps, d, warp), model


# ----------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class Cell:
    source: str
    n: int
    seed: int
    jsd: float
    eps_gen_mu: float
    eps_gen_lambda: float
    converged: bool
    loss: float
    flag: str = ""

    @property
    def ok(self):
        return not self.flag and math.isfinite(self.jsd)


def _cell_data(cfg, oc, n, seed):
    n_max = cfg.n_grid[-1]
    d = oc.dim
    data = {}
    if "trajectory" in cfg.sources:
        X = sample_trajectory(make_system(cfg.system), n_max, seed).states[:n]
        data["trajectory"] = apply_g(oc, X)
    if "iid" in cfg.sources:
        X = np.random.default_rng([seed, 5]).random((n_max, d))[:n]
        data["iid"] = apply_g(oc, X)
    Z = np.random.default_rng([seed, 3]).random((n_max, d))[:n]
    return data, Z


def run_cell(cfg, n, seed):
    """All sources of one (n, seed) cell, single-threaded BLAS."""
    with threadpool_limits(limits=1):
        return _run_cell(cfg, n, seed)


def _run_cell(cfg, n, seed):
    oc, model = observable_config(cfg)
    target = ObservableTarget(oc)
    res = cfg.resolution or model.resolution
    f_mu = target.grid_density(res)
    data, Z = _cell_data(cfg, oc, n, seed)
    glam = float("nan")
    if cfg.measure_gen:
        glam = float(generalization_error_lambda(Z, model, restarts=cfg.gen_restarts,
                                                 net_size=cfg.net_size, seed=seed))
    out = []
    for src in cfg.sources:
        Y = data[src]
        try:
            tr = train_gal(Y, seed, model, cfg.train, Z)
            j = float(jsd(f_mu, generator_density(tr.generator, res)))
            conv, loss, flag = bool(tr.converged), float(tr.loss), ""
        except (TrainingError, DegenerateGeneratorError) as exc:
            j, conv, loss, flag = float("nan"), False, float("nan"), type(exc).__name__
        gmu = float("nan")
        if cfg.measure_gen:
            gmu = float(generalization_error_mu(Y, target, model, restarts=cfg.gen_restarts,
                                                net_size=cfg.net_size, seed=seed))
        out.append(Cell(src, int(n), int(seed), j, gmu, glam, conv, loss, flag))
    return out


def _oracle_cells(cfg):
    out = []
    for src in cfg.sources:
        for n in cfg.n_grid:
            for s in cfg.seeds:
                v = float(n) ** -0.5
                out.append(Cell(src, int(n), int(s), v, v, v, True, v - LN2))
    return out


# ----------------------------------------------------------------------------
# fits


def fit_loglog_slope(points):
    """Least-squares slope of log(value) against log(n)."""
    pts = list(points)
    if len(pts) < 2:
        raise InputError("need at least two points to fit a slope")
    n = np.array([float(p[0]) for p in pts])
    v = np.array([float(p[1]) for p in pts])
    if np.any(n <= 0) or np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise InputError("slope fitting needs positive n and positive finite values")
    x, y = np.log(n), np.log(v)
    if np.ptp(x) == 0:
        raise InputError("need at least two distinct n")
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def median_by_n(cells, attr, keep=None):
    """[(n, median over seeds)] using cells that pass ``keep``."""
    groups = {}
    for c in cells:
        if keep is not None and not keep(c):
            continue
        v = getattr(c, attr)
        if math.isfinite(v):
            groups.setdefault(c.n, []).append(v)
    return [(n, float(np.median(groups[n]))) for n in sorted(groups)]


def envelope_rate(n):
    return math.sqrt(math.log(n) / n)


def fit_envelope(cells, n0):
    """Smallest tau with jsd <= tau sqrt(log n / n) for every cell with n > n0."""
    ratios = [c.jsd / envelope_rate(c.n) for c in cells if c.n > n0 and math.isfinite(c.jsd)]
    if not ratios:
        return float("nan")
    return float(max(ratios))


def envelope_start(cells, tau, grid):
    """Smallest grid n from which every later cell lies under the envelope."""
    if not math.isfinite(tau):
        return None
    start = None
    for n in reversed(list(grid)):
        ok = all(c.jsd <= tau * envelope_rate(c.n) for c in cells
                 if c.n == n and math.isfinite(c.jsd))
        if not ok:
            break
        start = n
    return start


def _safe_slope(points):
    try:
        return fit_loglog_slope(points)
    except InputError:
        return float("nan")


@dataclass
class RateReport:
    cells: list
    n_grid: tuple
    source: str
    fitted_slope: float
    fitted_tau: float
    fitted_tau_converged: float
    envelope_from: int | None
    slopes: dict
    gen_mu_slope: float
    gen_lambda_slope: float
    flagged: int
    passes: dict

    @property
    def rows(self):
        return [c for c in self.cells if c.source == self.source]

    @property
    def passed(self):
        return all(self.passes.values())


def _in(v, lo_hi):
    return math.isfinite(v) and lo_hi[0] <= v <= lo_hi[1]


def summarize(cells, cfg):
    cells = sorted(cells, key=lambda c: (SOURCES.index(c.source), c.n, c.seed))
    primary = cfg.sources[0]
    slopes = {}
    for src in cfg.sources:
        sc = [c for c in cells if c.source == src]
        slopes[src] = _safe_slope(median_by_n(sc, "jsd", lambda c: c.ok))
        slopes[src + "_converged"] = _safe_slope(
            median_by_n(sc, "jsd", lambda c: c.ok and c.converged))
    prim = [c for c in cells if c.source == primary and c.ok]
    n0 = cfg.n_grid[0]
    tau = fit_envelope(prim, n0)
    tau_c = fit_envelope([c for c in prim if c.converged], n0)
    gmu = _safe_slope(median_by_n(prim, "eps_gen_mu"))
    glam = _safe_slope(median_by_n(prim, "eps_gen_lambda"))
    passes = {
        "slope": _in(slopes[primary], SLOPE_RANGE),
        "envelope": math.isfinite(tau),
        "gen_mu_slope": _in(gmu, GEN_SLOPE_RANGE),
        "gen_lambda_slope": _in(glam, GEN_SLOPE_RANGE),
    }
    if "iid" in cfg.sources and primary != "iid":
        gap = abs(slopes["iid"] - slopes[primary])
        passes["iid_gap"] = math.isfinite(gap) and gap <= IID_SLOPE_GAP
    if not cfg.measure_gen:
        del passes["gen_mu_slope"], passes["gen_lambda_slope"]
    return RateReport(cells, tuple(cfg.n_grid), primary, slopes[primary], tau, tau_c,
                      envelope_start(prim, tau, cfg.n_grid), slopes, gmu, glam,
                      sum(1 for c in cells if c.flag), passes)


def run_rate_experiment(cfg, threads=1, progress=None):
    """Run every (n, seed) cell and summarize; cells are sorted before aggregation."""
    if cfg.kind == "oracle":
        return summarize(_oracle_cells(cfg), cfg)
    tasks = [(n, s) for n in cfg.n_grid for s in cfg.seeds]
    # largest cells first balances the pool
    tasks.sort(key=lambda t: (-t[0], t[1]))
    cells = []
    if threads <= 1:
        for n, s in tasks:
            cells.extend(run_cell(cfg, n, s))
            if progress:
                progress(n, s)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futs = [(t, pool.submit(run_cell, cfg, *t)) for t in tasks]
            for (n, s), f in futs:
                cells.extend(f.result())
                if progress:
                    progress(n, s)
    return summarize(cells, cfg)


# ----------------------------------------------------------------------------
# reports


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return repr(float(v))


def rates_csv(cells):
    lines = ["n,seed,jsd,eps_gen_mu,eps_gen_lambda"]
    for c in sorted(cells, key=lambda c: (c.n, c.seed)):
        lines.append(",".join(_fmt(v) for v in (c.n, c.seed, c.jsd, c.eps_gen_mu,
                                                  c.eps_gen_lambda)))
    return "\n".join(lines) + "\n"


def cells_csv(cells):
    lines = ["source,n,seed,jsd,eps_gen_mu,eps_gen_lambda,converged,loss,flag"]
    for c in cells:
        lines.append(",".join([c.source] + [_fmt(v) for v in (
            c.n, c.seed, c.jsd, c.eps_gen_mu, c.eps_gen_lambda, c.converged, c.loss)] + [c.flag]))
    return "\n".join(lines) + "\n"


def summary_rows(report):
    rows = [("source", report.source),
            ("fitted_slope", _fmt(report.fitted_slope)),
            ("fitted_tau", _fmt(report.fitted_tau)),
            ("fitted_tau_converged", _fmt(report.fitted_tau_converged)),
            ("envelope_from", _fmt(report.envelope_from)),
            ("gen_mu_slope", _fmt(report.gen_mu_slope)),
            ("gen_lambda_slope", _fmt(report.gen_lambda_slope)),
            ("flagged_cells", _fmt(report.flagged))]
    for k in sorted(report.slopes):
        rows.append((f"slope_{k}", _fmt(report.slopes[k])))
    for k in sorted(report.passes):
        rows.append((f"pass_{k}", _fmt(report.passes[k])))
    return rows


def svg_plot(report, width=640, height=440):
    """Log-log plot of jsd per cell, median line and the fitted envelope."""
    rows = [c for c in report.rows if c.ok and c.jsd > 0]
    if not rows:
        return None
    grid = report.n_grid
    tau = report.fitted_tau
    env = [(n, tau * envelope_rate(n)) for n in grid] if math.isfinite(tau) else []
    med = median_by_n(rows, "jsd")
    ys = [c.jsd for c in rows] + [v for _, v in env]
    lx0, lx1 = math.log10(grid[0]), math.log10(grid[-1])
    ly0, ly1 = math.log10(min(ys)), math.log10(max(ys))
    if ly1 - ly0 < 1e-9:
        ly0, ly1 = ly0 - 0.5, ly1 + 0.5
    m = 56

    def px(n):
        return m + (math.log10(n) - lx0) / (lx1 - lx0) * (width - 2 * m)

    def py(v):
        return height - m - (math.log10(v) - ly0) / (ly1 - ly0) * (height - 2 * m)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>']
    for n in grid:
        out.append(f'<text x="{px(n):.2f}" y="{height - m + 18}" font-size="11" '
                   f'text-anchor="middle">2^{int(round(math.log2(n)))}</text>')
    for e in range(math.ceil(ly0), math.floor(ly1) + 1):
        out.append(f'<text x="{m - 6}" y="{py(10.0 ** e) + 4:.2f}" font-size="11" '
                   f'text-anchor="end">1e{e}</text>')
    for c in rows:
        out.append(f'<circle cx="{px(c.n):.2f}" cy="{py(c.jsd):.2f}" r="2.5" fill="#4477aa" '
                   f'fill-opacity="0.6"/>')
    if len(med) > 1:
        pts = " ".join(f"{px(n):.2f},{py(v):.2f}" for n, v in med)
        out.append(f'<polyline class="median" points="{pts}" fill="none" stroke="#4477aa" '
                   f'stroke-width="2"/>')
    if env:
        pts = " ".join(f"{px(n):.2f},{py(v):.2f}" for n, v in env)
        out.append(f'<polyline class="envelope" points="{pts}" fill="none" stroke="#cc3311" '
                   f'stroke-dasharray="6,4" stroke-width="1.5"/>')
    out.append(f'<text x="{width / 2:.0f}" y="{height - 14}" font-size="12" '
               f'text-anchor="middle">n</text>')
    out.append(f'<text x="14" y="{height / 2:.0f}" font-size="12" '
               f'transform="rotate(-90 14 {height / 2:.0f})" text-anchor="middle">jsd</text>')
    out.append(f'<text x="{width - m}" y="{m - 12}" font-size="11" text-anchor="end">'
               f'slope {report.fitted_slope:.3f}, tau {tau:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from exc


def emit_reports(report, out_dir):
    """rates.csv (primary source), rates_<source>.csv, cells.csv, summary.csv, rates.svg."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out_dir}: {exc.strerror}") from exc
    written = []
    p = os.path.join(out_dir, "rates.csv")
    _write(p, rates_csv(report.rows))
    written.append(p)
    for src in sorted({c.source for c in report.cells} - {report.source}):
        p = os.path.join(out_dir, f"rates_{src}.csv")
        _write(p, rates_csv([c for c in report.cells if c.source == src]))
        written.append(p)
    p = os.path.join(out_dir, "cells.csv")
    _write(p, cells_csv(report.cells))
    written.append(p)
    p = os.path.join(out_dir, "summary.csv")
    _write(p, "key,value\n" + "".join(f"{k},{v}\n" for k, v in summary_rows(report)))
    written.append(p)
    svg = svg_plot(report)
    if svg is not None:
        p = os.path.join(out_dir, "rates.svg")
        _write(p, svg)
        written.append(p)
    return written


# ----------------------------------------------------------------------------
# configuration files


def read_config(path):
    """Sections of a key = value file as plain dicts."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # model keys such as B, K, C1 are case sensitive
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise InputError(f"malformed config {path}: {exc}") from exc
    return {s: dict(cp[s]) for s in cp.sections()}


def parse_int_list(text):
    """Whitespace or comma separated integers; 'a^b' tokens and 'a^b..a^c' ranges allowed."""
    out = []
    for tok in text.replace(",", " ").split():
        if ".." in tok:
            lo, hi = tok.split("..", 1)
            if "^" in lo and "^" in hi:
                b0, e0 = lo.split("^")
                b1, e1 = hi.split("^")
                if b0 != b1:
                    raise InputError(f"range {tok!r} mixes bases")
                out.extend(int(b0) ** e for e in range(int(e0), int(e1) + 1))
            else:
                out.extend(range(int(lo), int(hi) + 1))
        elif "^" in tok:
            b, e = tok.split("^")
            out.append(int(b) ** int(e))
        else:
            out.append(int(tok))
    return tuple(out)


def _train_config(d):
    unknown = sorted(set(d) - set(TrainConfig.__dataclass_fields__))
    if unknown:
        raise ConfigError(f"unknown train keys: {', '.join(unknown)}")
    kw = {}
    for k, f in TrainConfig.__dataclass_fields__.items():
        if k in d:
            kw[k] = d[k] if k == "solver" else (int(d[k]) if f.type == "int" else float(d[k]))
    return TrainConfig(**kw)


def experiment_config(sections=None, **overrides):
    """ExperimentConfig from config sections ([experiment], [model], [train], [observable])."""
    sections = sections or {}
    ex = dict(sections.get("experiment", {}))
    ob = sections.get("observable", {})
    kw = {}
    try:
        if "kind" in ex:
            kw["kind"] = ex["kind"]
        if "system" in ex:
            kw["system"] = ex["system"]
        if "sources" in ex:
            kw["sources"] = tuple(ex["sources"].replace(",", " ").split())
        if "n_grid" in ex:
            kw["n_grid"] = parse_int_list(ex["n_grid"])
        if "seeds" in ex:
            kw["seeds"] = parse_int_list(ex["seeds"])
        for k in ("resolution", "gen_restarts", "net_size"):
            if k in ex:
                kw[k] = int(ex[k])
        if "measure_gen" in ex:
            kw["measure_gen"] = ex["measure_gen"].lower() in ("1", "true", "yes", "on")
        if "eps" in ob:
            kw["eps"] = float(ob["eps"])
        if "warp_seed" in ob:
            kw["warp_seed"] = None if ob["warp_seed"].lower() == "none" else int(ob["warp_seed"])
        if "warp_spread" in ob:
            kw["warp_spread"] = float(ob["warp_spread"])
        if "model" in sections:
            kw["model"] = model_config_from_dict(sections["model"])
        if "train" in sections:
            kw["train"] = _train_config(sections["train"])
    except ValueError as exc:
        if isinstance(exc, (InputError, ConfigError)):
            raise
        raise InputError(f"bad config value: {exc}") from exc
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw)
