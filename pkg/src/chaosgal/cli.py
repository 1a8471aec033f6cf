"""Command line entry point.

Exit codes: 0 when every check passes, 1 when an acceptance check fails,
2 on bad input (arguments, config files, data).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import experiment as ex
from . import suites
from .dynamics import make_system, sample_trajectory
from .entropy import write_entropy_csv
from .errors import AuditFailure, ConfigError, DegenerateGeneratorError, InputError, TrainingError
from .hypothesis import generator_density, save_params
from .measures import jsd

log = logging.getLogger("chaosgal")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _section(args, name):
    return args.sections.get(name, {})


def _get(sec, key, cast, default):
    if key not in sec:
        return default
    try:
        return cast(sec[key])
    except ValueError as exc:
        raise InputError(f"bad value for {key}: {sec[key]!r}") from exc


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _report(rows):
    ok = True
    for check, value, threshold, passed in rows:
        print(f"{'PASS' if passed else 'FAIL'} {check} value={float(value):.6g} threshold={float(threshold):.6g}")
        ok &= bool(passed)
    return EXIT_OK if ok else EXIT_FAIL


def _seed(args, sec, default=0):
    return args.seed if args.seed is not None else _get(sec, "seed", int, default)


# ----------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    sec = _section(args, "simulate")
    system = args.system or sec.get("system", "doubling")
    n = args.n or _get(sec, "n", int, 1000)
    seed = _seed(args, sec)
    tr = sample_trajectory(make_system(system), n, seed)
    cols = [tr.states]
    names = [f"x{i}" for i in range(tr.states.shape[1])]
    eps = args.eps if args.eps is not None else _get(sec, "eps", float, None)
    if eps is not None:
        cfg = ex.experiment_config(args.sections, system=system, eps=eps)
        oc, _ = ex.observable_config(cfg)
        from .observable import apply_g
        cols.append(apply_g(oc, tr.states).reshape(n, -1))
        names += [f"y{i}" for i in range(oc.dim)]
    data = np.hstack(cols)
    path = _out(args, "trajectory.csv")
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(f"wrote {n} states of {system} to {path}")
    return EXIT_OK


def cmd_tower_check(args):
    sec = _section(args, "tower")
    spec = None
    path = args.spec or sec.get("spec")
    if path:
        from .tower import load_tower_spec
        spec = load_tower_spec(path)
    rows = suites.tower_suite(spec, samples=_get(sec, "samples", int, 10_000),
                              tail_n=_get(sec, "tail_n", int, 40),
                              invariance_samples=_get(sec, "invariance_samples", int, 1_000_000),
                              seed=_seed(args, sec))
    suites.write_rows(rows, _out(args, "tower_verdicts.csv"))
    return _report(rows)


def cmd_train(args):
    overrides = {}
    if args.system:
        overrides["system"] = args.system
    if args.eps is not None:
        overrides["eps"] = args.eps
    cfg = ex.experiment_config(args.sections, **overrides)
    sec = _section(args, "experiment")
    n = args.n or _get(sec, "n", int, 2 ** 14)
    seed = _seed(args, sec)
    oc, model = ex.observable_config(cfg)
    from .observable import apply_g
    from .risk import (ObservableTarget, decomposition_audit, generalization_error_lambda,
                       generalization_error_mu, measure_model_errors, train_gal)
    target = ObservableTarget(oc)
    if args.source == "iid":
        X = np.random.default_rng([seed, 5]).random((n, oc.dim))
    else:
        X = sample_trajectory(make_system(cfg.system), n, seed).states
    Y = apply_g(oc, X)
    Z = np.random.default_rng([seed, 3]).random((n, oc.dim))
    try:
        res = train_gal(Y, seed, model, cfg.train, Z)
    except (TrainingError, DegenerateGeneratorError) as exc:
        print(f"FAIL training: {exc}")
        return EXIT_FAIL
    f_mu = target.grid_density(model.resolution)
    j = float(jsd(f_mu, generator_density(res.generator, model.resolution)))
    save_params(_out(args, "params.txt"), res.generator, res.discriminator, model)
    with open(_out(args, "train_log.csv"), "w") as fh:
        fh.write(res.log_csv())
    rows = [("jsd", j), ("loss", float(res.loss)), ("converged", int(res.converged)),
            ("restart", res.restart)]
    status = EXIT_OK
    if args.audit:
        gmu = generalization_error_mu(Y, target, model, seed=seed)
        glam = generalization_error_lambda(Z, model, seed=seed)
        me = measure_model_errors(f_mu, model, probes=[res.generator], seed=seed)
        rep = decomposition_audit(f_mu, res.generator, gmu, glam, me, strict=False)
        rows += [("eps_gen_mu", gmu), ("eps_gen_lambda", glam), ("eps_model_G", me.eps_model_G),
                 ("eps_model_D", me.eps_model_D), ("bound", rep.bound), ("slack", rep.slack)]
        print(f"{'PASS' if rep.passed else 'FAIL'} decomposition jsd={rep.jsd_achieved:.6g} "
              f"bound={rep.bound:.6g}+{rep.tolerance}")
        status = EXIT_OK if rep.passed else EXIT_FAIL
    with open(_out(args, "train_summary.csv"), "w") as fh:
        fh.write("key,value\n")
        for k, v in rows:
            fh.write(f"{k},{v!r}\n")
    print(f"jsd {j:.6g} loss {res.loss:.6g} converged {res.converged}")
    return status


def cmd_rates(args):
    overrides = {"out": args.out}
    if args.oracle:
        overrides["kind"] = "oracle"
    if args.n_grid:
        overrides["n_grid"] = ex.parse_int_list(args.n_grid)
    cfg = ex.experiment_config(args.sections, **overrides)
    if args.seed is not None:
        cfg = replace(cfg, seeds=tuple(args.seed + i for i in range(len(cfg.seeds))))

    def progress(n, s):
        log.info("cell n=%d seed=%d done", n, s)

    rep = ex.run_rate_experiment(cfg, threads=args.threads, progress=progress)
    for path in ex.emit_reports(rep, args.out):
        log.info("wrote %s", path)
    for k, v in ex.summary_rows(rep):
        print(f"{k} {v}")
    for k, ok in sorted(rep.passes.items()):
        print(f"{'PASS' if ok else 'FAIL'} {k}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_concentration(args):
    sec = _section(args, "concentration")
    tail_rows = []
    rows = suites.concentration_suite(
        iid_n=_get(sec, "iid_n", int, 100),
        iid_replicas=_get(sec, "iid_replicas", int, 10_000),
        var_grid=ex.parse_int_list(sec.get("var_grid", "2^6..2^14")),
        var_replicas=_get(sec, "var_replicas", int, 2000),
        cg_ns=ex.parse_int_list(sec.get("cg_ns", "256 1024 4096")),
        cg_replicas=_get(sec, "cg_replicas", int, 4000),
        seed=_seed(args, sec), tail_rows=tail_rows)
    with open(_out(args, "tails.csv"), "w") as fh:
        fh.write("t,empirical_tail,bound_tail,pass\n")
        for t, e, b, p in tail_rows:
            fh.write(f"{t!r},{e!r},{b!r},{int(p)}\n")
    suites.write_rows(rows, _out(args, "concentration_verdicts.csv"))
    return _report(rows)


def cmd_entropy(args):
    sec = _section(args, "entropy")
    eps = sec.get("epsilons")
    eps = tuple(float(t) for t in eps.replace(",", " ").split()) if eps else (0.5, 0.25, 0.125, 0.0625)
    reports = []
    rows = suites.entropy_suite(epsilons=eps, probes=_get(sec, "probes", int, 1000),
                                c1_eps=_get(sec, "c1_eps", float, 0.25),
                                c1_probes=_get(sec, "c1_probes", int, 500),
                                spaces=_get(sec, "spaces", int, 30), seed=_seed(args, sec),
                                reports=reports)
    write_entropy_csv(reports, _out(args, "entropy.csv"))
    suites.write_rows(rows, _out(args, "entropy_verdicts.csv"))
    return _report(rows)


# ----------------------------------------------------------------------------


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _global_flags(suppress):
    # flags given before and after the subcommand both work; the subcommand
    # copy must not overwrite values parsed at the top level
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="key = value config file with sections")
    common.add_argument("--seed", type=_u64, default=d(None), help="master seed")
    common.add_argument("--out", default=d("out"), help="output directory (default: out)")
    common.add_argument("--threads", type=_positive, default=d(1), help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser():
    top = _global_flags(False)
    common = _global_flags(True)

    p = argparse.ArgumentParser(prog="chaosgal", parents=[top],
                                description="Generative adversarial learning from chaotic trajectories.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a trajectory (and its observable)")
    s.add_argument("--system", choices=["doubling", "cat", "torus3d"])
    s.add_argument("--n", type=_positive)
    s.add_argument("--eps", type=float, help="also apply the observable with this eps")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("tower-check", parents=[common], help="Young tower checks")
    s.add_argument("--spec", help="tower spec file (default: doubling-map tower)")
    s.set_defaults(func=cmd_tower_check)

    s = sub.add_parser("train", parents=[common], help="train one model")
    s.add_argument("--system", choices=["doubling", "cat"])
    s.add_argument("--n", type=_positive)
    s.add_argument("--eps", type=float)
    s.add_argument("--source", choices=["trajectory", "iid"], default="trajectory")
    s.add_argument("--audit", action="store_true", help="run the error decomposition audit")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("rates", parents=[common], help="rate experiment over an n grid")
    s.add_argument("--oracle", action="store_true", help="synthetic jsd = n^-1/2")
    s.add_argument("--n-grid", help="e.g. '2^8..2^16' or '256 512 1024'")
    s.set_defaults(func=cmd_rates)

    s = sub.add_parser("concentration", parents=[common], help="concentration checks")
    s.set_defaults(func=cmd_concentration)

    s = sub.add_parser("entropy", parents=[common], help="covering-number checks")
    s.set_defaults(func=cmd_entropy)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.sections = ex.read_config(args.config) if args.config else {}
        return args.func(args)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AuditFailure as exc:
        print(f"FAIL {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
