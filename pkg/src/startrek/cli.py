"""Command-line entry point: ``startrek <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error. Machine
output goes to files under ``--out``; stdout carries progress lines only.
"""

import argparse
import csv
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ._version import __version__
from .errors import ConfigError, InvalidInput, ParseError, StarTrekError
from .ggm import GGMBootstrap, build_scores, fit_ggm
from .graphgen import KINDS, generate_graph, ground_truth, sample_gaussian
from .harness import (
    ExperimentConfig,
    ar1_perturbed_pair,
    counterexample_pair,
    default_t_grid,
    run_experiment,
    verify_ccb,
)
from .io import load_matrix, preprocess, read_json, save_ensemble, save_matrix, write_json
from .multitask import fit_multitask, select_hub_responses
from .quantile import RNG_SCHEME, build_ensemble
from .select import HypothesisConfig, startrek
from .solvers import SolverConfig

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text!r}")
    return v


def _unit_open(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {text!r}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _lambda_policy(text):
    if text == "cv":
        return "cv"
    try:
        return _positive_float(text)
    except argparse.ArgumentTypeError:
        raise argparse.ArgumentTypeError(f"expected 'cv' or a positive number, got {text!r}") from None


def _resolve_threads(value):
    if value is not None:
        return value
    env = os.environ.get("STARTREK_THREADS")
    if env:
        try:
            return _positive_int(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"STARTREK_THREADS: {exc}") from None
    return os.cpu_count() or 1


def _check_k_tau(hyp, m):
    try:
        hyp.check_dimension(m)
    except InvalidInput as exc:
        raise UsageError(f"--k-tau: {exc}") from None


def _metadata():
    return {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}


def _rng_meta(seed):
    return {"scheme": RNG_SCHEME, "seed": seed}


def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_data(args):
    dm = load_matrix(args.data, delimiter=args.delimiter)
    if args.log_transform or args.standardize:
        dm = preprocess(dm, args.log_transform, args.standardize)
    return dm


def _write_alpha_csv(path, labels, alpha, selected):
    chosen = set(selected)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label", "alpha", "selected"])
        for j, (lab, a) in enumerate(zip(labels, alpha)):
            w.writerow([j, lab, repr(float(a)), str(j in chosen).lower()])


def _selection_doc(config, labels, res, extra):
    return {
        "config": config,
        "version": __version__,
        "rng": _rng_meta(config["seed"]),
        "labels": list(labels),
        "alpha": [float(a) for a in res.alpha],
        "selected": [labels[j] for j in res.selected],
        "selected_index": [int(j) for j in res.selected],
        "j_max": int(res.j_max),
        "bh_threshold": float(res.bh_threshold),
        **extra,
        "metadata": _metadata(),
    }


def cmd_select(args):
    dm = _load_data(args)
    X = dm.values
    n, d = X.shape
    hyp = HypothesisConfig(args.k_tau, args.q)
    _check_k_tau(hyp, d - 1)
    fit = fit_ggm(X, args.lam, SolverConfig(cv_folds=args.cv_folds))
    print(f"fitted graphical model: n={n}, d={d}, lambda={fit.lam:.6g}")
    provider = GGMBootstrap(fit.theta_hat, X, args.boot, args.seed)
    res = startrek(fit.debiased.theta_std, provider, hyp, n, threads=args.threads)
    out = _out_dir(args.out)
    config = {
        "command": "select", "data": str(args.data), "k_tau": args.k_tau, "q": args.q,
        "boot": args.boot, "seed": args.seed, "lambda": args.lam, "cv_folds": args.cv_folds,
        "log_transform": args.log_transform, "standardize": args.standardize,
        "delimiter": args.delimiter,
    }
    doc = _selection_doc(config, dm.labels, res, {"n": n, "d": d, "lambda_selected": fit.lam})
    write_json(out / "selection.json", doc)
    _write_alpha_csv(out / "alpha.csv", dm.labels, res.alpha, res.selected)
    print(f"selected {len(res.selected)} of {d} nodes; wrote {out / 'selection.json'}")


def cmd_select_multitask(args):
    xm = load_matrix(args.x, delimiter=args.delimiter)
    ym = load_matrix(args.y, delimiter=args.delimiter, min_cols=1)
    if xm.values.shape[0] != ym.values.shape[0]:
        raise UsageError("--x and --y must have the same number of rows")
    hyp = HypothesisConfig(args.k_tau, args.q)
    _check_k_tau(hyp, xm.values.shape[1])
    cfg = SolverConfig(lam=args.lambda0, mu=args.mu)
    fit = fit_multitask(xm.values, ym.values, cfg)
    res = select_hub_responses(fit, hyp, B=args.boot, seed=args.seed, threads=args.threads)
    out = _out_dir(args.out)
    config = {
        "command": "select-multitask", "x": str(args.x), "y": str(args.y), "k_tau": args.k_tau,
        "q": args.q, "boot": args.boot, "seed": args.seed, "lambda0": args.lambda0, "mu": args.mu,
        "delimiter": args.delimiter,
    }
    extra = {
        "n": int(fit.n), "d1": int(fit.theta_d.shape[0]), "d2": int(fit.theta_d.shape[1]),
        "sigma": fit.sigma.tolist(), "m_fallback_rows": np.flatnonzero(fit.m_fallback).tolist(),
        "degenerate_responses": np.flatnonzero(fit.degenerate).tolist(),
    }
    write_json(out / "selection.json", _selection_doc(config, ym.labels, res, extra))
    _write_alpha_csv(out / "alpha.csv", ym.labels, res.alpha, res.selected)
    print(f"selected {len(res.selected)} of {len(ym.labels)} responses; wrote {out / 'selection.json'}")


def cmd_simulate(args):
    try:
        cfg = ExperimentConfig.from_dict(read_json(args.config))
    except (TypeError, ParseError) as exc:
        raise ConfigError(str(exc)) from None
    print(f"running {cfg.replicates} {cfg.mode} replicates")
    report = run_experiment(cfg, threads=args.threads)
    out = _out_dir(args.out)
    write_json(out / "report.json", report.to_dict())
    report.write_csv(out / "replicates.csv")
    s = report.summary()
    print(f"mean FDP {s['mean_fdp']:.4f}, mean power {s['mean_power']:.4f}, failed {s['n_failed']}")
    return EXIT_RUNTIME if not report.records else EXIT_OK


def cmd_graphgen(args):
    model = generate_graph(args.kind, args.d, args.p_groups, seed=args.seed, v=args.v, u=args.u,
                           connect_prob=args.connect_prob, knn_k=args.knn_k)
    truth = ground_truth(model, args.k_tau)
    out = _out_dir(args.out)
    config = {
        "command": "graphgen", "kind": model.kind, "d": args.d, "p_groups": args.p_groups,
        "seed": args.seed, "v": args.v, "u": args.u, "connect_prob": args.connect_prob,
        "knn_k": args.knn_k, "k_tau": args.k_tau, "n_samples": args.n_samples,
    }
    doc = {
        "config": config,
        "version": __version__,
        **model.to_dict(),
        "ground_truth": {
            "degrees": truth.degrees.tolist(), "hubs": truth.hubs.tolist(), "H0": truth.H0.tolist(),
            "d0": truth.d0, "S_count": truth.S_count, "components": truth.p,
        },
        "metadata": _metadata(),
    }
    write_json(out / "graph.json", doc)
    save_matrix(out / "precision.csv", model.precision)
    if args.n_samples:
        X = sample_gaussian(model.precision, args.n_samples, [args.seed, 1])
        save_matrix(out / "data.csv", X, [f"V{j + 1}" for j in range(args.d)])
    print(f"{model.kind} graph: d={args.d}, {len(model.edges())} edges, {truth.hubs.size} hubs")


def cmd_ccb_verify(args):
    d = args.d
    if args.pair == "counterexample":
        cu, cv = counterexample_pair(d, args.rho)
    elif args.pair == "ar1":
        cu, cv = ar1_perturbed_pair(d, args.rho, args.delta)
    elif args.pair == "identical":
        cu, _ = ar1_perturbed_pair(d, args.rho, 0.0)
        cv = cu.copy()
    else:
        if not (args.cov_u and args.cov_v):
            raise UsageError("--pair files needs --cov-u and --cov-v")
        cu = load_matrix(args.cov_u, header=False).values
        cv = load_matrix(args.cov_v, header=False).values
        d = cu.shape[0]
    grid = default_t_grid(d, args.c0, args.grid_points)
    table = verify_ccb(cu, cv, grid, args.mc_samples, args.seed, args.c0, threads=args.threads)
    out = _out_dir(args.out)
    table.write_csv(out / "ccb.csv")
    config = {
        "command": "ccb-verify", "pair": args.pair, "d": d, "rho": args.rho, "delta": args.delta,
        "cov_u": args.cov_u, "cov_v": args.cov_v, "mc_samples": args.mc_samples, "seed": args.seed,
        "c0": args.c0, "grid_points": args.grid_points,
    }
    sup = table.sup_deviation
    write_json(out / "ccb.json", {
        "config": config,
        "version": __version__,
        "rng": _rng_meta(args.seed),
        "sup_deviation": None if np.isnan(sup) else sup,
        "unstable_points": int((~table.stable).sum()),
        "t": table.t, "p_u": table.p_u, "p_v": table.p_v,
        "metadata": _metadata(),
    })
    print(f"sup ratio deviation {sup:.4g} over {int(table.stable.sum())} stable grid points")


def cmd_ensemble_cache(args):
    dm = _load_data(args)
    X = dm.values
    fit = fit_ggm(X, args.lam, SolverConfig(cv_folds=args.cv_folds))
    scores = build_scores(fit.theta_hat, X)
    ens = build_ensemble(scores, args.boot, args.seed, threads=args.threads)
    out = _out_dir(args.out)
    save_ensemble(out / "ensemble.stkb", ens)
    write_json(out / "ensemble.json", {
        "config": {
            "command": "ensemble-cache", "data": str(args.data), "boot": args.boot, "seed": args.seed,
            "lambda": args.lam, "cv_folds": args.cv_folds, "log_transform": args.log_transform,
            "standardize": args.standardize, "delimiter": args.delimiter,
        },
        "version": __version__,
        "rng": _rng_meta(args.seed),
        "B": ens.B, "n_edges": len(ens.edge_universe), "lambda_selected": fit.lam,
        "metadata": _metadata(),
    })
    print(f"cached {ens.B} draws over {len(ens.edge_universe)} edges")


def _add_common(p, seed=True):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker cap (default: $STARTREK_THREADS, else all cores)")
    if seed:
        p.add_argument("--seed", type=_nonneg_int, default=0)


def _add_data(p):
    p.add_argument("--data", required=True, help="CSV, rows = observations")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--log-transform", action="store_true", help="apply log(1 + x) first")
    p.add_argument("--standardize", action="store_true", help="centre and scale columns")
    p.add_argument("--lambda", dest="lam", type=_lambda_policy, default="cv",
                   help="'cv' or a fixed graphical Lasso penalty")
    p.add_argument("--cv-folds", type=_positive_int, default=5)


def build_parser():
    parser = argparse.ArgumentParser(prog="startrek", description="Hub selection with FDR control.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="hub nodes of a Gaussian graphical model")
    _add_data(p)
    p.add_argument("--k-tau", type=_positive_int, required=True)
    p.add_argument("--q", type=_unit_open, default=0.1)
    p.add_argument("--boot", type=_positive_int, default=2000)
    _add_common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("select-multitask", help="hub responses of a multitask regression")
    p.add_argument("--x", required=True, help="design CSV (n x d2)")
    p.add_argument("--y", required=True, help="response CSV (n x d1)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--k-tau", type=_positive_int, required=True)
    p.add_argument("--q", type=_unit_open, default=0.1)
    p.add_argument("--boot", type=_positive_int, default=2000)
    p.add_argument("--lambda0", type=_positive_float, default=None, help="scaled Lasso level")
    p.add_argument("--mu", type=_positive_float, default=None, help="decorrelation constraint")
    _add_common(p)
    p.set_defaults(func=cmd_select_multitask)

    p = sub.add_parser("simulate", help="replicated synthetic experiment from a JSON config")
    p.add_argument("--config", required=True)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("graphgen", help="synthetic graph, precision matrix and optional samples")
    p.add_argument("--kind", required=True, choices=list(KINDS) + ["scale-free"])
    p.add_argument("--d", type=_positive_int, required=True)
    p.add_argument("--p-groups", type=_positive_int, default=1)
    p.add_argument("--v", type=_positive_float, default=0.4)
    p.add_argument("--u", type=_positive_float, default=0.1)
    p.add_argument("--connect-prob", type=_unit_open, default=0.15)
    p.add_argument("--knn-k", type=_positive_int, default=None)
    p.add_argument("--k-tau", type=_positive_int, default=3)
    p.add_argument("--n-samples", type=_nonneg_int, default=0, help="also write data.csv")
    _add_common(p)
    p.set_defaults(func=cmd_graphgen)

    p = sub.add_parser("ccb-verify", help="Monte-Carlo tail ratios of two Gaussian maxima")
    p.add_argument("--pair", choices=["counterexample", "ar1", "identical", "files"], default="counterexample")
    p.add_argument("--d", type=_positive_int, default=50)
    p.add_argument("--rho", type=float, default=None,
                   help="correlation (default 0.9 for counterexample, 0.5 otherwise)")
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--cov-u")
    p.add_argument("--cov-v")
    p.add_argument("--mc-samples", type=_positive_int, default=1_000_000)
    p.add_argument("--c0", type=_positive_float, default=1.5)
    p.add_argument("--grid-points", type=_positive_int, default=40)
    _add_common(p)
    p.set_defaults(func=cmd_ccb_verify)

    p = sub.add_parser("ensemble-cache", help="bootstrap ensemble over all edges, saved as STKB")
    _add_data(p)
    p.add_argument("--boot", type=_positive_int, default=500)
    _add_common(p)
    p.set_defaults(func=cmd_ensemble_cache)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if getattr(args, "rho", "unset") is None:
        args.rho = 0.9 if args.pair == "counterexample" else 0.5
    try:
        args.threads = _resolve_threads(args.threads)
        code = args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"startrek {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StarTrekError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"startrek {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
