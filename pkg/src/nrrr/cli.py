"""Command-line front end.

Subcommands
-----------
simulate   Run the synthetic benchmark and write a result CSV.
fit        Fit a model on long-format CSV curves, save an .npz artifact.
select     Run rank selection on CSV curves, emit scores as CSV or JSON.
predict    Predict response curves for new predictor curves.
surface    Export the fitted coefficient surfaces on a grid as long CSV.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure. All commands are deterministic given their flags and
seed; BLAS threading is capped at --threads (default 1) for reproducibility.
"""

import argparse
import json
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError, DataError, NumericalError
from . import basis, integrate, estimators, rank_select, sim, io


def _add_common(p):
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS thread cap (default 1, bit-reproducible)")
    p.add_argument("--config", help="JSON config file; flags override it")


def _add_basis_flags(p):
    p.add_argument("--jx", type=int, default=8,
                   help="number of predictor basis functions")
    p.add_argument("--jy", type=int, default=8,
                   help="number of response basis functions")
    p.add_argument("--degree", type=int, default=3, help="spline degree")


def _add_model_flags(p):
    p.add_argument("--ranks", help="fixed ranks r,rx,ry (skips selection)")
    p.add_argument("--select", choices=("bic", "cv"), default="bic",
                   help="rank selector when --ranks is not given")
    p.add_argument("--folds", type=int, default=10, help="CV fold count")
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=0.0,
                   help="ridge penalty (> 0 fits the penalized variant)")
    p.add_argument("--method", choices=("nrrr", "nrrr_x", "nrrs"),
                   default="nrrr")
    p.add_argument("--max-r", type=int, help="upper bound of the r grid")
    p.add_argument("--center", action="store_true",
                   help="pointwise mean-center each variable across subjects")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nrrr", description="Nested reduced-rank functional regression")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the synthetic benchmark")
    p.add_argument("--setting", type=int, choices=(1, 2), default=1)
    p.add_argument("--snr", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--trim", type=int, default=None,
                   help="tail count trimmed per side (default reps/15)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="nrrr,rrr",
                   help=f"comma list from {','.join(sim.ALL_METHODS)}")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--max-r", type=int, help="upper bound of the r grid")
    p.add_argument("--out", required=True, help="output CSV path")
    _add_common(p)

    p = sub.add_parser("fit", help="fit a model on CSV curves")
    p.add_argument("data", help="long-format input CSV")
    p.add_argument("--out", required=True, help="output artifact (.npz)")
    _add_basis_flags(p)
    _add_model_flags(p)
    _add_common(p)

    p = sub.add_parser("select", help="rank selection on CSV curves")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_basis_flags(p)
    _add_model_flags(p)
    _add_common(p)

    p = sub.add_parser("predict", help="predict response curves")
    p.add_argument("artifact", help="fit artifact (.npz)")
    p.add_argument("data", help="CSV with predictor curves")
    p.add_argument("--t-grid", type=int, default=100,
                   help="number of output time points")
    p.add_argument("--center", action="store_true")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("surface", help="export coefficient surfaces")
    p.add_argument("artifact")
    p.add_argument("--s-grid", type=int, default=50)
    p.add_argument("--t-grid", type=int, default=50)
    p.add_argument("--out", required=True)
    _add_common(p)

    return parser


def _apply_config_file(parser, args, argv):
    """Merge a JSON config under explicit flags: defaults < file < flags.

    The config is injected as a pre-populated namespace and argv is reparsed,
    so anything actually typed on the command line wins. JSON values must
    already have the flag's type (numbers as numbers).
    """
    if not getattr(args, "config", None):
        return args
    with open(args.config, encoding="utf-8") as fh:
        try:
            file_conf = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: invalid JSON ({e})") from None
    if not isinstance(file_conf, dict):
        raise ConfigError(f"{args.config}: config must be a JSON object")
    ns = argparse.Namespace()
    valid = vars(args)
    for key, val in file_conf.items():
        dest = key.replace("-", "_")
        if dest not in valid:
            raise ConfigError(f"{args.config}: unknown option {key!r}")
        setattr(ns, dest, val)
    return parser.parse_args(argv, namespace=ns)


def _log_config(args):
    conf = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    print(f"config: {json.dumps(conf, default=str)}", file=sys.stderr)


def _build_bases(args, samples):
    def domain(axis):
        grids = [getattr(s, f"{axis}_grid") for s in samples
                 if getattr(s, f"{axis}_grid") is not None]
        if not grids:
            raise DataError(f"no {axis}-side observations in input")
        return min(g[0] for g in grids), max(g[-1] for g in grids)

    x_lo, x_hi = domain("x")
    x_spec = basis.make_bspline(x_lo, x_hi, args.jx, args.degree)
    has_y = any(s.y_grid is not None for s in samples)
    if has_y:
        y_lo, y_hi = domain("y")
        y_spec = basis.make_bspline(y_lo, y_hi, args.jy, args.degree)
    else:
        y_spec = None
    return x_spec, y_spec


def _load_design(args):
    samples, ids = io.read_long_csv(args.data)
    if getattr(args, "center", False):
        samples = io.center_samples(samples)
    x_spec, y_spec = _build_bases(args, samples)
    if y_spec is None:
        raise DataError("fitting requires response curves in the input CSV")
    y_gram = basis.gram(y_spec)
    design = integrate.assemble_design(samples, x_spec, y_spec, y_gram)
    return design, x_spec, y_spec, y_gram, ids


def _parse_ranks(text):
    try:
        r, rx, ry = (int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--ranks expects r,rx,ry; got {text!r}") from None
    return r, rx, ry


def _select_or_fixed(args, design):
    limits = rank_select.RankLimits(max_r=args.max_r) if args.max_r else None
    lam = args.ridge_lambda
    method = args.method
    if method == "nrrs" and lam <= 0:
        raise ConfigError("--method nrrs requires --lambda > 0")
    if lam > 0 and method == "nrrr":
        method = "nrrs"
    if args.ranks:
        triple = _parse_ranks(args.ranks)
        return triple, method, lam, None
    lambdas = [lam] if (method == "nrrs" and lam > 0) else None
    if args.select == "bic":
        res = rank_select.select_ranks_bic(design, limits=limits,
                                           method=method, lambdas=lambdas)
    else:
        res = rank_select.select_ranks_cv(design, limits=limits, K=args.folds,
                                          seed=args.seed, method=method,
                                          lambdas=lambdas)
    lam = res.chosen_lambda if res.chosen_lambda is not None else lam
    return res.selected, method, lam, res


def _fit_at(design, triple, method, lam):
    r, rx, ry = triple
    cfg = estimators.NrrrConfig(r=r, rx=rx, ry=ry, ridge_lambda=lam)
    fitter = {"nrrr": estimators.nrrr_fit, "nrrr_x": estimators.nrrr_x_fit,
              "nrrs": estimators.nrrs_fit}[method]
    return fitter(design, cfg)


def cmd_simulate(args):
    spec_fn = sim.setting_1 if args.setting == 1 else sim.setting_2
    spec = spec_fn(args.snr, args.rho, args.seed)
    trim = args.trim if args.trim is not None else round(args.reps / 15)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    limits = rank_select.RankLimits(max_r=args.max_r) if args.max_r else None
    result = sim.run_replications(spec, methods, args.reps, trim=trim,
                                  cv_folds=args.folds, limits=limits,
                                  n_jobs=max(1, args.threads))
    rows = result.summary_rows(setting_label=str(args.setting))
    io.write_benchmark_csv(args.out, rows)
    for row in rows:
        print(f"{row['method']:8s} {row['metric']:6s} "
              f"trimmed_mean={row['trimmed_mean']:.6g} sd={row['sd']:.6g}")
    if result.failures:
        print(f"{len(result.failures)} replication(s) failed and were "
              "dropped", file=sys.stderr)
    return 0


def cmd_fit(args):
    design, x_spec, y_spec, y_gram, _ = _load_design(args)
    triple, method, lam, _ = _select_or_fixed(args, design)
    fit = _fit_at(design, triple, method, lam)
    io.save_fit(args.out, fit, x_spec, y_spec)
    r, rx, ry = fit.ranks
    print(f"fitted {method} ranks=(r={r}, rx={rx}, ry={ry}) "
          f"sse={fit.sse:.6g} converged={fit.converged} iters={fit.iters}")
    return 0


def cmd_select(args):
    design, *_ = _load_design(args)
    triple, method, lam, res = _select_or_fixed(args, design)
    if res is None:
        raise ConfigError("--ranks fixes the ranks; nothing to select")
    rows = [{"r": t[0], "rx": t[1], "ry": t[2],
             "score": res.scores.get(t, float("nan")),
             "selected": int(t == res.selected)}
            for t in res.search_path]
    if args.format == "json":
        payload = {
            "selected": {"r": triple[0], "rx": triple[1], "ry": triple[2]},
            "chosen_lambda": res.chosen_lambda,
            "search_path": rows,
            "warnings": res.warnings,
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    else:
        io.write_rows(args.out, ("r", "rx", "ry", "score", "selected"), rows)
    print(f"selected ranks r={triple[0]} rx={triple[1]} ry={triple[2]}"
          + (f" lambda={lam:g}" if res.chosen_lambda is not None else ""))
    return 0


def cmd_predict(args):
    fit, x_spec, y_spec = io.load_fit(args.artifact)
    samples, ids = io.read_long_csv(args.data)
    if args.center:
        samples = io.center_samples(samples)
    y_gram = basis.gram(y_spec)
    t_grid = np.linspace(y_spec.domain_lo, y_spec.domain_hi, args.t_grid)
    curves = estimators.predict(fit, samples, x_spec, y_spec, y_gram, t_grid)
    io.write_curves_csv(args.out, curves, t_grid, ids)
    print(f"wrote {curves.shape[0]} predicted curve sets to {args.out}")
    return 0


def cmd_surface(args):
    fit, x_spec, y_spec = io.load_fit(args.artifact)
    y_gram = basis.gram(y_spec)
    s_grid = np.linspace(x_spec.domain_lo, x_spec.domain_hi, args.s_grid)
    t_grid = np.linspace(y_spec.domain_lo, y_spec.domain_hi, args.t_grid)
    surf = estimators.coef_surface(fit, x_spec, y_spec, y_gram, s_grid, t_grid)
    io.write_surface_csv(args.out, surf, s_grid, t_grid)
    print(f"wrote {surf.size} surface values to {args.out}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "predict": cmd_predict,
    "surface": cmd_surface,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse uses exit code 2 for usage errors; the contract here is 1
        return 0 if not e.code else 1
    try:
        args = _apply_config_file(parser, args, argv)
        _log_config(args)
        with threadpool_limits(limits=max(1, args.threads)):
            return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
