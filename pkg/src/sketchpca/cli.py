"""Command-line front end.

Subcommands: ``predict``, ``simulate``, ``compare``, ``verify``,
``shrink``. All emit CSV to stdout (or to ``--out``); errors go to
stderr. Exit codes: 0 ok, 2 usage, 3 data, 4 numerical. Every run records
its version, full flag set, and base seed in CSV header comments; the
timestamp comment and wall-time columns are suppressed by
``--no-timestamp`` so identical invocations give byte-identical output.

Flags mirror the model symbols (``--n --p --r --d --gamma --xi``); counts
take precedence over ratios when both are given. ``simulate`` and
``compare`` also accept ``--config FILE`` holding flat ``key=value``
lines (same keys as the long flags, ``#`` comments allowed); explicit
flags win over config values.
"""
from __future__ import annotations

import argparse
import io
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import DataError, NumericalError, UsageError
from .fielddata import load_matrix, standardize, t_statistic
from .harness import (
    ExperimentConfig,
    aggregates_table,
    compare_methods,
    records_table,
    run,
    write_csv,
)
from .model import SpikedModelSpec
from .numerics import RngStream
from .sketch import METHODS, SketchSpec
from .theory import (
    AspectRatios,
    cov_summary,
    effective_xi_countsketch,
    predict_iid,
    predict_large_signal,
    predict_orthogonal_family,
    shrinker,
    spike_inverse,
)

_NO_THEORY = ("leverage", "osnap")


def _comments(args, extra=()):
    out = [f"sketchpca {__version__}", f"invocation: {' '.join(args._argv)}"]
    seed = getattr(args, "seed", None)
    if seed is not None:
        out.append(f"base_seed: {seed}")
    out.extend(extra)
    if not args.no_timestamp:
        out.append(f"timestamp: {datetime.now(timezone.utc).isoformat()}")
    return out


def _emit(args, columns, rows, comments):
    if args.out:
        write_csv(args.out, columns, rows, comments)
    else:
        write_csv_stdout(columns, rows, comments)


def write_csv_stdout(columns, rows, comments):
    buf = io.StringIO()
    write_csv(buf, columns, rows, comments)
    sys.stdout.write(buf.getvalue())


def _parse_d_list(text: str) -> tuple[float, ...]:
    vals = tuple(float(x) for x in text.replace(" ", "").split(",") if x)
    if not vals:
        raise UsageError("expected at least one signal strength in --d")
    return vals


def _resolve_npr(args) -> tuple[int, int, int]:
    if args.n and args.p and args.r:
        return args.n, args.p, args.r
    if args.gamma and args.xi:
        n = args.n or 1000
        return n, round(args.gamma * n), round(args.xi * n)
    raise UsageError("provide --n --p --r (or --gamma --xi with optional --n)")


# ----------------------------------------------------------------------
# predict
# ----------------------------------------------------------------------


def _cmd_predict(args) -> int:
    n, p, r = _resolve_npr(args)
    gamma, xi = p / n, r / n
    dvals = _parse_d_list(args.d)
    columns = [
        "method", "n", "p", "r", "gamma", "xi", "xi_effective", "d",
        "theta", "cos2", "above_threshold", "lambda_plus", "d_critical", "note",
    ]
    rows = []
    method = args.method
    for d in dvals:
        note = ""
        xi_eff = xi
        if method in _NO_THEORY:
            rows.append([method, n, p, r, gamma, xi, "", d, "", "", "", "", "",
                         "no theory available"])
            continue
        if method in ("countsketch", "countsketch_normalized"):
            xi_eff = effective_xi_countsketch(xi)
        if args.sigma_model != "identity":
            from .model import make_sigma

            sigma = make_sigma(args.sigma_model, p)
            rho1 = sigma.trace / p
            # population-level prediction: E ~ rho1 I for Haar signal frames
            cov = cov_summary(np.diag(np.full(len(dvals), rho1)),
                              np.eye(len(dvals)))
            i = dvals.index(d)
            ls = predict_large_signal(dvals, i, cov, AspectRatios(gamma, xi),
                                      xi_effective=xi_eff)
            rows.append([method, n, p, r, gamma, xi, xi_eff, d, ls.theta,
                         ls.cos2_ii, 1, "", "", "large-signal formulas, E ~ rho1 I"])
            continue
        ar = AspectRatios(gamma, xi_eff)
        pred = predict_iid(d, ar) if method == "iid" else predict_orthogonal_family(d, ar)
        rows.append([method, n, p, r, gamma, xi, xi_eff, d, pred.theta, pred.cos2,
                     pred.above_threshold, pred.lambda_plus, pred.d_critical, note])
    _emit(args, columns, rows, _comments(args))
    return 0


# ----------------------------------------------------------------------
# simulate / compare
# ----------------------------------------------------------------------


def _config_overrides(args, parser):
    """Apply config-file values for flags the user did not pass explicitly."""
    if not args.config:
        return args
    values = {}
    with open(args.config, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if "=" not in s:
                raise UsageError(f"{args.config}: line {lineno}: expected key=value")
            key, val = s.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    explicit = {a.lstrip("-").replace("-", "_").split("=")[0] for a in args._argv if a.startswith("--")}
    for key, val in values.items():
        if key in explicit or not hasattr(args, key):
            if not hasattr(args, key):
                raise UsageError(f"{args.config}: unknown key {key!r}")
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, val.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(val))
        elif isinstance(current, float):
            setattr(args, key, float(val))
        else:
            setattr(args, key, val)
    return args


def _build_config(args, methods: list[str]) -> ExperimentConfig:
    n, p, r = _resolve_npr(args)
    if args.d:
        d = _parse_d_list(args.d)
    else:
        d = (5.0,)
    k = args.k or len(d)
    model = SpikedModelSpec(
        n=n, p=p, k=k, d=d, noise=args.noise, sigma_model=args.sigma_model,
    )
    sketches = [
        SketchSpec(method=m, r=r, iid_law=args.iid_law, osnap_s=args.osnap_s)
        for m in methods
    ]
    d_grid = _parse_d_list(args.d_grid) if args.d_grid else None
    return ExperimentConfig(
        model=model,
        sketch=sketches if len(sketches) > 1 else sketches[0],
        reps=args.reps,
        base_seed=args.seed,
        d_grid=d_grid,
        outputs=args.out,
        predictor=args.predictor,
    )


def _cmd_simulate(args, parser) -> int:
    args = _config_overrides(args, parser)
    methods = [args.method] if args.method else ["haar"]
    config = _build_config(args, methods)
    result = run(config)
    include_timing = not args.no_timestamp
    acols, arows = aggregates_table(result.aggregates, include_timing)
    comments = _comments(args, extra=[f"reps: {config.reps}"])
    if args.out:
        rcols, rrows = records_table(result.records, include_timing)
        write_csv(f"{args.out}_records.csv", rcols, rrows, comments)
        write_csv(f"{args.out}_aggregates.csv", acols, arows, comments)
    else:
        write_csv_stdout(acols, arows, comments)
    return 0


def _cmd_compare(args, parser) -> int:
    args = _config_overrides(args, parser)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2:
        raise UsageError("compare needs at least two methods in --methods")
    config = _build_config(args, methods)
    result = compare_methods(config)
    include_timing = not args.no_timestamp
    acols, arows = aggregates_table(result.aggregates, include_timing)
    comments = _comments(args, extra=[f"reps: {config.reps}"])
    if args.out:
        rcols, rrows = records_table(result.records, include_timing)
        write_csv(f"{args.out}_records.csv", rcols, rrows, comments)
        write_csv(f"{args.out}_aggregates.csv", acols, arows, comments)
    else:
        write_csv_stdout(acols, arows, comments)
    return 0


# ----------------------------------------------------------------------
# verify / shrink
# ----------------------------------------------------------------------


def _cmd_verify(args) -> int:
    raw, mask = load_matrix(args.input, format=args.format, missing_token=args.missing_token)
    if args.no_standardize:
        X = np.where(mask, raw, 0.0)
    else:
        X = standardize(raw, mask).data
    n = X.shape[0]
    r = args.r or max(1, int(args.xi * n))
    spec = SketchSpec(method=args.method, r=r, iid_law=args.iid_law,
                      osnap_s=args.osnap_s, uniform_signs=args.uniform_signs)
    columns = ["rep", "method", "n", "p", "r_effective", "T", "ell_full",
               "ell_sketched", "lambda1_full", "lambda1_sketched",
               "below_edge_full", "below_edge_sketched"]
    rows = []
    for rep in range(args.reps):
        res = t_statistic(X, spec, RngStream(args.seed, rep))
        rows.append([
            rep, args.method, X.shape[0], X.shape[1], res.r_effective,
            res.T if res.T is not None else float("nan"),
            res.ell_full if res.ell_full is not None else float("nan"),
            res.ell_sketched if res.ell_sketched is not None else float("nan"),
            res.lambda1_full, res.lambda1_sketched,
            res.below_edge_full, res.below_edge_sketched,
        ])
    _emit(args, columns, rows, _comments(args))
    return 0


def _cmd_shrink(args) -> int:
    n, p, r = _resolve_npr(args)
    ar = AspectRatios(p / n, r / n)
    res = shrinker(float(np.sqrt(args.lam)), ar, args.loss)
    columns = ["lambda", "loss", "eta", "ell", "below_edge", "lambda_plus"]
    rows = [[args.lam, args.loss, res.value,
             res.ell if res.ell is not None else float("nan"),
             res.below_edge, ar.edges()[1]]]
    _emit(args, columns, rows, _comments(args))
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--out", default=None, help="write CSV here instead of stdout")
    p.add_argument("--no-timestamp", action="store_true",
                   help="suppress the timestamp comment and wall-time columns for byte-identical reruns")


def _add_size_flags(p):
    p.add_argument("--n", type=int, default=None, help="sample count")
    p.add_argument("--p", type=int, default=None, help="feature count")
    p.add_argument("--r", type=int, default=None, help="sketch size")
    p.add_argument("--gamma", type=float, default=None, help="aspect ratio p/n (used if counts absent)")
    p.add_argument("--xi", type=float, default=None, help="reduction ratio r/n (used if counts absent)")


def _add_sketch_flags(p):
    p.add_argument("--iid-law", default="gaussian", choices=("gaussian", "rademacher"))
    p.add_argument("--osnap-s", type=int, default=2, help="nonzeros per column for osnap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchpca",
        description="Sketched-PCA predictions, Monte Carlo verification, and shrinkage.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="asymptotic spike locations and overlaps")
    p.add_argument("--method", required=True, choices=METHODS)
    _add_size_flags(p)
    p.add_argument("--d", required=True, help="comma-separated signal strengths")
    p.add_argument("--sigma-model", default="identity")
    _add_common(p)

    for name, helptext in (("simulate", "Monte Carlo against theory"),
                           ("compare", "paired multi-method Monte Carlo")):
        p = sub.add_parser(name, help=helptext)
        if name == "simulate":
            p.add_argument("--method", default=None, choices=METHODS)
        else:
            p.add_argument("--methods", default="haar,iid",
                           help="comma-separated method list")
        _add_size_flags(p)
        p.add_argument("--d", default=None, help="signal strengths (k of them)")
        p.add_argument("--d-grid", default=None, help="sweep of d values (k = 1)")
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--reps", type=int, default=20)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--noise", default="gaussian", choices=("gaussian", "uniform"))
        p.add_argument("--sigma-model", default="identity")
        p.add_argument("--predictor", default="auto")
        p.add_argument("--config", default=None, help="flat key=value config file")
        _add_sketch_flags(p)
        _add_common(p)

    p = sub.add_parser("verify", help="pivotal T statistic on a data file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="csv", choices=("csv", "tsv"))
    p.add_argument("--method", default="haar", choices=METHODS)
    p.add_argument("--xi", type=float, default=0.5)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-token", default="NA")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--uniform-signs", action="store_true",
                   help="random-sign uniform sampling (centered-data variant)")
    _add_sketch_flags(p)
    _add_common(p)

    p = sub.add_parser("shrink", help="optimal shrinkage of a sketched eigenvalue")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    _add_size_flags(p)
    p.add_argument("--loss", default="operator", choices=("operator", "frobenius"))
    _add_common(p)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args._argv = argv
        if args.command == "predict":
            return _cmd_predict(args)
        if args.command == "simulate":
            return _cmd_simulate(args, parser)
        if args.command == "compare":
            return _cmd_compare(args, parser)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "shrink":
            return _cmd_shrink(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
