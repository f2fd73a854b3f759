"""Command-line front end: ``fqstrat {quantizer,decompose,price,tables}``.

Settings resolve as command-line flags > ``--config`` JSON file > defaults.
All randomness derives from ``--seed``: stratum ``k`` draws pilot paths from
stream ``(seed, k, 0)`` and main paths from ``(seed, k, 1)``, so output is
identical for any ``--workers``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from .decomposition import Criterion, DecompositionDB, decompose
from .estimator import AllocationRule
from .processes import GaussianProcessSpec
from .quantizer import optimize_normal_quantizer

log = logging.getLogger("fqstrat")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _dates(text):
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated dates, got {text!r}") from None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(rows: list[dict], fmt: str, out) -> None:
    if not rows:
        return
    cols = list(rows[0])
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
        return
    cells = [[_table_cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    out.write("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for row in cells:
        out.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")


def _table_cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return _fmt(v)


def _write(rows, args):
    buf = io.StringIO()
    emit(rows, args.format, buf)
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


# --------------------------------------------------------------------------
# commands

def cmd_quantizer(args):
    q = optimize_normal_quantizer(args.n)
    rows = [{"i": i, "point": float(x), "prob": float(p), "cond_var": float(v)}
            for i, (x, p, v) in enumerate(zip(q.points, q.probs, q.cond_vars))]
    _write(rows, args)
    sys.stderr.write(f"distortion {q.distortion!r}\n")


def process_spec(args) -> GaussianProcessSpec:
    if args.process == "bm":
        return GaussianProcessSpec.brownian_motion(args.horizon)
    if args.process == "bridge":
        return GaussianProcessSpec.brownian_bridge(args.horizon)
    sigma0 = args.sigma0
    if args.stationary:
        sigma0 = args.sigma / math.sqrt(2.0 * args.theta)
    return GaussianProcessSpec.ornstein_uhlenbeck(args.theta, args.sigma, args.horizon, sigma0, args.m0, args.mu)


def cmd_decompose(args):
    spec = process_spec(args)
    db = DecompositionDB(args.db) if args.db else None
    dec, value = decompose(spec, args.budget, args.criterion, db)
    if db is not None:
        db.save()
    row = {"process": spec.kind.value, **spec.params, "budget": args.budget,
           "criterion": Criterion(args.criterion).value, "levels": str(dec), "n_rec": dec.size,
           "score": value}
    _write([row], args)


def _experiment(args):
    from .pricing import experiment

    kw = {"T": args.horizon, "S0": args.s0, "sigma": args.vol, "beta": args.beta, "theta": args.theta,
          "alpha": args.alpha, "K": args.strike, "H": args.barrier, "P": args.nominal, "C": args.coupon,
          "fixings": args.fixings, "steps": args.steps, "dates": args.dates}
    return experiment(args.model, args.payoff, **kw)


def _report_row(prefix, rep):
    return {f"{prefix}estimate": rep.estimate, f"{prefix}ci_lo": rep.ci95[0],
            f"{prefix}ci_hi": rep.ci95[1], f"{prefix}variance": rep.variance}


def cmd_price(args):
    from .pricing import price, proxy, stratify

    exp = _experiment(args)
    db = DecompositionDB(args.db) if args.db else None
    if args.strata > 1 and (db is None or db.lookup(exp.driver.centered(), args.strata, args.criterion) is None):
        log.warning("no stored decomposition for %d strata; optimizing on the fly", args.strata)
    sampler = stratify(exp, args.strata, args.criterion, db)
    if db is not None:
        db.save()
    rep = price(exp, args.strata, args.rule, args.paths, args.seed, args.pilot, args.workers, sampler=sampler)
    row = {**exp.params(), "strata": args.strata, "decomposition": str(sampler.strata.decomposition),
           "rule": rep.rule, "paths": rep.total_paths, "seed": args.seed, "proxy": proxy(exp),
           **_report_row("", rep)}
    _write([row], args)
    if args.figures:
        from .plotting import plot_conditional_paths, plot_quantizer_paths

        out = Path(args.figures)
        plot_quantizer_paths(sampler.strata, out / "quantizer_paths.png")
        plot_conditional_paths(sampler, out / "conditional_paths.png", seed=args.seed)


def cmd_tables(args):
    from .plotting import plot_quantizer_paths, plot_variances
    from .pricing import benchmark_rows, stratify, experiment, BENCHMARKS

    db = DecompositionDB(args.db) if args.db else None
    names = args.benchmarks or list(BENCHMARKS)
    rows = benchmark_rows(names, args.paths, args.seed, args.pilot, args.workers, db, args.strata_list)
    if db is not None:
        db.save()
    flat = []
    for r in rows:
        row = {k: v for k, v in r.items() if k not in ("plain", *(x.value for x in AllocationRule))}
        row.pop("dates", None)
        for key in ("plain", *(x.value for x in AllocationRule)):
            row.update(_report_row(f"{key}_", r[key]))
        flat.append(row)
    # one CSV per benchmark: column sets differ by model and payoff
    if args.out:
        out = Path(args.out)
        for name in names:
            sub = [row for row in flat if row["benchmark"] == name]
            buf = io.StringIO()
            emit(sub, args.format, buf)
            path = out.with_name(f"{out.stem}_{name}{out.suffix or '.csv'}")
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(buf.getvalue())
    else:
        for name in names:
            emit([row for row in flat if row["benchmark"] == name], args.format, sys.stdout)
            sys.stdout.write("\n")
    if args.figures:
        fig_dir = Path(args.figures)
        plot_variances(rows, fig_dir / "variances.png")
        for name in names:
            (model, payoff), kw, budgets = BENCHMARKS[name]
            exp = experiment(model, payoff, **kw)
            n = (args.strata_list or budgets)[0]
            plot_quantizer_paths(stratify(exp, n, db=db).strata, fig_dir / f"quantizer_{name}.png")


# --------------------------------------------------------------------------
# parser

def _common(p, db=False):
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "table"), default="csv")
    p.add_argument("--config", help="JSON file of default settings (flags override it)")
    if db:
        p.add_argument("--db", help="decomposition database (JSON)")


def _process_args(p):
    p.add_argument("--process", choices=("bm", "bridge", "ou"), default="bm")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--sigma0", type=float, default=0.0)
    p.add_argument("--stationary", action="store_true", help="OU started from its invariant law")
    p.add_argument("--m0", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--horizon", type=float, default=1.0)


def _run_args(p):
    p.add_argument("--paths", type=_positive_int, default=100_000)
    p.add_argument("--pilot", type=_positive_int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--criterion", choices=[c.value for c in Criterion], default="lipschitz")
    p.add_argument("--figures", help="directory for PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fqstrat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantizer", help="optimal N(0,1) quantizer")
    p.add_argument("--n", type=_positive_int, help="number of points (required)")
    _common(p)
    p.set_defaults(func=cmd_quantizer)

    p = sub.add_parser("decompose", help="blind optimization of a K-L product decomposition")
    _process_args(p)
    p.add_argument("--budget", type=_positive_int, help="strata budget N (required)")
    p.add_argument("--criterion", choices=[c.value for c in Criterion], default="quadratic")
    _common(p, db=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("price", help="stratified Monte-Carlo price of one benchmark")
    p.add_argument("--model", choices=("bs", "cev", "schwartz"), default="bs")
    p.add_argument("--payoff", choices=("uic", "autocall", "asian"), default="uic")
    p.add_argument("--strata", type=_positive_int, default=20)
    p.add_argument("--rule", choices=[r.value for r in AllocationRule], default="proportional")
    p.add_argument("--horizon", type=float)
    p.add_argument("--s0", type=float)
    p.add_argument("--vol", type=float, help="model volatility")
    p.add_argument("--beta", type=float, help="CEV elasticity")
    p.add_argument("--theta", type=float, help="Schwartz mean reversion")
    p.add_argument("--alpha", type=float, help="Schwartz long-run log level")
    p.add_argument("--strike", type=float)
    p.add_argument("--barrier", type=float)
    p.add_argument("--nominal", type=float)
    p.add_argument("--coupon", type=float)
    p.add_argument("--fixings", type=_positive_int, help="barrier fixings or averaging steps")
    p.add_argument("--steps", type=int, help="Euler steps (CEV)")
    p.add_argument("--dates", type=_dates, help="auto-call observation dates, comma separated")
    _run_args(p)
    _common(p, db=True)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("tables", help="run every benchmark configuration")
    p.add_argument("--benchmarks", nargs="+", choices=("uic-125", "uic-200", "autocall", "asian"))
    p.add_argument("--strata-list", type=_positive_int, nargs="+", help="override the strata budgets")
    _run_args(p)
    _common(p, db=True)
    p.set_defaults(func=cmd_tables)
    return parser


REQUIRED = {"quantizer": ("n",), "decompose": ("budget",)}


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    for name in REQUIRED.get(args.command, ()):
        if getattr(args, name) is None:
            parser.error(f"{args.command}: --{name} is required (flag or config)")
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        sys.stderr.write(f"fqstrat {args.command}: error: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
