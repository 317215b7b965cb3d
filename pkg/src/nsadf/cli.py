"""Command-line interface.

Every subcommand writes its artifacts and a ``manifest.json`` into
``--out-dir``. The manifest's ``config`` block lists every option value and
is accepted back through ``--config``, so a run can be repeated from its
manifest. Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .adf import (AdfGrid, BernsteinFitConfig, BernsteinModel, QuantileSchedule,
                  fit_bernstein, lambda_qr_average)
from .basis import BasisSpec
from .copulas import FAMILIES, CopulaSpec, McmcConfig, sample
from .errors import ConfigError, NumericalError
from .evaluation import (BootstrapPlan, ReplicationConfig, envelope, median_ise_table,
                         mise_table, run_replications)
from .margins import ExpSeries, MarginalModel, fit_marginal, to_exponential
from .parallel import default_workers
from .return_curve import back_transform, return_curve
from .surrogate import CaseConfig, SurrogateSpec, generate_surrogate, read_series, \
    run_case_pipeline, write_series
from .svg import bands_svg, curves_svg, lines_svg

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
# options that are not echoed into the manifest config
_META = {"command", "config", "func"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p, seed=True):
    p.add_argument("--out-dir", default="nsadf-out", help="directory for artifacts")
    p.add_argument("--config", help="JSON file of option values (keys as in the manifest)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: NSADF_WORKERS or all cores)")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _basis_args(p, prefix, degree, harmonics=0, help_=""):
    p.add_argument(f"--{prefix}-degree", type=int, default=degree,
                   help=f"polynomial degree in t of the {help_} basis")
    p.add_argument(f"--{prefix}-harmonics", type=int, default=harmonics,
                   help=f"number of day harmonics in the {help_} basis")


def _basis(args, prefix, period=90.0):
    return BasisSpec(degree=getattr(args, f"{prefix}_degree"),
                     harmonics=getattr(args, f"{prefix}_harmonics"), period=period)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nsadf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a non-stationary copula series")
    _common(p)
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--asymmetry", type=float, nargs=2, default=[0.3, 0.7])
    p.add_argument("--proposal-sd", type=float, default=1.5)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--pit", choices=["exact", "empirical"], default="empirical")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-margins", help="fit location-scale bodies and GPD tails")
    _common(p, seed=False)
    p.add_argument("--data", required=True, help="series CSV (t, day, x, y)")
    _basis_args(p, "margin", 1, 0, "location-scale")
    p.add_argument("--period", type=float, default=90.0)
    p.add_argument("--tail-degree-x", type=int, default=0)
    p.add_argument("--tail-degree-y", type=int, default=0)
    p.add_argument("--q-tail", type=float, default=0.9)
    p.add_argument("--penalty", default="gcv", help="ridge penalty or 'gcv'")
    p.set_defaults(func=cmd_fit_margins)

    p = sub.add_parser("transform", help="map a series to standard exponential margins")
    _common(p, seed=False)
    p.add_argument("--data", required=True)
    p.add_argument("--margin-x", required=True)
    p.add_argument("--margin-y", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("fit-adf", help="QR grid and Bernstein ADF estimates")
    _common(p)
    p.add_argument("--data", required=True, help="exponential-margin CSV")
    _basis_args(p, "qr", 3, 0, "quantile regression")
    _basis_args(p, "bp", 1, 0, "Bernstein coefficient")
    p.add_argument("--period", type=float, default=90.0)
    p.add_argument("--pairs", type=int, default=30)
    p.add_argument("--q-lo", type=float, default=0.9)
    p.add_argument("--q-hi", type=float, default=0.95)
    p.add_argument("--gap", type=float, default=0.04)
    p.add_argument("--k", type=int, default=7, help="Bernstein degree")
    p.add_argument("--link", choices=["exponential", "logit"], default="exponential")
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--max-times", type=int, default=100)
    p.add_argument("--plot-t", type=float, action="append", default=[],
                   help="time for the ADF plot (repeatable)")
    p.set_defaults(func=cmd_fit_adf)

    p = sub.add_parser("return-curve", help="return curves at given times")
    _common(p, seed=False)
    p.add_argument("--grid", required=True, help="AdfGrid JSON")
    p.add_argument("--bernstein", help="BernsteinModel JSON (default: bounded QR estimate)")
    p.add_argument("--margin-x")
    p.add_argument("--margin-y")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--t", type=float, action="append", required=True)
    p.add_argument("--day", type=float, default=None)
    p.add_argument("--margin", choices=["exp", "original"], default="exp")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_return_curve)

    p = sub.add_parser("evaluate", help="replicated simulation study for one family")
    _common(p)
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--estimators", nargs="+", choices=["qr", "bp"], default=["qr", "bp"])
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("case-study", help="surrogate or CSV case pipeline")
    _common(p)
    p.add_argument("--data", help="series CSV instead of the surrogate generator")
    p.add_argument("--resamples", type=int, default=250)
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--surrogate", type=json.loads, default=None,
                   help="JSON object of surrogate settings")
    p.add_argument("--case", type=json.loads, default=None,
                   help="JSON object of case settings (curve_years, q_tail, half_window, ...)")
    p.set_defaults(func=cmd_case_study)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise ConfigError(f"unknown subcommand {name!r}")


def parse(argv):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # read --config before full parsing so it can satisfy required options
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[1:])
    if argv and not argv[0].startswith("-") and known.config:
        cfg = io.read_json(known.config)
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        sp = _subparser(parser, argv[0])
        command = argv[0]
        dests = {a.dest for a in sp._actions} - _META - {"help"}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {unknown}")
        # config supplies defaults; flags given on the command line still win
        sp.set_defaults(**cfg)
        for a in sp._actions:
            if a.dest in cfg:
                a.required = False
    args = parser.parse_args(argv)
    if args.workers is None:
        args.workers = default_workers()
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return args


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _META and k != "workers"}


def _finish(args, artifacts):
    io.write_manifest(args.out_dir, args.command, _echo(args), artifacts)


# subcommands


def cmd_simulate(args):
    out = Path(args.out_dir)
    spec = CopulaSpec(args.family, args.n, seed=args.seed, asymmetry=tuple(args.asymmetry))
    mcmc = None
    if args.family == "gauge_model12":
        mcmc = McmcConfig(proposal_sd=args.proposal_sd, burn_in=args.burn_in, thin=args.thin,
                          chain_seed=args.seed, pit=args.pit)
    data = sample(spec, mcmc=mcmc)
    path = io.write_csv(out / "simulated.csv", "exp_series",
                        {"t": data.t, "day": np.full(len(data), np.nan), "x": data.x,
                         "y": data.y})
    _finish(args, [path])


def _read_exp(path) -> ExpSeries:
    cols = io.read_csv(path, "exp_series")
    day = cols["day"]
    day = None if np.all(np.isnan(day)) else day
    return ExpSeries(t=cols["t"], x=cols["x"], y=cols["y"], day=day)


def cmd_fit_margins(args):
    raw = read_series(args.data)
    basis = _basis(args, "margin", args.period)
    if args.penalty == "gcv":
        penalty = None
    else:
        try:
            penalty = float(args.penalty)
        except ValueError as exc:
            raise ConfigError("--penalty must be a number or 'gcv'") from exc
    mx = fit_marginal(raw.x, raw.t, raw.day, basis=basis, q_y=args.q_tail, penalty=penalty,
                      tail_basis=BasisSpec(degree=args.tail_degree_x, period=args.period))
    my = fit_marginal(raw.y, raw.t, raw.day, basis=basis, q_y=args.q_tail, penalty=penalty,
                      tail_basis=BasisSpec(degree=args.tail_degree_y, period=args.period))
    out = Path(args.out_dir)
    arts = [io.write_json(out / "margin_x.json", mx.to_dict()),
            io.write_json(out / "margin_y.json", my.to_dict())]
    _finish(args, arts)


def _load_margin(path) -> MarginalModel:
    try:
        return MarginalModel.from_dict(io.read_json(path))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a marginal model ({exc})") from exc


def cmd_transform(args):
    raw = read_series(args.data)
    models = (_load_margin(args.margin_x), _load_margin(args.margin_y))
    data = to_exponential(raw.x, raw.y, models, raw.t, raw.day)
    path = io.write_csv(Path(args.out_dir) / "exponential.csv", "exp_series",
                        {"t": data.t, "day": raw.day, "x": data.x, "y": data.y})
    _finish(args, [path])


def cmd_fit_adf(args):
    data = _read_exp(args.data)
    schedule = QuantileSchedule.linear(args.pairs, args.q_lo, args.q_hi, args.gap)
    grid = lambda_qr_average(data, schedule=schedule, basis=_basis(args, "qr", args.period),
                             workers=args.workers)
    cfg = BernsteinFitConfig(degree=args.k, link=args.link, starts=args.starts,
                             seed=args.seed, max_times=args.max_times)
    model = fit_bernstein(grid, cfg, basis=_basis(args, "bp", args.period))
    out = Path(args.out_dir)
    arts = [io.write_json(out / "adf_grid.json", grid.to_dict()),
            io.write_json(out / "bernstein.json", model.to_dict())]
    if args.plot_t:
        t = np.asarray(args.plot_t, dtype=float)
        day = None if data.day is None else np.full(t.size, 45.0)
        lam = model.evaluate(grid.rays, model.basis.design(t, day))
        path = out / "adf.svg"
        path.write_text(lines_svg([(grid.rays, lam[:, j]) for j in range(t.size)],
                                  labels=[f"t={v:g}" for v in t], xlabel="w",
                                  ylabel="lambda(w | t)"))
        arts.append(path)
    _finish(args, arts)


def cmd_return_curve(args):
    try:
        grid = AdfGrid.from_dict(io.read_json(args.grid))
        model = BernsteinModel.from_dict(io.read_json(args.bernstein)) if args.bernstein else None
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed model file ({exc})") from exc
    if args.margin == "original" and not (args.margin_x and args.margin_y):
        raise ConfigError("--margin original needs --margin-x and --margin-y")
    models = None
    if args.margin == "original":
        models = (_load_margin(args.margin_x), _load_margin(args.margin_y))
    out = Path(args.out_dir)
    arts, curves = [], []
    for t in args.t:
        try:
            c = return_curve(grid, args.p, t, day=args.day, adf=model)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if models is not None:
            c = back_transform(c, models, t, args.day)
        curves.append(c)
        arts.append(io.write_csv(out / f"curve_t{t:g}.csv", "curve",
                                 {"w": c.w, "x": c.x, "y": c.y, "flag": c.flags}))
    if args.svg:
        path = out / "curves.svg"
        path.write_text(curves_svg(curves, labels=[f"t={t:g}" for t in args.t]))
        arts.append(path)
    _finish(args, arts)


def cmd_evaluate(args):
    cfg = ReplicationConfig(family=args.family, n=args.n, replicates=args.replicates,
                            seed=args.seed, estimators=tuple(args.estimators))
    if args.replicates < 2:
        raise ConfigError("--replicates must be at least 2")
    sets = run_replications(cfg, workers=args.workers)
    out = Path(args.out_dir)
    cols = lambda rows: {k: [r.get(k, np.nan) for r in rows]
                         for k in ["copula", "time", "qr", "bp"]}
    arts = [io.write_csv(out / "mise.csv", "mise", cols(mise_table(args.family, sets))),
            io.write_csv(out / "median_ise.csv", "mise", cols(median_ise_table(args.family, sets)))]
    for est, reps in sets.items():
        for j, label in enumerate(("start", "middle", "end")):
            b = envelope(reps.values[:, :, j])
            arts.append(io.write_csv(out / f"envelope_{est}_{label}.csv", "envelope",
                                     {"axis": reps.rays, "lower": b.lower, "median": b.median,
                                      "upper": b.upper}))
            if args.svg:
                path = out / f"envelope_{est}_{label}.svg"
                path.write_text(bands_svg(reps.rays, b.lower, b.median, b.upper,
                                          truth=reps.truth[:, j],
                                          title=f"{args.family} {est} {label}"))
                arts.append(path)
    _finish(args, arts)


_CASE_KEYS = {"curve_years", "curve_day", "q_tail", "half_window", "eta_threshold", "eta_step",
              "return_years", "link", "k", "segment_len", "block_len"}


def cmd_case_study(args):
    if args.data:
        raw = read_series(args.data)
    else:
        try:
            spec = SurrogateSpec.from_dict({**(args.surrogate or {}), "seed": args.seed})
        except TypeError as exc:
            raise ConfigError(f"invalid surrogate settings: {exc}") from exc
        raw = generate_surrogate(spec)
    case = dict(args.case or {})
    unknown = sorted(set(case) - _CASE_KEYS)
    if unknown:
        raise ConfigError(f"unknown case settings: {unknown}")
    cfg = CaseConfig(seed=args.seed)
    bern = cfg.bernstein
    if "link" in case or "k" in case:
        bern = replace(bern, link=case.pop("link", bern.link), degree=case.pop("k", bern.degree))
    plan = BootstrapPlan(segment_len=case.pop("segment_len", 450),
                         block_len=case.pop("block_len", 15),
                         resamples=max(args.resamples, 1), seed=args.seed)
    if "curve_years" in case:
        case["curve_years"] = tuple(int(v) for v in case["curve_years"])
    cfg = replace(cfg, bernstein=bern, bootstrap=plan, **case)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arts = []
    if not args.data:
        arts.append(write_series(out / "series.csv", raw))
    try:
        res = run_case_pipeline(raw, cfg, out_dir=out, workers=args.workers,
                                bootstrap=not args.no_bootstrap and args.resamples > 0)
    finally:
        produced = sorted(p for p in out.iterdir() if p.name != "manifest.json")
        _finish(args, produced)
    return res


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse(argv)
        args.func(args)
    except ConfigError as exc:
        print(f"nsadf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"nsadf: numerical failure in stage {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"nsadf: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"nsadf: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
