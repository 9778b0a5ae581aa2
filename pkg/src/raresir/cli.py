"""Batch command line: scenarios, campaigns, sweeps, heat maps, extremes, oracles.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical failure.
Every output file gets a ``<name>.manifest`` (flat ``key=value``) next to it.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ldp import Exponential, Gaussian, SweepPoint, fit_rate_linear, fit_rows, oracle_sweep
from .pathloss import linear_to_db
from .rare import (
    CAMPAIGN_COLUMNS,
    CampaignConfig,
    campaign_row,
    run_campaign,
    run_count_heuristic,
    run_sweep,
    simulate,
)
from .sampler import SeedSpec, UserSample, jitter_points, sample_counts, write_points_csv
from .scenario import (
    GridFormatError,
    calibrated_tau,
    city_block_window,
    generate_synthetic,
    load_scenario,
    save_scenario,
    write_ascii_grid,
)
from .sir import ThresholdSpec, evaluate_outcome

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- value parsing

_POWER = re.compile(r"^\s*([0-9.eE+-]+)\s*(?:\^|\*\*)\s*([0-9.eE+-]+)\s*$")


def parse_density(text):
    """Decimal or power expression such as ``2^-12``."""
    m = _POWER.match(str(text))
    try:
        value = float(m.group(1)) ** float(m.group(2)) if m else float(text)
    except (ValueError, OverflowError):
        raise argparse.ArgumentTypeError(f"not a density: {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"not a density: {text!r}")
    return value


def parse_density_list(text):
    return [parse_density(tok) for tok in str(text).split(",") if tok.strip()]


def parse_int_list(text):
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None


def parse_rect(text):
    parts = str(text).split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"obstacle needs x0,y0,x1,y1: {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"obstacle needs numbers: {text!r}") from None


def read_config(path):
    """Flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


# ---------------------------------------------------------------- output helpers


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, columns, rows, append=False):
    path = Path(path)
    new = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _scenario_inputs(args):
    p = Path(args.scenario)
    files = [p / "pathloss.asc", p / "mask.asc"] if p.is_dir() else [p]
    if getattr(args, "mask", None):
        files.append(Path(args.mask))
    return {str(f): _digest(f) for f in files if f.exists()}


def write_manifest(path, command, args, started, inputs=None, extra=None):
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config_values")}
    lines = [f"command={command}", f"version={__version__}"]
    lines += [f"param.{k}={_manifest_value(v)}" for k, v in params.items()]
    lines.append(f"master_seed={params.get('seed', '')}")
    for name, dig in sorted((inputs or {}).items()):
        lines.append(f"input.{name}=sha256:{dig}")
    for k, v in (extra or {}).items():
        lines.append(f"{k}={_manifest_value(v)}")
    lines.append(f"started={started}")
    lines.append(f"finished={_now()}")
    Path(str(path) + ".manifest").write_text("\n".join(lines) + "\n")


def _manifest_value(v):
    if isinstance(v, (list, tuple)):
        return ",".join(_manifest_value(x) for x in v)
    return fmt(v) if v is not None else ""


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _load(args):
    return load_scenario(args.scenario, getattr(args, "mask", None))


def _tau_db(args, scenario):
    if args.tau_db is not None:
        return args.tau_db
    return linear_to_db(calibrated_tau(scenario.intensity))


# ---------------------------------------------------------------- commands


def cmd_scenario_gen(args):
    started = _now()
    if args.preset == "city-blocks":
        scn = city_block_window(args.alpha)
    else:
        if args.cols is None or args.rows is None:
            raise UsageError("--cols and --rows are required without --preset")
        scn = generate_synthetic(
            args.cols, args.rows, args.cell, args.cell_height, args.alpha, args.obstacle or (), args.name
        )
    out = Path(args.out)
    pl, mk = save_scenario(scn, out)
    for f in (pl, mk):
        write_manifest(f, "scenario gen", args, started)
    print(f"wrote {pl} and {mk}")
    return EXIT_OK


def cmd_scenario_info(args):
    scn = _load(args)
    g = scn.geometry
    tau = calibrated_tau(scn.intensity)
    blocked = int(scn.mask.blocked.sum())
    print(f"name: {scn.name}")
    print(f"grid: {g.n_cols} x {g.n_rows} tiles of {g.cell_width:g} x {g.cell_height:g} m")
    print(f"window: {g.width:g} x {g.height:g} m (area {g.area:g} m^2)")
    print(f"blocked tiles: {blocked} ({blocked / (g.n_cols * g.n_rows):.1%})")
    print(f"free area: {scn.intensity.total_mass:g} m^2")
    print(f"calibrated tau: {tau:.6g} ({linear_to_db(tau):.2f} dB)")
    return EXIT_OK


def cmd_simulate(args):
    started = _now()
    if args.auto_n and args.n_tail is not None:
        raise UsageError("--n-tail and --auto-n are mutually exclusive")
    if not args.lam > 0:
        raise UsageError("--lambda must be > 0")
    scn = _load(args)
    tau_db = _tau_db(args, scn)
    n_tail = run_count_heuristic(args.lam) if args.auto_n or args.n_tail is None else args.n_tail
    cfg = CampaignConfig(args.lam, tau_db, args.eps, args.n_mean, n_tail, args.seed)
    res = run_campaign(scn, cfg, threads=args.threads)
    _write_csv(args.out, CAMPAIGN_COLUMNS, [campaign_row(res)], append=True)
    t = res.tail
    write_manifest(
        args.out,
        "simulate",
        args,
        started,
        _scenario_inputs(args),
        {"tau_db": tau_db, "tau_lambda_db": cfg.threshold.tau_lambda_db, "n_tail": n_tail, "b": t.b},
    )
    msg = f"lambda={cfg.lam:g} mean_L={res.mean:.6g} b={t.b:.6g} hits={t.hits}/{t.n} p_hat={t.p_hat:.6g}"
    if not t.observed:
        msg += " (tail not observed)"
    elif t.needs_wilson:
        msg += " wilson=[{:.3g}, {:.3g}]".format(*t.wilson)
    print(msg)
    return EXIT_OK


SWEEP_COLUMNS = ("lambda", "n", "hits", "b", "mean_L", "p_hat", "std_err", "log_p", "fitted", "residual", "rate_point", "rate_curve")


def cmd_sweep(args):
    started = _now()
    if len(args.lambdas) < 2:
        raise UsageError("--lambdas needs at least two values")
    if any(lam <= 0 for lam in args.lambdas):
        raise UsageError("densities must be > 0")
    scn = _load(args)
    tau_db = _tau_db(args, scn)
    n_tail = None if args.auto_n or args.n_tail is None else args.n_tail
    results = run_sweep(
        scn, args.lambdas, tau_db, args.eps, n_mean=args.n_mean, n_tail=n_tail, master_seed=args.seed, threads=args.threads
    )
    points = [SweepPoint(r.config.lam, r.tail.p_hat, r.tail.std_err, r.tail.n) for r in results]
    try:
        fit = fit_rate_linear(points, weighted=args.weighted)
    except ValueError as exc:
        fit = None
        diagnostic = str(exc)
    rows = []
    fitted = fit_rows(points, fit) if fit is not None else None
    for i, (r, pt) in enumerate(zip(results, points)):
        log_p = math.log(pt.p_hat) if pt.p_hat > 0 else ""
        tail = fitted[i][6:] if fitted else ("", "", "", "")
        rows.append((pt.lam, r.tail.n, r.tail.hits, r.tail.b, r.mean, pt.p_hat, pt.std_err, log_p, *tail))
    _write_csv(args.out, SWEEP_COLUMNS, rows)
    extra = {"tau_db": tau_db, "seeds": [r.config.master_seed for r in results]}
    if fit is not None:
        extra.update(p1=fit.p1, p2=fit.p2, rate_estimate=fit.rate_estimate, r_squared=fit.r_squared,
                     points_used=fit.points_used, excluded=list(fit.excluded))
    write_manifest(args.out, "sweep", args, started, _scenario_inputs(args), extra)
    for r in results:
        print(f"lambda={r.config.lam:g} n={r.tail.n} hits={r.tail.hits} p_hat={r.tail.p_hat:.6g}")
    if fit is None:
        print(f"fit skipped: {diagnostic}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"fit: log p = {fit.p1:.6g} * lambda + {fit.p2:.6g}  (R^2={fit.r_squared:.4f}, rate estimate {fit.rate_estimate:.6g})")
    if fit.excluded:
        print(f"excluded (no hits): {', '.join(f'{x:g}' for x in fit.excluded)}")
    return EXIT_OK


def cmd_heatmap(args):
    started = _now()
    if not args.lam > 0:
        raise UsageError("--lambda must be > 0")
    scn = _load(args)
    tau_db = _tau_db(args, scn)
    cfg = CampaignConfig(args.lam, tau_db, args.eps, args.n_mean, args.n, args.seed)
    res = run_campaign(scn, cfg, heatmap=True, threads=args.threads)
    heat = res.heatmap
    print(f"lambda={cfg.lam:g} tau_lambda={cfg.threshold.tau_lambda_db:.2f} dB b={res.b:.6g} "
          f"atypical={heat.n_atypical}/{cfg.n_tail}")
    if heat.empty:
        print("no atypical replicates observed; no grids written", file=sys.stderr)
        return EXIT_NUMERIC
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = {"tau_db": tau_db, "tau_lambda_db": cfg.threshold.tau_lambda_db, "b": res.b,
             "n_atypical": heat.n_atypical, "mean_L": res.mean}
    for name, grid in (("mean_counts.asc", heat.mean_counts), ("ratio.asc", heat.ratio)):
        with open(out / name, "w", newline="\n") as fh:
            write_ascii_grid(fh, scn.geometry, grid, heat.blocked)
        write_manifest(out / name, "heatmap", args, started, _scenario_inputs(args), extra)
    print(f"wrote {out / 'mean_counts.asc'} and {out / 'ratio.asc'}")
    return EXIT_OK


def cmd_extremes(args):
    started = _now()
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if not args.lam > 0:
        raise UsageError("--lambda must be > 0")
    scn = _load(args)
    tau_db = _tau_db(args, scn)
    thr = ThresholdSpec(tau_db, args.lam)
    if args.replay is not None:
        sample = sample_counts(scn, args.lam, SeedSpec(args.seed, args.replay))
        o = evaluate_outcome(sample, scn, thr)
        print(f"replicate {args.replay}: {o.connected_fraction:.2%} connected "
              f"({o.total_users - o.disconnected_users}/{o.total_users}) fraction={o.connected_fraction!r}")
        return EXIT_OK
    batch = simulate(scn, args.lam, tau_db, args.seed, 0, args.n, track=True, threads=args.threads)
    rec = batch.extremes
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = [
        f"least: {rec.least.connected_fraction:.2%} connected, most: {rec.most.connected_fraction:.2%} connected",
        f"lambda={args.lam!r} tau_db={tau_db!r} tau_lambda_db={thr.tau_lambda_db:.2f} n={args.n} seed={args.seed}",
    ]
    for label, ex in (("least", rec.least), ("most", rec.most)):
        report.append(
            f"{label}: replicate={ex.replicate_index} users={ex.total_users} disconnected={ex.disconnected_users} "
            f"fraction={ex.connected_fraction!r} digest={ex.digest}"
        )
        sample = UserSample(ex.counts, args.lam, ex.replicate_index)
        pts = jitter_points(sample, scn, SeedSpec(args.seed, ex.replicate_index))
        path = out / f"{label}_points.csv"
        with open(path, "w", newline="\n") as fh:
            write_points_csv(fh, pts)
        write_manifest(path, "extremes", args, started, _scenario_inputs(args))
    (out / "report.txt").write_text("\n".join(report) + "\n")
    write_manifest(out / "report.txt", "extremes", args, started, _scenario_inputs(args))
    print("\n".join(report))
    return EXIT_OK


ORACLE_COLUMNS = ("n", "reps", "hits", "p_hat", "std_err", "log_p", "fitted")


def cmd_oracle(args):
    started = _now()
    try:
        dist = Exponential(args.m) if args.dist == "exp" else Gaussian(args.m, args.sigma)
        analytic = dist.rate(args.s)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tails, fit = oracle_sweep(
        dist, args.n_list, args.s, reps=args.reps, seed=args.seed, target_rel_err=args.target_rel_err,
        max_reps=args.max_reps, method=args.method,
    )
    rows = []
    for t in tails:
        log_p = math.log(t.p_hat) if t.p_hat > 0 else ""
        fitted = float(fit.predict(t.n)) if fit is not None else ""
        rows.append((t.n, t.reps, t.hits, t.p_hat, t.std_err, log_p, fitted))
    if args.out:
        _write_csv(args.out, ORACLE_COLUMNS, rows)
    for t in tails:
        rel = t.std_err / t.p_hat if t.p_hat > 0 else math.inf
        print(f"n={t.n} reps={t.reps} hits={t.hits} p_hat={t.p_hat:.6g} rel_se={rel:.3g}")
    print(f"analytic rate: {analytic:.6g}")
    if fit is None:
        print("fit skipped: fewer than two sample sizes with hits", file=sys.stderr)
        return EXIT_NUMERIC
    rel_err = abs(fit.rate_estimate - analytic) / analytic if analytic > 0 else abs(fit.rate_estimate)
    print(f"estimated rate: {fit.rate_estimate:.6g}")
    print(f"relative error: {rel_err:.4g}" if analytic > 0 else f"absolute error: {rel_err:.4g}")
    if args.out:
        write_manifest(args.out, "oracle", args, started, None,
                       {"analytic_rate": analytic, "estimated_rate": fit.rate_estimate, "p1": fit.p1, "p2": fit.p2})
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common(p, tau=True):
    p.add_argument("--scenario", required=True, help="pathloss .asc file or scenario directory")
    p.add_argument("--mask", help="optional 0/1 building mask .asc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    if tau:
        p.add_argument("--tau-db", type=float, default=None, help="threshold tau in dB (default: calibrated)")


def build_parser():
    parser = _Parser(prog="raresir", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="flat key=value file pre-populating flags")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    scn = sub.add_parser("scenario", help="generate or inspect scenarios")
    scn_sub = scn.add_subparsers(dest="action", parser_class=_Parser)
    gen = scn_sub.add_parser("gen", help="write a synthetic scenario")
    gen.add_argument("--cols", type=int)
    gen.add_argument("--rows", type=int)
    gen.add_argument("--preset", choices=("city-blocks",), help="311 x 274 m synthetic city-block window")
    gen.add_argument("--cell", type=float, default=1.0)
    gen.add_argument("--cell-height", type=float, default=None)
    gen.add_argument("--alpha", type=float, default=3.0)
    gen.add_argument("--obstacle", type=parse_rect, action="append", help="x0,y0,x1,y1 (repeatable)")
    gen.add_argument("--name", default="synthetic")
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=cmd_scenario_gen)
    info = scn_sub.add_parser("info", help="print geometry, free area and calibrated tau")
    info.add_argument("--scenario", required=True)
    info.add_argument("--mask")
    info.set_defaults(func=cmd_scenario_info)

    sim = sub.add_parser("simulate", help="one campaign: mean, b and tail probability")
    _common(sim)
    sim.add_argument("--lambda", dest="lam", type=parse_density, required=True)
    sim.add_argument("--eps", type=float, default=0.01)
    sim.add_argument("--n-mean", type=int, default=10_000)
    sim.add_argument("--n-tail", type=int, default=None)
    sim.add_argument("--auto-n", action="store_true", help="n_tail = round(1000 e^lambda)")
    sim.add_argument("--out", default="campaign.csv")
    sim.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="campaigns over densities plus a rate fit")
    _common(sw)
    sw.add_argument("--lambdas", type=parse_density_list, required=True)
    sw.add_argument("--eps", type=float, default=0.01)
    sw.add_argument("--n-mean", type=int, default=10_000)
    sw.add_argument("--n-tail", type=int, default=None)
    sw.add_argument("--auto-n", action="store_true")
    sw.add_argument("--weighted", action="store_true", help="inverse-variance weighted fit")
    sw.add_argument("--out", default="sweep.csv")
    sw.set_defaults(func=cmd_sweep)

    hm = sub.add_parser("heatmap", help="conditional user density of atypical configurations")
    _common(hm)
    hm.add_argument("--lambda", dest="lam", type=parse_density, required=True)
    hm.add_argument("--eps", type=float, default=0.3)
    hm.add_argument("--n", type=int, default=100_000, help="tail-phase replicates")
    hm.add_argument("--n-mean", type=int, default=10_000)
    hm.add_argument("--out-dir", default="heatmap")
    hm.set_defaults(func=cmd_heatmap)

    ex = sub.add_parser("extremes", help="least and most connected configurations")
    _common(ex)
    ex.add_argument("--lambda", dest="lam", type=parse_density, required=True)
    ex.add_argument("--n", type=int, default=10_000)
    ex.add_argument("--replay", type=int, default=None, help="re-evaluate one replicate index")
    ex.add_argument("--out-dir", default="extremes")
    ex.set_defaults(func=cmd_extremes)

    orc = sub.add_parser("oracle", help="iid empirical-mean tails vs closed-form rate")
    orc.add_argument("--dist", choices=("exp", "gauss"), required=True)
    orc.add_argument("--m", type=float, default=1.0)
    orc.add_argument("--sigma", type=float, default=1.0)
    orc.add_argument("--s", type=float, required=True)
    orc.add_argument("--n-list", type=parse_int_list, required=True)
    orc.add_argument("--reps", type=int, default=None, help="fixed replicates per n (default: adaptive)")
    orc.add_argument("--target-rel-err", type=float, default=0.1)
    orc.add_argument("--max-reps", type=int, default=10**8)
    orc.add_argument("--method", choices=("exact", "iid"), default="exact")
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--out", default=None)
    orc.set_defaults(func=cmd_oracle)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    # push config values into every subparser as defaults; explicit flags still win
    stack = [parser]
    while stack:
        p = stack.pop()
        for action in p._actions:
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())
            else:
                keys = [action.dest] + [o.lstrip("-").replace("-", "_") for o in action.option_strings]
                key = next((k for k in keys if k in values), None)
                if key is None:
                    continue
                raw = values[key]
                if isinstance(action, argparse._StoreTrueAction):
                    val = raw.lower() in ("1", "true", "yes", "on")
                elif action.type is not None:
                    val = action.type(raw)
                else:
                    val = raw
                action.default = val
                action.required = False


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GridFormatError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
