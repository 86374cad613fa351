"""Command-line front end.

Every command reads and writes files and drops a ``<output>.meta.json``
sidecar next to its main output with the effective configuration.
Options come from built-in defaults, then a ``--config`` file of
``key = value`` lines, then the command line, later sources winning.

Exit codes: 0 success, 2 bad input or configuration, 3 numeric failure.
"""

import argparse
import configparser
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import econ_media, moments, prob_approx, risk_domain, trade_data
from .errors import InputError, NumericError

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
MARKOWITZ_TOL = 1e-9
VERIFY_TOL = 1e-4


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# (flags, dest, type, default, help); type None marks a boolean switch
COMMON = [
    (("-i", "--input"), "input", str, None, "input file"),
    (("-o", "--output"), "output", str, None, "output file"),
    (("--seed",), "seed", int, 0, "random seed"),
    (("--verbose",), "verbose", None, False, "chatty stdout"),
]

OPTIONS = {
    "synth": [
        (("--companies",), "companies", int, 1, "number of companies"),
        (("--steps",), "steps", int, 1000, "ticks per company"),
        (("--price0",), "price0", float, 100.0, "initial price"),
        (("--drift",), "drift", float, 0.0, "mean log price increment"),
        (("--volatility",), "volatility", float, 0.01, "sd of log price increments"),
        (("--volume-mean",), "volume_mean", float, 100.0, "mean trade volume"),
        (("--volume-sigma",), "volume_sigma", float, 0.5, "log-sd of trade volume"),
        (("--risk-orders",), "risk_orders", int, 4, "moment orders carried by risk vectors"),
        (("--risk-dims",), "risk_dims", int, 1, "risk coordinates per order"),
        (("--risks-output",), "risks_output", str, None, "risk CSV (default <output>.risks.csv)"),
    ],
    "moments": [
        (("-N", "--window"), "window", int, 64, "ticks per averaging window"),
        (("--xi",), "xi", int, 0, "return shift in ticks"),
        (("--n-max",), "n_max", int, 4, "highest moment order"),
        (("--stride",), "stride", int, None, "window stride (moving windows)"),
        (("--workers",), "workers", int, 1, "worker threads"),
        (("--prescale",), "prescale", None, False, "scale by window means before powers"),
        (("--repair",), "repair", None, False, "forward-fill missing steps"),
    ],
    "aggregate": [
        (("--risks",), "risks", str, None, "risk CSV"),
        (("-d", "--cell-size"), "cell_size", float, 1.0, "risk cell side"),
        (("-N", "--window"), "window", int, 64, "ticks per company window"),
        (("--k-x",), "k_x", int, 1, "company windows per cell window"),
        (("--k-m",), "k_m", int, 1, "cell windows per market window"),
        (("--xi",), "xi", int, 0, "return shift in ticks"),
        (("--n-max",), "n_max", int, 4, "highest moment order"),
        (("--repair",), "repair", None, False, "forward-fill missing steps"),
    ],
    "density": [
        (("--moments",), "moments", _float_list, None, "inline raw moments p1,p2,..."),
        (("--company",), "company", str, None, "company to take from the moment CSV"),
        (("--window",), "window", int, None, "window to take from the moment CSV"),
        (("--kind",), "kind", str, "p", "moment kind to use (p, r or pi)"),
        (("--n",), "n", int, None, "approximation order (default: all moments)"),
        (("--b",), "b", float, None, "regularizer weight"),
        (("--two-k",), "two_k", int, None, "regularizer power 2k"),
        (("--b-scale",), "b_scale", float, 0.05, "scale of the default regularizer weight"),
        (("--points",), "points", int, 4097, "density grid points"),
        (("--range-sigmas",), "range_sigmas", float, 8.0, "grid half width in sd"),
        (("--negativity-budget",), "negativity_budget", float,
         prob_approx.DEFAULT_NEGATIVITY_BUDGET, "tolerated negative mass"),
        (("--decay-tol",), "decay_tol", float, prob_approx.DEFAULT_DECAY_TOL, "|F| cutoff"),
        (("--verify-moments",), "verify_moments", None, False, "fail if round trip exceeds 1e-4"),
    ],
    "media": [
        (("--dt",), "dt", float, None, "override scenario dt"),
        (("--t-end",), "t_end", float, None, "override scenario t_end"),
        (("--cfl-max",), "cfl_max", float, None, "override scenario CFL limit"),
        (("--trajectory",), "trajectory", str, None, "trajectory CSV (default <output>.trajectory.csv)"),
    ],
    "report": [],
}

HELP = {
    "synth": "write a synthetic tick CSV and risk CSV",
    "moments": "per-company moments of a tick CSV",
    "aggregate": "cell-level and market-level moments",
    "density": "density from raw moments",
    "media": "run a transport scenario",
    "report": "concatenate metadata sidecars",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="marketmoments", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name, help=HELP[name], argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="key = value file")
        for flags, dest, typ, _, hlp in COMMON + opts:
            if name == "report" and dest == "input":
                p.add_argument(*flags, dest=dest, nargs="+", help="sidecar files")
            elif typ is None:
                p.add_argument(*flags, dest=dest, action="store_true", help=hlp)
            else:
                p.add_argument(*flags, dest=dest, type=typ, help=hlp)
    return parser


def _read_config(path, table):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string("[config]\n" + Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise InputError(f"bad config file {path}: {exc}") from None
    types = {dest: typ for _, dest, typ, _, _ in table}
    out = {}
    for key, raw in cp["config"].items():
        dest = key.replace("-", "_")
        if dest not in types:
            raise InputError(f"unknown config key {key!r}")
        try:
            out[dest] = (types[dest] or _bool)(raw)
        except ValueError:
            raise InputError(f"bad value for {key}: {raw!r}") from None
    return out


def effective_config(command, ns):
    """Merge defaults, config file and flags (in rising precedence)."""
    table = COMMON + OPTIONS[command]
    cfg = {dest: default for _, dest, _, default, _ in table}
    flags = vars(ns).copy()
    flags.pop("command", None)
    path = flags.pop("config", None)
    if path is not None:
        cfg.update(_read_config(path, table))
    cfg.update(flags)
    return cfg


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise InputError(f"missing required option --{k.replace('_', '-')}")


def _write(path, data):
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None


def _sidecar(output, command, cfg, **extra):
    meta = {"command": command, "config": cfg}
    meta.update(extra)
    text = json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n"
    _write(str(output) + ".meta.json", text.encode("utf-8"))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _load_ticks(cfg):
    _need(cfg, "input")
    try:
        series = trade_data.read_ticks(cfg["input"])
    except OSError as exc:
        raise InputError(f"cannot read {cfg['input']}: {exc.strerror}") from None
    if cfg.get("repair"):
        series = trade_data.repair_gaps(series)
    return series


def _say(cfg, msg):
    if cfg.get("verbose"):
        print(msg)


def cmd_synth(cfg):
    _need(cfg, "output")
    spec = trade_data.SynthSpec(
        n_companies=cfg["companies"], n_steps=cfg["steps"], price0=cfg["price0"],
        drift=cfg["drift"], volatility=cfg["volatility"], volume_mean=cfg["volume_mean"],
        volume_sigma=cfg["volume_sigma"], n_moments=cfg["risk_orders"], n_risks=cfg["risk_dims"])
    spec.check()
    series, risks = trade_data.generate_synthetic(spec, cfg["seed"])
    risks_out = cfg["risks_output"] or str(Path(cfg["output"]).with_suffix("")) + ".risks.csv"
    _write(cfg["output"], trade_data.write_tick_csv(series))
    _write(risks_out, trade_data.write_risk_csv(risks))
    _sidecar(cfg["output"], "synth", cfg, outputs=[cfg["output"], risks_out], rows=len(series))
    _say(cfg, f"wrote {len(series)} ticks to {cfg['output']} and risks to {risks_out}")
    return EXIT_OK


def cmd_moments(cfg):
    _need(cfg, "output")
    wc = moments.WindowConfig(cfg["window"], cfg["xi"], cfg["n_max"], cfg["stride"])
    if cfg["workers"] < 1:
        raise InputError("workers must be positive")
    series = _load_ticks(cfg)
    sets = moments.compute_moments(series, wc, prescale=cfg["prescale"], workers=cfg["workers"])
    _write(cfg["output"], moments.write_moment_csv(sets))
    _sidecar(cfg["output"], "moments", cfg, windows=len(sets))
    _say(cfg, f"wrote {len(sets)} moment sets to {cfg['output']}")
    return EXIT_OK


def cmd_aggregate(cfg):
    _need(cfg, "output", "risks")
    ac = risk_domain.AggregationConfig(cfg["window"], cfg["k_x"], cfg["k_m"], cfg["xi"], cfg["n_max"])
    series = _load_ticks(cfg)
    try:
        risks = trade_data.read_risks(cfg["risks"])
    except OSError as exc:
        raise InputError(f"cannot read {cfg['risks']}: {exc.strerror}") from None
    grid = risk_domain.assign_cells(risks, cfg["cell_size"], n_max=cfg["n_max"])
    dense = trade_data.to_dense(series)
    cells, market = risk_domain.aggregate(dense, grid, ac)

    checks = {}
    targets = [(cell, "/".join(str(c) for c in cell)) for cell in grid.occupied(1)]
    targets.append((risk_domain.WHOLE_MARKET, "-"))
    for cell, label in targets:
        direct = risk_domain.markowitz_portfolio_return(dense, grid, cell, ac)
        for k, rd in enumerate(direct):
            checks[(label, k)] = rd
    worst = 0.0
    markowitz = {}
    for cm in list(cells) + list(market):
        key = (cm.cell_label, cm.time_index)
        rd = checks.get(key)
        if rd is None or not math.isfinite(rd) or not cm.return_eligible:
            continue
        dev = abs(float(cm.r[0]) - rd) / abs(rd)
        markowitz[key] = (rd, dev)
        worst = max(worst, dev)

    _write(cfg["output"], risk_domain.write_aggregate_csv(
        risk_domain.aggregate_rows(cells, market, markowitz)))
    _sidecar(cfg["output"], "aggregate", cfg, cells=len(grid.occupied()),
             markowitz_max_deviation=worst)
    _say(cfg, f"wrote {len(cells)} cell windows and {len(market)} market windows")
    if worst > MARKOWITZ_TOL:
        raise NumericError(f"portfolio-return check failed: relative deviation {worst:.3g} > {MARKOWITZ_TOL:g}")
    return EXIT_OK


def _moments_from_file(cfg):
    try:
        table = moments.parse_moment_csv(Path(cfg["input"]).read_bytes())
    except OSError as exc:
        raise InputError(f"cannot read {cfg['input']}: {exc.strerror}") from None
    keys = sorted(table)
    if cfg["company"] is not None:
        keys = [k for k in keys if k[0] == cfg["company"]]
    if cfg["window"] is not None:
        keys = [k for k in keys if k[1] == cfg["window"]]
    if not keys:
        raise InputError("no moment set matches --company/--window")
    kinds = table[keys[0]]
    if cfg["kind"] not in kinds:
        raise InputError(f"moment set {keys[0]} has no kind {cfg['kind']!r}")
    vals = kinds[cfg["kind"]]
    return [vals[m] for m in sorted(vals)], keys[0]


def cmd_density(cfg):
    _need(cfg, "output")
    if cfg["moments"] is not None:
        mu, source = cfg["moments"], "inline"
    else:
        _need(cfg, "input")
        mu, source = _moments_from_file(cfg)
    grid = prob_approx.GridSpec(cfg["points"], cfg["range_sigmas"])
    dg = prob_approx.density_from_moments(
        mu, n=cfg["n"], b=cfg["b"], two_k=cfg["two_k"], grid=grid, b_scale=cfg["b_scale"],
        decay_tol=cfg["decay_tol"], negativity_budget=cfg["negativity_budget"])
    _write(cfg["output"], prob_approx.write_density_csv(dg))
    meta = dg.metadata()
    _sidecar(cfg["output"], "density", cfg, source=source, density=meta)
    errors = meta["moment_errors"]
    if cfg["verify_moments"]:
        print("moment round-trip errors: " + ", ".join(f"m={m}: {e:.3g}" for m, e in enumerate(errors, 1)))
        if max(errors) > VERIFY_TOL:
            raise NumericError(f"moment round trip error {max(errors):.3g} > {VERIFY_TOL:g}")
    if abs(1.0 - dg.normalization) > prob_approx.DEFAULT_COVERAGE_TOL:
        raise NumericError(f"density normalization residual {abs(1 - dg.normalization):.3g}; widen the grid")
    _say(cfg, f"wrote {len(dg.p)} density points to {cfg['output']}")
    return EXIT_OK


def cmd_media(cfg):
    _need(cfg, "input", "output")
    sc = econ_media.read_scenario(cfg["input"])
    for key in ("dt", "t_end", "cfl_max"):
        if cfg[key] is not None:
            setattr(sc, key, cfg[key])
    run = econ_media.simulate(sc.check())
    traj_out = cfg["trajectory"] or str(Path(cfg["output"]).with_suffix("")) + ".trajectory.csv"
    _write(cfg["output"], econ_media.write_snapshot_csv(run.snapshots))
    _write(traj_out, econ_media.write_trajectory_csv(run.trajectory))
    _sidecar(cfg["output"], "media", cfg, scenario=sc.to_dict(), outputs=[cfg["output"], traj_out],
             mass_drift=run.mass_drift, mean_risk_range=list(run.x_range))
    lo, hi = run.x_range
    print(f"mass drift {run.mass_drift:.3e}; mean risk range [{lo:.6g}, {hi:.6g}]")
    return EXIT_OK


def cmd_report(cfg):
    _need(cfg, "input")
    paths = cfg["input"] if isinstance(cfg["input"], list) else [cfg["input"]]
    docs = []
    for path in paths:
        try:
            docs.append({"source": path, "meta": json.loads(Path(path).read_text(encoding="utf-8"))})
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"{path} is not a metadata sidecar: {exc}") from None
    text = json.dumps(docs, indent=2, sort_keys=True) + "\n"
    if cfg["output"]:
        _write(cfg["output"], text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "moments": cmd_moments, "aggregate": cmd_aggregate,
            "density": cmd_density, "media": cmd_media, "report": cmd_report}


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        cfg = effective_config(ns.command, ns)
        return COMMANDS[ns.command](cfg)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
