"""Command line front end.

Subcommands: ``pdf``, ``simulate``, ``compare``, ``size`` and ``sweep``.
Every option can also be given in a JSON config file (``--config``) whose
keys are the long option names with dashes replaced by underscores; flags
given on the command line override the file. Files are written to
``--out-dir``, which defaults to $BESSRAMP_OUTPUT_DIR or the current
directory. A JSON summary is printed on stdout; failures print an error
object and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .distributions import IncrementLaw, ParameterError
from .metrics import (
    ComparisonReport,
    CurvePoint,
    GridError,
    MethodSpec,
    compare,
    curve_csv,
    timed_solve,
)
from .neumann import SolverError, solve_neumann
from .nystrom import build_operator, make_grid, solve_nystrom, solve_picard
from .simulate import (
    DEFAULT_BIN_WIDTH,
    DEFAULT_BURN_IN,
    DEFAULT_P_MAX_TILDE,
    SimulationConfig,
    run_dispatch,
    reduce_to_law,
    synthesize_power,
    violation_rate,
)

OUTPUT_ENV = "BESSRAMP_OUTPUT_DIR"

DEFAULTS = {
    "method": "analytic",
    "terms": None,
    "points": 1000,
    "b_max": None,
    "grid_step": 0.01,
    "grid_max": None,
    "n_steps": 5_000_000,
    "seed": 0,
    "law": "SL",
    "c": 0.25,
    "zeta": 10.0,
    "p_max": None,
    "p_max_tilde": None,
    "capacity": "unbounded",
    "bin_width": DEFAULT_BIN_WIDTH,
    "burn_in": DEFAULT_BURN_IN,
    "percentiles": [0.9, 0.95, 0.99],
    "safety_factor": 1.0,
    "methods": ["analytic:100", "nystrom:1000"],
    "a_tilde_values": [0.3, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5],
    "jobs": 1,
    "out_dir": None,
    "prefix": None,
    "trace": None,
}


class ConfigError(ValueError):
    """Inconsistent or incomplete run configuration."""


def fmt(x: float) -> str:
    return f"{x:.9g}"


def _round(obj):
    """Round every float to 9 significant digits for output."""
    if isinstance(obj, float):
        return obj if not math.isfinite(obj) else float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.floating):
        return _round(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_round(obj), indent=2, allow_nan=True)


# --------------------------------------------------------------------- config


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bessramp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default option values")
    common.add_argument("--a-tilde", type=float, help="normalized tolerable step change")
    common.add_argument("--a", type=float, help="tolerable step change [MW]")
    common.add_argument("--beta", type=float, help="inverse power scale of the SL law [1/MW]")
    common.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_ENV} or .)")
    common.add_argument("--prefix", help="file name prefix for written outputs")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--terms", type=int, help="Neumann truncation order M (default adaptive)")
    solver.add_argument("--points", type=int, help="Nystrom intervals N")
    solver.add_argument("--b-max", type=float, help="Nystrom truncation point")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--n-steps", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--law", choices=["SL", "GL"])
    sim.add_argument("--c", type=float, help="GL narrow-component weight")
    sim.add_argument("--zeta", type=float, help="GL scale ratio")
    sim.add_argument("--capacity", choices=["unbounded", "finite"])
    sim.add_argument("--p-max", type=float, help="plant capacity [MW] (implies finite)")
    sim.add_argument("--p-max-tilde", type=float, help="normalized plant capacity (implies finite)")
    sim.add_argument("--bin-width", type=float)
    sim.add_argument("--burn-in", type=int)

    p = sub.add_parser("pdf", parents=[common, solver], help="tabulate g, G, S")
    p.add_argument("--method", choices=["analytic", "nystrom", "picard"])
    p.add_argument("--grid-step", type=float)
    p.add_argument("--grid-max", type=float)

    s = sub.add_parser("simulate", parents=[common, sim], help="Monte Carlo reference law")
    s.add_argument("--percentiles", type=_float_list)
    s.add_argument("--trace", help="also export the (n, P, B, R) trace to this file")

    c = sub.add_parser("compare", parents=[common, solver, sim], help="compare two or more methods")
    c.add_argument("--methods", nargs="+", help="e.g. analytic:100 nystrom:1000 simulate")
    c.add_argument("--percentiles", type=_float_list)

    z = sub.add_parser("size", parents=[common, solver, sim], help="BESS power capacity")
    z.add_argument("--method", help="analytic[:M], nystrom[:N] or simulate")
    z.add_argument("--percentiles", type=_float_list)
    z.add_argument("--safety-factor", type=float)

    w = sub.add_parser("sweep", parents=[common, solver, sim], help="b99 over a range of slopes")
    w.add_argument("--a-tilde-values", type=_float_list)
    w.add_argument("--methods", nargs="+")
    w.add_argument("--jobs", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS) - {"a_tilde", "a", "beta"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command"):
            cfg[key] = value
    cfg["command"] = args.command

    a_tilde, a, beta = cfg.get("a_tilde"), cfg.get("a"), cfg.get("beta")
    if args.command != "sweep":
        if a_tilde is not None and (a is not None or beta is not None):
            raise ConfigError("give either --a-tilde or both --a and --beta, not both")
        if a_tilde is None:
            if a is None or beta is None:
                raise ConfigError("give either --a-tilde or both --a and --beta")
            cfg["a_tilde"] = a * beta
    for q in cfg["percentiles"]:
        if not 0.0 < q < 1.0:
            raise ConfigError(f"percentiles must lie in (0, 1), got {q}")
    if cfg["safety_factor"] < 1.0:
        raise ConfigError("safety factor must be >= 1")
    if cfg["jobs"] < 1:
        raise ConfigError("jobs must be >= 1")
    if cfg["p_max"] is not None or cfg["p_max_tilde"] is not None:
        cfg["capacity"] = "finite"
    if cfg["p_max"] is not None and cfg["p_max_tilde"] is not None:
        raise ConfigError("give at most one of --p-max and --p-max-tilde")
    return cfg


def _out_dir(cfg: dict) -> Path:
    path = Path(cfg["out_dir"] or os.environ.get(OUTPUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _out_file(cfg: dict, name: str) -> Path:
    prefix = cfg["prefix"]
    return _out_dir(cfg) / (f"{prefix}_{name}" if prefix else name)


def simulation_config(cfg: dict, a_tilde: float | None = None) -> SimulationConfig:
    """Simulation at ``a_tilde`` (default: the configured slope) in the configured scale."""
    beta = cfg.get("beta") or 1.0
    if cfg["law"] == "SL":
        law = IncrementLaw.simple(beta)
    else:
        law = IncrementLaw.equal_variance(beta, cfg["c"], cfg["zeta"])
    if cfg["capacity"] == "unbounded":
        p_max_tilde = None
    elif cfg["p_max"] is not None:
        p_max_tilde = cfg["p_max"] * beta
    else:
        p_max_tilde = cfg["p_max_tilde"] if cfg["p_max_tilde"] is not None else DEFAULT_P_MAX_TILDE
    return SimulationConfig.normalized(
        law,
        cfg["a_tilde"] if a_tilde is None else a_tilde,
        cfg["n_steps"],
        p_max_tilde,
        beta=beta,
        seed=cfg["seed"],
        bin_width=cfg["bin_width"],
        burn_in=cfg["burn_in"],
    )


def parse_method(text: str, cfg: dict) -> MethodSpec:
    kind, _, param = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "analytic":
            return MethodSpec.analytic(int(param) if param else cfg["terms"])
        if kind == "nystrom":
            return MethodSpec.nystrom(int(param) if param else cfg["points"], cfg["b_max"])
    except ValueError as exc:
        raise ConfigError(f"bad method parameter in {text!r}") from exc
    if kind == "simulate":
        if param:
            raise ConfigError("simulate takes its options from the simulation flags")
        return MethodSpec.simulate(simulation_config(cfg))
    raise ConfigError(f"unknown method {text!r}; use analytic[:M], nystrom[:N] or simulate")


# ------------------------------------------------------------------- commands


def _solve_for_pdf(cfg: dict):
    method = cfg["method"]
    if method == "analytic":
        law = solve_neumann(cfg["a_tilde"], cfg["terms"])
        return law, {"M": law.order, "converged": law.converged}
    if method == "nystrom":
        law = solve_nystrom(cfg["a_tilde"], cfg["points"], cfg["b_max"])
    else:
        grid = make_grid(cfg["a_tilde"], cfg["points"], cfg["b_max"])
        law = solve_picard(build_operator(grid, cfg["a_tilde"]))
    return law, {"N": law.grid.n_intervals, "b_max": law.grid.b_max}


def cmd_pdf(cfg: dict) -> dict:
    start = time.perf_counter()
    law, extra = _solve_for_pdf(cfg)
    elapsed = time.perf_counter() - start
    step = cfg["grid_step"]
    if not step > 0:
        raise ConfigError("grid step must be positive")
    upper = cfg["grid_max"] if cfg["grid_max"] is not None else max(law.tail_bound(), step)
    b = np.arange(int(math.ceil(upper / step)) + 1) * step
    g = np.asarray(law.density(b))
    s = np.asarray(law.survival(b))
    path = _out_file(cfg, "pdf.csv")
    lines = ["b_tilde,g,G,S"] + [f"{fmt(x)},{fmt(y)},{fmt(1.0 - z)},{fmt(z)}" for x, y, z in zip(b, g, s)]
    path.write_text("\n".join(lines) + "\n")
    summary = {
        "method": cfg["method"],
        "a_tilde": cfg["a_tilde"],
        "p0": law.p0,
        "omega": law.omega if cfg["method"] == "analytic" else law.omega_n,
        **extra,
        "b99": law.percentile(0.99),
        "percentiles": {str(q): law.percentile(q) for q in cfg["percentiles"]},
        "elapsed_s": elapsed,
        "csv": str(path),
    }
    _out_file(cfg, "pdf.json").write_text(dump_json(summary))
    return summary


def cmd_simulate(cfg: dict) -> dict:
    sim = simulation_config(cfg)
    start = time.perf_counter()
    power = synthesize_power(sim)
    trace = run_dispatch(power, sim.a)
    law = reduce_to_law(trace.battery, sim.norm_beta, sim.bin_width, sim.burn_in)
    elapsed = time.perf_counter() - start
    csv_path, json_path = _out_file(cfg, "law.csv"), _out_file(cfg, "law.json")
    law.export(csv_path)
    rates = violation_rate(trace)
    summary = {
        **law.summary(cfg["percentiles"]),
        "a_tilde": sim.a_tilde,
        "p_max_tilde": None if math.isinf(sim.p_max) else sim.p_max * sim.norm_beta,
        "violation_rate_controlled": rates.controlled,
        "violation_rate_raw": rates.raw,
        "min_grid_change_plus_a": float(trace.grid_changes.min() + sim.a) if trace.grid_changes.size else 0.0,
        "elapsed_s": elapsed,
        "csv": str(csv_path),
    }
    if cfg["trace"]:
        trace.export(cfg["trace"])
        summary["trace"] = cfg["trace"]
    json_path.write_text(dump_json(summary))
    return summary


def cmd_compare(cfg: dict) -> dict:
    methods = [parse_method(m, cfg) for m in cfg["methods"]]
    if len(methods) < 2:
        raise ConfigError("compare needs at least two methods")
    laws, timings = [], {}
    for spec in methods:
        law, seconds = timed_solve(spec, cfg["a_tilde"])
        laws.append(law)
        timings[law.label] = seconds
    reports: list[ComparisonReport] = []
    for i in range(len(laws)):
        for j in range(i + 1, len(laws)):
            rep = compare(laws[i], laws[j], cfg["percentiles"])
            rep.timings = {laws[i].label: timings[laws[i].label], laws[j].label: timings[laws[j].label]}
            reports.append(rep)
    summary = {"a_tilde": cfg["a_tilde"], "timings_s": timings, "reports": [r.to_dict() for r in reports]}
    _out_file(cfg, "report.json").write_text(dump_json(summary))
    return summary


def cmd_size(cfg: dict) -> dict:
    spec = parse_method(cfg["method"], cfg)
    law, seconds = timed_solve(spec, cfg["a_tilde"])
    beta = cfg.get("beta")
    rows = []
    for q in cfg["percentiles"]:
        row = {"q": q}
        if q <= law.p0:
            row.update(b_tilde=0.0, note="0 MW (point mass covers q)")
        else:
            row["b_tilde"] = law.percentile(q)
        if beta is not None:
            row["capacity_mw"] = row["b_tilde"] / beta
            row["with_safety_mw"] = row["capacity_mw"] * cfg["safety_factor"]
        rows.append(row)
    summary = {
        "method": law.label,
        "a_tilde": cfg["a_tilde"],
        "beta": beta,
        "p0": law.p0,
        "safety_factor": cfg["safety_factor"],
        "sizes": rows,
        "elapsed_s": seconds,
    }
    _out_file(cfg, "size.json").write_text(dump_json(summary))
    return summary


def _sweep_point(task):
    a_tilde, spec = task
    law, seconds = timed_solve(spec, a_tilde)
    return CurvePoint(a_tilde, law.percentile(0.99), spec.kind, spec.params), seconds


def cmd_sweep(cfg: dict) -> dict:
    values = [float(v) for v in cfg["a_tilde_values"]]
    if not values or any(not v > 0 for v in values):
        raise ConfigError("a_tilde values must be positive")
    cfg = {**cfg, "a_tilde": values[0]}
    specs = [parse_method(m, cfg) for m in cfg["methods"]]
    tasks = [(a, spec) for spec in specs for a in values]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    points = [r[0] for r in results]
    path = _out_file(cfg, "b99.csv")
    path.write_text(curve_csv(points))
    summary = {
        "csv": str(path),
        "rows": [vars(p) for p in points],
        "elapsed_s": {f"{t[1].kind}@{fmt(t[0])}": r[1] for t, r in zip(tasks, results)},
    }
    _out_file(cfg, "sweep.json").write_text(dump_json(summary))
    return summary


COMMANDS = {
    "pdf": cmd_pdf,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "size": cmd_size,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        summary = COMMANDS[args.command](cfg)
    except (ConfigError, ParameterError, SolverError, GridError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1
    print(dump_json(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
