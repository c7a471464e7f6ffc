"""Command-line interface.

Subcommands: ``fit`` (matrix CSV to component JSON), ``expectile`` (scalar
statistics), ``simulate`` (Monte-Carlo grid), ``weather`` (temperature
pipeline). Every run writes a JSON manifest next to its outputs. Exit
codes: 0 success, 1 input error, 2 finished but unconverged.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .components import bottom_up, explained_variance, principal_expectile, top_down
from .core import (
    asymptotic_variance,
    expectile_1d,
    quantile_1d,
    tau_deviation,
    tau_variance,
)
from .exceptions import ContractError, DegenerateInputError, DomainError
from .laws import objective_value
from . import simbench, weather

_INPUT_ERRORS = (ContractError, DegenerateInputError, DomainError, OSError)
_ALGOS = {"topdown": top_down, "bottomup": bottom_up, "pec": principal_expectile}


def _default_threads() -> int:
    env = os.environ.get("ASYMPCA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def read_matrix_csv(path) -> np.ndarray:
    """Numeric matrix reader with line/column diagnostics."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            parsed = []
            for colno, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ContractError(
                        f"line {lineno}, column {colno}: not a number: {cell!r}")
            rows.append((lineno, parsed))
    if not rows:
        raise ContractError("empty matrix")
    width = len(rows[0][1])
    for lineno, parsed in rows:
        if len(parsed) != width:
            raise ContractError(
                f"line {lineno}: expected {width} columns, got {len(parsed)}")
    M = np.array([r[1] for r in rows])
    if not np.all(np.isfinite(M)):
        bad = np.argwhere(~np.isfinite(M))[0]
        raise ContractError(
            f"line {rows[bad[0]][0]}, column {bad[1] + 1}: non-finite value")
    return M


def _write_manifest(path, command: str, parameters: dict, seed, wall: float,
                    convergence: dict) -> None:
    payload = {
        "command": command,
        "parameters": parameters,
        "library_version": __version__,
        "seed": seed,
        "wall_time_seconds": wall,
        "convergence": convergence,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def cmd_fit(args) -> int:
    start = time.perf_counter()
    Y = read_matrix_csv(args.matrix)
    if not 1 <= args.k < Y.shape[1]:
        raise ContractError(f"k={args.k} must satisfy 1 <= k < p={Y.shape[1]}")
    rng = np.random.default_rng(args.seed)
    cs = _ALGOS[args.algorithm](Y, args.k, args.tau, rng=rng)
    ev = explained_variance(Y, cs)
    objective = objective_value(Y, cs.center, cs.loadings, cs.components, args.tau)
    payload = {
        "tau": args.tau,
        "k": args.k,
        "algorithm": args.algorithm,
        "center": cs.center,
        "components": cs.components.T,
        "loadings": cs.loadings,
        "explained_variance": ev,
        "objective": objective,
        "iterations": int(sum(i for *_, i in cs.per_component_stats)),
        "converged": cs.converged,
    }
    out = args.out or "fit.json"
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")
    _write_manifest(
        out + ".manifest.json", "fit",
        {"matrix": str(args.matrix), "tau": args.tau, "k": args.k,
         "algorithm": args.algorithm, "out": str(out)},
        args.seed, time.perf_counter() - start,
        {f"component_{j + 1}": bool(flag)
         for j, (_, flag, _) in enumerate(cs.per_component_stats)},
    )
    print(f"wrote {out}")
    return 0 if cs.converged else 2


def cmd_expectile(args) -> int:
    if args.values is not None:
        try:
            values = np.array([float(v) for v in args.values.split(",") if v != ""])
        except ValueError as exc:
            raise ContractError(f"bad value in --values: {exc}")
    elif args.input is not None:
        M = read_matrix_csv(args.input)
        if not 0 <= args.column < M.shape[1]:
            raise ContractError(f"column {args.column} out of range")
        values = M[:, args.column]
    else:
        raise ContractError("provide --values or --input")
    if values.size == 0:
        raise ContractError("no values given")
    res = expectile_1d(values, args.tau)
    payload = {
        "tau": args.tau,
        "n": int(values.size),
        "expectile": res.value,
        "quantile": quantile_1d(values, args.tau),
        "tau_variance": tau_variance(values, args.tau),
        "tau_deviation": tau_deviation(values, args.tau),
        # a single observation carries no dispersion
        "asymptotic_variance": (asymptotic_variance(values, args.tau)
                                if values.size > 1 else 0.0),
        "iterations": res.iterations,
        "converged": res.converged,
    }
    print(json.dumps(payload, indent=2))
    return 0


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    os.makedirs(args.out, exist_ok=True)
    taus = _parse_taus(args.tau)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for a in algorithms:
        if a not in simbench.ALGORITHMS:
            raise ContractError(f"unknown algorithm {a!r}")
    entries = []
    convergence = {}
    for tau in taus:
        for alg in algorithms:
            cfg = simbench.SimConfig(
                setting=args.setting, scenario=args.scenario, size=args.size,
                tau=tau, algorithm=alg, replications=args.replications,
                seed=args.seed)
            report, curves = simbench.run_config(
                cfg, threads=args.threads, keep_curves=True)
            entries.append((cfg, report))
            stem = f"curves_{alg}_tau{tau:g}.csv"
            simbench.write_curves_csv(os.path.join(args.out, stem), curves)
            convergence[f"{alg}_tau{tau:g}"] = report.nonconvergence_rate
    simbench.write_reports_csv(os.path.join(args.out, "report.csv"), entries)
    simbench.write_reports_json(os.path.join(args.out, "report.json"), entries)
    _write_manifest(
        os.path.join(args.out, "manifest.json"), "simulate",
        {"setting": args.setting, "scenario": args.scenario, "size": args.size,
         "tau": taus, "algorithms": algorithms,
         "replications": args.replications, "threads": args.threads,
         "out": str(args.out)},
        args.seed, time.perf_counter() - start, convergence)
    print(f"wrote {args.out}/report.csv")
    return 0


def cmd_weather(args) -> int:
    start = time.perf_counter()
    os.makedirs(args.out, exist_ok=True)
    taus = _parse_taus(args.tau)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    series = weather.load_station_csv(args.input)
    models = [weather.fit_detrend(s) for s in series]
    curves = weather.residual_curves(models)
    results = weather.analyze(curves, taus, args.k, algorithms,
                              rng=np.random.default_rng(args.seed))
    days = np.arange(1, weather.DAYS + 1)

    for tau in taus:
        lines = ["day," + ",".join(
            f"{alg}_c{j + 1}" for alg in algorithms for j in range(args.k))]
        for d in days:
            cells = [str(d)]
            for alg in algorithms:
                cs = results[(tau, alg)].component_set
                cells.extend(repr(float(cs.components[d - 1, j]))
                             for j in range(args.k))
            lines.append(",".join(cells))
        with open(os.path.join(args.out, f"components_tau{tau:g}.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")

    lines = ["day," + ",".join(
        f"{alg}_tau{tau:g}" for tau in taus for alg in algorithms)]
    for d in days:
        cells = [str(d)]
        for tau in taus:
            for alg in algorithms:
                cs = results[(tau, alg)].component_set
                cells.append(repr(float(cs.center[d - 1])))
        lines.append(",".join(cells))
    with open(os.path.join(args.out, "centers.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    lines = ["tau,algorithm," + ",".join(
        f"component_{j + 1}" for j in range(args.k)) + ",total"]
    convergence = {}
    for tau in taus:
        for alg in algorithms:
            r = results[(tau, alg)]
            lines.append(",".join(
                [repr(float(tau)), alg]
                + [repr(float(v)) for v in r.explained]
                + [repr(float(r.total_explained))]))
            convergence[f"{alg}_tau{tau:g}"] = bool(r.component_set.converged)
    with open(os.path.join(args.out, "explained_variance.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    _write_manifest(
        os.path.join(args.out, "manifest.json"), "weather",
        {"input": str(args.input), "tau": taus, "k": args.k,
         "algorithms": algorithms, "stations": len(series),
         "dropped_feb29": {s.station_id: s.dropped_feb29 for s in series},
         "out": str(args.out)},
        args.seed, time.perf_counter() - start, convergence)
    print(f"wrote {args.out}/explained_variance.csv")
    return 0


def _parse_taus(raw) -> list[float]:
    if isinstance(raw, (int, float)):
        return [float(raw)]
    taus = [float(v) for v in str(raw).split(",") if v != ""]
    if not taus:
        raise ContractError("no tau levels given")
    return taus


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asympca",
        description="Principal component analysis in asymmetric norms. "
                    "Exit codes: 0 ok, 1 input error, 2 unconverged result.",
    )
    parser.add_argument("--config", help="JSON file of defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit components to a matrix CSV")
    p_fit.add_argument("matrix", help="CSV file, rows = observations")
    p_fit.add_argument("--tau", type=float, default=None)
    p_fit.add_argument("--k", type=int, default=None)
    p_fit.add_argument("--algorithm", choices=sorted(_ALGOS), default=None)
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--out", default=None)

    p_exp = sub.add_parser("expectile", help="scalar asymmetric statistics")
    p_exp.add_argument("--values", help="comma-separated numbers")
    p_exp.add_argument("--input", help="CSV file to read a column from")
    p_exp.add_argument("--column", type=int, default=0)
    p_exp.add_argument("--tau", type=float, default=None)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo benchmark grid")
    p_sim.add_argument("--setting", type=int, default=None)
    p_sim.add_argument("--scenario", type=int, default=None)
    p_sim.add_argument("--size", choices=sorted(simbench.SIZES), default=None)
    p_sim.add_argument("--tau", default=None, help="comma-separated levels")
    p_sim.add_argument("--algorithms", default=None,
                       help="comma-separated subset of BUP,TD,PEC")
    p_sim.add_argument("--replications", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument("--out", default=None)

    p_wx = sub.add_parser("weather", help="temperature residual pipeline")
    p_wx.add_argument("input", help="long-format CSV: station_id,date,temp")
    p_wx.add_argument("--tau", default=None, help="comma-separated levels")
    p_wx.add_argument("--k", type=int, default=None)
    p_wx.add_argument("--algorithms", default=None,
                      help="comma-separated subset of topdown,bottomup,pec")
    p_wx.add_argument("--seed", type=int, default=None)
    p_wx.add_argument("--threads", type=int, default=None)
    p_wx.add_argument("--out", default=None)
    return parser


_DEFAULTS = {
    "fit": {"tau": 0.5, "k": 1, "algorithm": "topdown", "seed": 0,
            "out": "fit.json"},
    "expectile": {"tau": 0.5},
    "simulate": {"setting": 1, "scenario": 1, "size": "small", "tau": "0.95",
                 "algorithms": "BUP,TD,PEC", "replications": 100, "seed": 0,
                 "threads": None, "out": "simout"},
    "weather": {"tau": "0.05,0.5,0.95", "k": 2,
                "algorithms": "topdown,bottomup,pec", "seed": 0,
                "threads": None, "out": "weatherout"},
}


def _apply_config(args) -> None:
    """Fill unset options from the config file, then from hard defaults."""
    file_values = {}
    if args.config:
        with open(args.config) as fh:
            file_values = json.load(fh)
        if not isinstance(file_values, dict):
            raise ContractError("config file must hold a JSON object")
    for key, value in {**_DEFAULTS.get(args.command, {})}.items():
        if getattr(args, key, None) is None:
            setattr(args, key, file_values.get(key, value))
    if getattr(args, "threads", None) is None and "threads" in _DEFAULTS.get(
            args.command, {}):
        args.threads = _default_threads()


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        handler = {"fit": cmd_fit, "expectile": cmd_expectile,
                   "simulate": cmd_simulate, "weather": cmd_weather}[args.command]
        return handler(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
