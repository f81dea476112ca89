"""Command-line interface: tables, rate sweeps, optimization and self-checks."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Sequence

import numpy as np

from ..core_states import DomainError
from .checks import mc_validate, run_oracle_checks
from .config import load_config, parse_value
from .search import (
    DISCRETE,
    INFEASIBLE,
    PROTOCOLS,
    Axis,
    ConfigError,
    OptimizeResult,
    SweepSpec,
    ThresholdQuery,
    bisect_threshold,
    optimize,
    sweep,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3
RATE_COLUMNS = ("r_rep", "p_click", "r_sift", "r_secret_fraction", "r_qkd")

DEFAULT_BOUNDS: dict[str, dict[str, Axis | list[int]]] = {
    "original": {"F0": Axis(0.25, 1.0), "p_G": Axis(0.0, 1.0), "N": list(range(0, 6)), "k": list(range(0, 5))},
    "hybrid": {"F0": Axis(0.5, 1.0), "p_G": Axis(1e-6, 1.0), "N": list(range(0, 6)), "k": list(range(0, 5))},
    "ensemble": {"p": Axis(1e-5, 0.0999, log=True), "R": Axis(0.01, 0.99), "q": Axis(0.0, 1.0), "N": list(range(1, 6))},
}


class CliError(Exception):
    pass


def parse_range(text: str, integer: bool = False) -> list:
    """``a..b`` (inclusive), ``a..b:step``, comma list, or a single value; empty gives []."""
    text = text.strip()
    if not text:
        return []
    conv = int if integer else float
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            lo_s, hi_s = span.split("..")
            lo, hi = conv(lo_s), conv(hi_s)
            if integer:
                st = int(step) if step else 1
                if st <= 0:
                    raise ValueError("step must be positive")
                return list(range(lo, hi + 1, st))
            st = float(step) if step else 1.0
            if st <= 0:
                raise ValueError("step must be positive")
            n = math.floor((hi - lo) / st + 1e-9)
            return [float(x) for x in np.round(lo + st * np.arange(n + 1), 12)] if n >= 0 else []
        return [conv(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad range {text!r}: {exc}") from exc


def parse_optimized(items: Sequence[str], protocol: str) -> dict[str, Axis | list[int]]:
    """``name`` (default bounds), ``name=lo:hi[:log]`` or ``name=a..b`` for discrete names."""
    out: dict[str, Axis | list[int]] = {}
    for item in items:
        name, sep, spec = item.partition("=")
        name = name.strip()
        if not sep:
            if name not in DEFAULT_BOUNDS[protocol]:
                raise ConfigError(f"no default bounds for {name!r} in {protocol}")
            out[name] = DEFAULT_BOUNDS[protocol][name]
        elif name in DISCRETE:
            out[name] = parse_range(spec, integer=True)
        else:
            parts = spec.split(":")
            if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "log"):
                raise ConfigError(f"bad bounds {spec!r}; use lo:hi or lo:hi:log")
            try:
                out[name] = Axis(float(parts[0]), float(parts[1]), len(parts) == 3)
            except ValueError as exc:
                raise ConfigError(f"bad bounds {spec!r}") from exc
    return out


def write_rows(rows: list[dict[str, Any]], header: Sequence[str], fmt: str, out: str | None) -> None:
    if fmt == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
        text = buf.getvalue()
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _ordered_map(fn, jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# --- subcommands ------------------------------------------------------------------------

def _threshold_row(q: ThresholdQuery) -> dict[str, Any]:
    res = bisect_threshold(q)
    return {
        "protocol": q.protocol,
        "qkd": q.qkd,
        "target": q.target,
        "N": q.N,
        "k": q.k,
        "status": res.status,
        "value": res.value,
        "rounded": res.rounded,
    }


def cmd_threshold(args, target: str) -> int:
    qkds = ["bb84", "six-state"] if args.qkd == "both" else [args.qkd]
    queries = [
        ThresholdQuery(args.protocol, target, N, k, qkd)
        for N in parse_range(args.n, integer=True)
        for k in parse_range(args.k, integer=True)
        for qkd in qkds
    ]
    rows = _ordered_map(_threshold_row, queries, args.workers)
    write_rows(rows, ["protocol", "qkd", "target", "N", "k", "status", "value", "rounded"], args.format, args.out)
    return EXIT_INFEASIBLE if any(r["status"] == INFEASIBLE for r in rows) else EXIT_OK


def _result_row(extra: dict[str, Any], res: OptimizeResult, names: Sequence[str]) -> dict[str, Any]:
    row = dict(extra)
    row.update({n: res.params[n] for n in names})
    row.update(res.breakdown.as_dict())
    return row


def _opt_cell(job: tuple[SweepSpec, int, int]) -> dict[str, Any]:
    spec, N, k = job
    res = optimize(spec, {"N": N, "k": k})
    return {"N": N, "k": k, "F0_opt": res.params["F0"], "F0_rounded": round(res.params["F0"], 3), "r_qkd": res.breakdown.r_qkd}


def cmd_table_opt_fidelity(args, cfg) -> int:
    fixed = {k: v for k, v in cfg.params(args.protocol).items() if k not in ("F0", "N", "k")}
    spec = SweepSpec(args.protocol, fixed, None, {"F0": DEFAULT_BOUNDS[args.protocol]["F0"]}, args.grid)
    jobs = [(spec, N, k) for N in parse_range(args.n, integer=True) for k in parse_range(args.k, integer=True)]
    rows = _ordered_map(_opt_cell, jobs, args.workers)
    write_rows(rows, ["N", "k", "F0_opt", "F0_rounded", "r_qkd"], args.format, args.out)
    return EXIT_OK


def _build_spec(args, cfg, swept: tuple[str, list] | None) -> SweepSpec:
    optimized = parse_optimized(args.optimize or [], args.protocol)
    excluded = set(optimized) | ({swept[0]} if swept else set())
    fixed = {k: v for k, v in cfg.params(args.protocol).items() if k not in excluded}
    return SweepSpec(args.protocol, fixed, swept, optimized, args.grid, memory_normalize=args.memory_normalize)


def cmd_rate_sweep(args, cfg) -> int:
    name, sep, text = args.sweep.partition("=")
    if not sep:
        raise ConfigError("--sweep expects name=range")
    name = name.strip()
    values = parse_range(text, integer=name in DISCRETE)
    spec = _build_spec(args, cfg, (name, values))
    names = list(spec.optimized)
    rows = [_result_row({name: v}, res, names) for v, res in sweep(spec, args.workers)] if values else []
    write_rows(rows, [name, *names, *RATE_COLUMNS], args.format, args.out)
    return EXIT_OK


def cmd_optimize(args, cfg) -> int:
    spec = _build_spec(args, cfg, None)
    res = optimize(spec)
    names = list(spec.optimized)
    write_rows([_result_row({}, res, names)], [*names, *RATE_COLUMNS], args.format, args.out)
    if res.diagnostics.get("all_zero"):
        print(f"rate is zero on the whole grid ({res.evaluations} evaluations)", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_mc_validate(args) -> int:
    rows = []
    for N in parse_range(args.n, integer=True):
        for P in parse_range(args.p):
            r = mc_validate(N, P, args.trials, args.seed)
            rows.append({"N": N, "P": P, "analytic": r.analytic, "mc_mean": r.mc_mean, "stderr": r.stderr, "z_score": r.z_score})
    write_rows(rows, ["N", "P", "analytic", "mc_mean", "stderr", "z_score"], args.format, args.out)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    results = run_oracle_checks(args.seed)
    rows = [
        {"check": r.name, "points": r.points, "max_deviation": r.max_deviation, "tolerance": r.tolerance, "passed": r.passed}
        for r in results
    ]
    write_rows(rows, ["check", "points", "max_deviation", "tolerance", "passed"], args.format, args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# --- argument parsing ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file with [channel] and per-protocol sections")
    common.add_argument("--set", action="append", default=[], metavar="[SECTION.]KEY=VALUE", help="override a config value")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--workers", type=int, default=1, help="process pool size for rows and cells")

    parser = argparse.ArgumentParser(prog="repeater-qkd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (("table-min-fidelity", "minimal initial fidelity per (N, k)"), ("table-min-gate", "minimal gate quality per (N, k)")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--protocol", choices=("original", "hybrid"), default="original")
        p.add_argument("--qkd", choices=("bb84", "six-state", "both"), default="bb84")
        p.add_argument("--n", default="0..7")
        p.add_argument("--k", default="0..3")

    p = sub.add_parser("table-opt-fidelity", parents=[common], help="rate-maximizing initial fidelity per (N, k)")
    p.add_argument("--protocol", choices=("original", "hybrid"), default="hybrid")
    p.add_argument("--n", default="1..4")
    p.add_argument("--k", default="0..3")
    p.add_argument("--grid", type=int, default=40)

    for name, help_ in (("rate-sweep", "optimized rate for each value of one swept parameter"), ("optimize", "optimized rate at one point")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--protocol", choices=PROTOCOLS, default="original")
        if name == "rate-sweep":
            p.add_argument("--sweep", required=True, metavar="NAME=RANGE", help="e.g. L=100..1000:100")
        p.add_argument("--optimize", action="append", metavar="NAME[=BOUNDS]", help="F0, k=0..4, p=1e-4:0.1:log, ...")
        p.add_argument("--grid", type=int, default=40, help="grid points per continuous axis")
        p.add_argument("--memory-normalize", action="store_true", help="divide rates by 2^k")

    p = sub.add_parser("mc-validate", parents=[common], help="Monte-Carlo check of the average waiting time")
    p.add_argument("--n", default="0..3")
    p.add_argument("--p", default="0.1,0.5,0.9")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("oracle-check", parents=[common], help="closed forms against brute-force oracles")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        protocol = getattr(args, "protocol", "original")
        cfg = load_config(args.config, args.set, protocol)
        if args.command == "table-min-fidelity":
            return cmd_threshold(args, "F0")
        if args.command == "table-min-gate":
            return cmd_threshold(args, "p_G")
        if args.command == "table-opt-fidelity":
            return cmd_table_opt_fidelity(args, cfg)
        if args.command == "rate-sweep":
            return cmd_rate_sweep(args, cfg)
        if args.command == "optimize":
            return cmd_optimize(args, cfg)
        if args.command == "mc-validate":
            return cmd_mc_validate(args)
        return cmd_oracle_check(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


__all__ = ["main", "parse_range", "parse_value"]
