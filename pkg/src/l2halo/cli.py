"""Command-line entry point: ``l2halo run | compare | kpi``.

Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 a run
diverged although the scenario/controller pair is expected to hold station.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from l2halo.config import build_config, load_config
from l2halo.scenarios import (
    CONTROLLERS,
    ConfigError,
    canonical_controller,
    compare,
    comparison_table,
    compute_kpis,
    emit_csv,
    format_table,
    read_csv_kpis,
    run_scenario,
    summary,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3
SCENARIO_CHOICES = ("1", "2", "3", "4", "custom")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _scenario_id(s):
    return s if s == "custom" else f"S{s.upper().lstrip('S')}"


def _csv_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _parser():
    ap = _Parser(prog="l2halo", description="L2 quasi-Halo station-keeping simulations.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log planner and solver diagnostics")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate one scenario with one controller")
    run.add_argument("--scenario", required=True, choices=SCENARIO_CHOICES)
    run.add_argument("--controller", required=True, help=f"one of {', '.join(CONTROLLERS)} (aliases: reg, nmpc)")
    run.add_argument("--dt-hours", type=float, help="sampling period delta_bar in hours")
    run.add_argument("--duration-hours", type=float, help="simulated time in hours")
    run.add_argument("--config", type=Path, help="TOML file with [constants] [orbit] [gains] [mpc] [scenario]")
    run.add_argument("--mode", choices=("full", "rti"), help="MPC solve mode")
    run.add_argument("--out", type=Path, help="CSV path; a .json KPI sidecar is written next to it")
    run.add_argument("--kpi-strict-si", action="store_true", help="dimensionally consistent KPI variants")

    cmp_ = sub.add_parser("compare", help="run every scenario/controller pair and tabulate KPIs")
    cmp_.add_argument("--scenarios", default="1,2,3,4")
    cmp_.add_argument("--controllers", default=",".join(CONTROLLERS))
    cmp_.add_argument("--out-dir", type=Path, required=True)
    cmp_.add_argument("--config", type=Path)
    cmp_.add_argument("--mode", choices=("full", "rti"))
    cmp_.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    cmp_.add_argument("--kpi-strict-si", action="store_true")

    kpi = sub.add_parser("kpi", help="recompute KPIs from an emitted CSV")
    kpi.add_argument("path", type=Path)
    kpi.add_argument("--dt-hours", type=float, help="sampling period; default is inferred from t_nd")
    kpi.add_argument("--kpi-strict-si", action="store_true")
    return ap


def _cmd_run(args):
    data = load_config(args.config) if args.config else None
    cfg = build_config(
        _scenario_id(args.scenario), canonical_controller(args.controller), data,
        delta_bar_hours=args.dt_hours, duration_hours=args.duration_hours, mode=args.mode,
    )
    res = run_scenario(cfg)
    kpi = compute_kpis(res, strict_si=args.kpi_strict_si)
    if args.out:
        emit_csv(res, args.out, strict_si=args.kpi_strict_si)
    out = summary(res, kpi)
    if res.failed:
        out["reason"] = res.reason
    print(json.dumps(out, indent=2))
    return EXIT_DIVERGED if res.failed and not cfg.expect_failure else EXIT_OK


def _cmd_compare(args):
    data = load_config(args.config) if args.config else None
    cfgs = [
        build_config(_scenario_id(s), canonical_controller(c), data, mode=args.mode)
        for s in _csv_list(args.scenarios)
        for c in _csv_list(args.controllers)
    ]
    rows = compare(cfgs, jobs=args.jobs)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for res, _ in rows:
        emit_csv(res, args.out_dir / f"{res.config.id}_{res.config.controller}.csv", strict_si=args.kpi_strict_si)
    if args.kpi_strict_si:
        rows = [(res, compute_kpis(res, strict_si=True)) for res, _ in rows]
    table = comparison_table(rows)
    text = format_table(table)
    (args.out_dir / "comparison.txt").write_text(text + "\n")
    print(text)
    unexpected = any(r.failed and not r.expected_failure for r in table)
    return EXIT_DIVERGED if unexpected else EXIT_OK


def _cmd_kpi(args):
    db = None
    if args.dt_hours is not None:
        from l2halo.dynamics import PhysicalConstants

        db = PhysicalConstants().hours_to_nd(args.dt_hours)
    print(json.dumps(read_csv_kpis(args.path, delta_bar=db, strict_si=args.kpi_strict_si), indent=2))
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "compare": _cmd_compare, "kpi": _cmd_kpi}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
