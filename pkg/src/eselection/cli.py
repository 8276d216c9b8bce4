"""Command line entry point: ``eselect {run,sweep,validate,bench}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, DataError, DegenerateScaleError, ESelectionError, ParameterError
from .harness import Reports, RunConfig, emit_reports, ingest, oracle_benchmark, run_selection, run_sweep
from .validation import run_validation_suite

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2, 3

log = logging.getLogger("eselection")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag dest -> RunConfig field
_CONFIG_FLAGS = {
    "input": "input_path",
    "alpha": "alpha",
    "lam": "lam",
    "window": "window",
    "strategy": "strategy",
    "lag": "lag",
    "calibration_length": "calibration_length",
    "seed": "seed",
    "output_dir": "output_dir",
    "initial_arm": "initial_arm",
    "steps_per_hour": "steps_per_hour",
    "check_shift": "check_shift",
    "jobs": "jobs",
    "evidence_scope": "evidence_scope",
}


def _add_run_flags(p: argparse.ArgumentParser, grid: bool) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--input", "-i", help="forecast file (t, p_1..p_H, q_1..q_H, y_1..y_H)")
    p.add_argument("--output-dir", "-o", dest="output_dir")
    p.add_argument("--alpha", type=float)
    lam_help = "lambda grid: list '0.1,0.5', range '0.01:0.99:0.01' or 'default'" if grid else "lambda in (0, 1)"
    win_help = "window grid: steps or durations like '1h,1d,7d', or 'default'" if grid else "window: steps or 7d / 2h"
    p.add_argument("--lam", help=lam_help)
    p.add_argument("--window", help=win_help)
    p.add_argument("--strategy", help="persistence, sampling or wavg" + (" (comma list)" if grid else ""))
    p.add_argument("--lag", type=int)
    p.add_argument("--calibration-length", dest="calibration_length", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--initial-arm", dest="initial_arm", choices=["P", "Q"])
    p.add_argument("--steps-per-hour", dest="steps_per_hour", type=int)
    p.add_argument("--no-shift-check", dest="check_shift", action="store_const", const=False)
    p.add_argument("--evidence-scope", dest="evidence_scope", choices=["series", "selection"],
                   help="series: e-processes see every step from the first (default); "
                        "selection: only post-calibration steps, full windows only")
    if grid:
        p.add_argument("--jobs", "-j", type=int)


def _config(args, grid_defaults: bool = False) -> RunConfig:
    data = RunConfig.from_file(args.config) if getattr(args, "config", None) else {}
    if grid_defaults:
        data.setdefault("lam", "default")
        data.setdefault("window", "default")
        data.setdefault("strategy", "persistence,sampling,wavg")
    for flag, name in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value
    return RunConfig.from_mapping(data)


def _load(config: RunConfig):
    if not config.input_path:
        raise ConfigError("--input is required")
    return ingest(config.input_path, check_shift=config.check_shift)


def cmd_run(args) -> int:
    config = _config(args)
    triples = _load(config)
    result = run_selection(config, triples)
    if config.output_dir:
        emit_reports(Reports(config=config, run=result), config.output_dir)
    print(json.dumps({k: v for k, v in result.summary.items()}, indent=2, default=str))
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _config(args, grid_defaults=True)
    triples = _load(config)
    result = run_sweep(config, triples)
    if config.output_dir:
        emit_reports(Reports(config=config, sweep=result), config.output_dir)
    for s in result.strategies:
        best = min((r for r in result.rows if r["strategy"] == s and not r["excluded"]),
                   key=lambda r: r["average_score"], default=None)
        frac = result.improvement_fraction(s)
        if best is None:
            print(f"{s}: all cells excluded")
        else:
            print(f"{s}: best {best['average_score']:.2f} W at window={best['window']} lam={best['lam']}; "
                  f"improvement in {100 * frac:.2f}% of cells")
    return EXIT_OK


def cmd_validate(args) -> int:
    lams = [float(x) for x in args.lam.split(",")]
    windows = [int(x) for x in args.window.split(",")]
    report = run_validation_suite(
        replications=args.replications, length=args.length, lams=lams, windows=windows,
        alpha=args.alpha, seed=args.seed, shift=args.shift, stress_scale=args.stress_scale,
        partial=not args.full_windows_only,
    )
    if args.output_dir:
        emit_reports(Reports(validation=report), args.output_dir)
    for e in report["fwer"]:
        tag = "PASS" if e["passed"] else "FAIL"
        tag = tag if e["gating"] else tag.lower() + " (stress)"
        print(f"fwer     {e['noise']:<7} lam={e['lam']:<4} window={e['window']:<5} "
              f"pq={e['rate_pq']:.4f} qp={e['rate_qp']:.4f} bound={e['bound']:.4f} {tag}")
    for e in report["coverage"]:
        tag = "PASS" if e["passed"] else "FAIL"
        tag = tag if e["gating"] else tag.lower() + " (stress)"
        print(f"coverage {e['kind']:<14} {e['noise']:<7} lam={e['lam']:<4} window={e['window']:<5} "
              f"cov={e['coverage']:.4f} bound={e['bound']:.4f} {tag}")
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def cmd_bench(args) -> int:
    config = _config(args)
    triples = _load(config)
    bench = oracle_benchmark(triples, config.calibration_length)
    if config.output_dir:
        emit_reports(Reports(config=config, benchmark=bench), config.output_dir)
    print(json.dumps(bench, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eselect", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="single configuration with per-step records")
    _add_run_flags(p, grid=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over lambda, window and strategy")
    _add_run_flags(p, grid=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="Monte Carlo FWER and coverage checks")
    p.add_argument("--replications", type=int, default=10_000)
    p.add_argument("--length", type=int, default=1000)
    p.add_argument("--lam", default="0.1,0.5,0.9")
    p.add_argument("--window", default="96,672")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--shift", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stress-scale", dest="stress_scale", type=float, default=None,
                   help="also report non-gating results for a heavier normal null family")
    p.add_argument("--full-windows-only", action="store_true",
                   help="skip the truncated windows at the start of each stream")
    p.add_argument("--output-dir", "-o", dest="output_dir")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="oracle and per-forecast average MAE")
    _add_run_flags(p, grid=False)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DegenerateScaleError as exc:
        print(f"eselect: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ParameterError) as exc:
        print(f"eselect: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"eselect: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ESelectionError as exc:
        print(f"eselect: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
