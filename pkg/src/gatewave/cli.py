"""Command-line entry point: ``gatewave run|sweep|validate|list-presets``."""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness, metrics
from .config import load_scenario
from .errors import (BadParamPath, GatewaveError, ParseError, UnknownPreset,
                     ValidationError)

EXIT_PASS, EXIT_BOUND, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


def parse_values(text):
    """``"1e6,5e6,1e7"`` or a range ``"start:stop:count"`` (inclusive, linear)."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            n = int(count)
            if n < 1:
                raise ValueError("count must be >= 1")
            return [float(v) for v in np.linspace(float(start), float(stop), n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}: {exc}") from exc


def build_parser():
    p = argparse.ArgumentParser(prog="gatewave",
                                description="Gate-drive chain transient simulator.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="gatewave_out", help="output directory")
    common.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (overrides {harness.WORKERS_ENV})")
    common.add_argument("--seedless", action="store_true",
                        help="accepted for compatibility; the simulator uses no RNG")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run a preset or scenario file")
    run.add_argument("target", help="preset name or scenario file")

    sw = sub.add_parser("sweep", parents=[common], help="sweep one numeric parameter")
    sw.add_argument("scenario", help="preset name or scenario file")
    sw.add_argument("--param", required=True, help="dotted config key, e.g. pwm.frequency_hz")
    sw.add_argument("--values", required=True, type=parse_values,
                    help="comma list or start:stop:count")
    sw.add_argument("--nodes", default=None, help="comma-separated node names")
    sw.add_argument("--stage", default=None, choices=harness.STAGES,
                    help="supply group for power statistics")

    val = sub.add_parser("validate", help="parse and validate a scenario file")
    val.add_argument("scenario")

    sub.add_parser("list-presets", help="list shipped presets")
    return p


def _cmd_run(args):
    report = harness.run_preset(args.target, args.out, args.workers)
    for name, ok, detail in report.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    for r in report.results:
        if r.status != "ok":
            print(f"ERROR {r.error}", file=sys.stderr)
    print(f"wrote {report.out_dir}")
    return report.exit_code


def _cmd_sweep(args):
    scenario = load_scenario(args.scenario)
    nodes = args.nodes.split(",") if args.nodes else None
    result = harness.sweep(scenario, args.param, args.values, nodes=nodes, stage=args.stage,
                           workers=args.workers)
    rows = []
    for r in result.rows:
        if r.status != "ok":
            rows.append(metrics.stats_row(scenario.label, "", args.param, r.value,
                                          status=r.error))
            continue
        for node, w in r.waves.items():
            if isinstance(w, Exception):
                rows.append(metrics.stats_row(scenario.label, node, args.param, r.value,
                                              n_periods=r.n_periods, status=str(w)))
            else:
                rows.append(metrics.stats_row(scenario.label, node, args.param, r.value,
                                              wave=w, n_periods=r.n_periods))
        if r.power is not None:
            rows.append(metrics.stats_row(scenario.label, f"rail_{r.power.stage}", args.param,
                                          r.value, power=r.power, n_periods=r.n_periods))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"sweep_{args.param.replace('.', '_')}.csv"
    harness._atomic(path, lambda p: metrics.write_stats_csv(p, rows))
    print(f"wrote {path}")
    return EXIT_SOLVER if any(r.status != "ok" for r in result.rows) else EXIT_PASS


def _cmd_validate(args):
    sc = load_scenario(args.scenario)
    print(f"ok: {sc.label} (chain={sc.chain}, f={sc.pwm.frequency_hz:g} Hz, "
          f"load={type(sc.load).__name__})")
    return EXIT_PASS


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        if args.command == "list-presets":
            for name in harness.list_presets():
                print(name)
            return EXIT_PASS
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except (UnknownPreset, ParseError, ValidationError, BadParamPath) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GatewaveError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
