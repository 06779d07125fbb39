"""Command-line entry point.

    fscdsim simulate --scenario F --out DIR [--seed N]
    fscdsim otdr-trace --scenario F --pulse-index K
    fscdsim sop-trace --scenario F --path P [--trial K]
    fscdsim latency-report --scenario F

Scenario names that are not existing files are looked up among the shipped
scenarios.  ``FSCDSIM_SEED`` overrides the scenario's seed when ``--seed`` is
not given.  CSV output goes to stdout.
"""
from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from fscdsim.control_plane import latency_csv
from fscdsim.errors import FscdSimError
from fscdsim.scenario_io import parse_scenario, run_alert, run_otdr, run_scenario, run_sop

SEED_ENV = "FSCDSIM_SEED"


def _seed(args, scn) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise FscdSimError(f"{SEED_ENV}={env!r} is not an integer") from None
    return scn.seed


def cmd_simulate(args) -> int:
    scn = parse_scenario(args.scenario)
    report = run_scenario(scn, args.out, _seed(args, scn))
    print(f"{scn.name}: {len(report.files)} files written to {args.out} (seed {report.seed})")
    return 0


def cmd_otdr(args) -> int:
    scn = parse_scenario(args.scenario)
    if not 0 <= args.pulse_index < len(scn.otdr_runs):
        raise FscdSimError(f"pulse index {args.pulse_index} out of range (scenario has {len(scn.otdr_runs)})")
    res = run_otdr(scn, args.pulse_index, _seed(args, scn))
    sys.stdout.write(res.trace.to_csv())
    return 0


def cmd_sop(args) -> int:
    scn = parse_scenario(args.scenario)
    if scn.sop is None or args.path not in scn.sop.paths:
        raise FscdSimError(f"no SoP experiment on path {args.path!r}")
    if not 0 <= args.trial < scn.sop.trials:
        raise FscdSimError(f"trial {args.trial} out of range")
    ens = run_sop(scn, args.path, _seed(args, scn), trials=args.trial + 1)
    sys.stdout.write(ens.event_traces[args.trial].to_csv())
    return 0


def cmd_latency(args) -> int:
    scn = parse_scenario(args.scenario)
    res = run_alert(scn, seed=_seed(args, scn))
    sys.stdout.write(latency_csv(res.rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fscdsim", description="Fibre sensing control simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario file or shipped scenario name")
        p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: ${SEED_ENV} or the scenario's)")

    p = sub.add_parser("simulate", help="run every experiment and write all outputs")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("otdr-trace", help="print one gated OTDR trace as CSV")
    common(p)
    p.add_argument("--pulse-index", type=int, required=True, help="index into the scenario's OTDR runs")
    p.set_defaults(func=cmd_otdr)

    p = sub.add_parser("sop-trace", help="print one SoP trace with the disturbance as CSV")
    common(p)
    p.add_argument("--path", required=True)
    p.add_argument("--trial", type=int, default=0)
    p.set_defaults(func=cmd_sop)

    p = sub.add_parser("latency-report", help="print the per-layer response times of the first alert")
    common(p)
    p.set_defaults(func=cmd_latency)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FscdSimError, OSError) as exc:
        print(f"fscdsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
