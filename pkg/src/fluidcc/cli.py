"""Command-line entry point.

Three subcommands:

  run SCENARIO --out DIR      simulate one scenario file, write flows.csv,
                              queues.csv, events.csv and summary.csv
  sweep SWEEP --out DIR       run a parameter sweep, write summary.csv with
                              one row per (value, estimator) point
  plot DIR                    render PNG figures from a finished output dir

Everything experiment-specific lives in the scenario/sweep file; the flags
only relocate output (--out), rescale determinism knobs (--seed, --dt) or
silence progress (--quiet).  --plot on run/sweep renders figures next to the
CSVs after the run finishes.

Exit codes: 0 success, 1 bad input (parse or validation error, reported with
file and line), 2 simulation abort.
"""

import argparse
import dataclasses
import os
import sys

from . import analysis
from . import experiments
from . import scenario_io
from .fluidsim import SimulationError, run_scenario
from .model import ValidationError


def _apply_overrides(scenario, args):
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.dt is not None:
        changes["dt"] = args.dt
    if changes:
        scenario = dataclasses.replace(scenario, **changes)
        scenario.validate()
    return scenario


def _run_summary(scenario, trace):
    """Summary row for a bare scenario run.

    The tagged flow is the latest arrival; every other flow is a peer.  When
    no flow arrives late (or peers carry no traffic in the measurement
    window) the measured ratio is left blank rather than invented.
    """
    topo = scenario.topology
    late = max(topo.flows, key=lambda f: f.start_time)
    n = len(topo.flows) - 1
    links = topo.link_map()
    capacity = min(links[l].capacity for l in late.path)
    d = topo.round_trip_prop(late)
    kind = late.estimator.kind
    try:
        return experiments.summarize_run(
            trace, late.id, n, capacity, late.alpha, kind, d, scenario.name)
    except ValueError:
        window = analysis.default_fairness_window(trace)
        backlog = trace.mean_total_backlog(window[0], window[1],
                                           link_ids=list(late.path))
        row = analysis.summary_row(
            scenario.name, n, capacity, late.alpha, kind, "", backlog,
            predicted_ratio=analysis.predicted_ratio_for(
                kind, n, capacity, late.alpha, d))
        row["fairness_ratio"] = ""
        return row


def _cmd_run(args):
    scenario = _apply_overrides(scenario_io.load_scenario(args.scenario), args)
    trace = run_scenario(scenario)
    os.makedirs(args.out, exist_ok=True)
    trace.write_csv(args.out)
    row = _run_summary(scenario, trace)
    analysis.write_summary(os.path.join(args.out, "summary.csv"), [row])
    if not args.quiet:
        print(f"scenario {scenario.name}: {len(scenario.topology.flows)} "
              f"flows, {scenario.duration:g} s simulated")
        ratio = row["fairness_ratio"]
        shown = f"{ratio:.4f}" if isinstance(ratio, float) else "n/a"
        print(f"fairness_ratio={shown} predicted={row['predicted_ratio']:.4f} "
              f"estimator={row['estimator']}")
        print(f"wrote {args.out}/flows.csv, queues.csv, events.csv, "
              f"summary.csv")
    if args.plot:
        from . import plotting

        for path in plotting.render_output_dir(args.out, title=scenario.name):
            if not args.quiet:
                print(f"wrote {path}")
    return 0


def _cmd_sweep(args):
    spec = experiments.load_sweep(args.sweep)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
        spec.validate()
    if args.dt is not None:
        raise ValidationError(
            "--dt applies to single runs; sweep points pick their own step")
    progress = None
    if not args.quiet:
        def progress(row):
            print(f"  value={row['value']:g} estimator={row['estimator']} "
                  f"status={row['status']}")
        print(f"sweep {spec.name}: {len(spec.points())} points "
              f"({args.workers} worker{'s' if args.workers > 1 else ''})")
    rows = experiments.run_sweep(spec, workers=args.workers,
                                 progress=progress)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "summary.csv")
    analysis.write_summary(path, rows,
                           extra_columns=experiments.SWEEP_EXTRA_COLUMNS)
    failed = [r for r in rows if r["status"] != "ok"]
    if not args.quiet:
        print(f"wrote {path} ({len(rows)} rows, {len(failed)} not ok)")
    if args.plot:
        from . import plotting

        for fig in plotting.render_output_dir(args.out, title=spec.name):
            if not args.quiet:
                print(f"wrote {fig}")
    return 0


def _cmd_plot(args):
    from . import plotting

    written = plotting.render_output_dir(args.dir, fig_dir=args.out)
    if not written:
        print(f"no plottable CSVs found in {args.dir}", file=sys.stderr)
        return 1
    if not args.quiet:
        for path in written:
            print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fluidcc",
        description="Deterministic fluid-model simulator for delay-based "
                    "congestion control.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario file")
    p_run.add_argument("scenario", help="scenario file (.ini)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario RNG seed")
    p_run.add_argument("--dt", type=float, default=None,
                       help="override the integration step (s)")
    p_run.add_argument("--quiet", action="store_true")
    p_run.add_argument("--plot", action="store_true",
                       help="render PNG figures next to the CSVs")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("sweep", help="sweep file (.ini)")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--seed", type=int, default=None,
                         help="override the sweep RNG seed")
    p_sweep.add_argument("--dt", type=float, default=None,
                         help=argparse.SUPPRESS)
    p_sweep.add_argument("--workers", type=int, default=1,
                         help="concurrent sweep points (default 1)")
    p_sweep.add_argument("--quiet", action="store_true")
    p_sweep.add_argument("--plot", action="store_true",
                         help="render the fairness comparison figure")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_plot = sub.add_parser("plot", help="render figures from output CSVs")
    p_plot.add_argument("dir", help="directory holding run/sweep CSVs")
    p_plot.add_argument("--out", default=None,
                        help="figure directory (default: same as dir)")
    p_plot.add_argument("--quiet", action="store_true")
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (scenario_io.ScenarioFormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
