"""Command-line experiment runner.

Subcommands: ``sync``, ``sched``, ``spectral``, ``montecarlo`` and
``bounds``.  Each reads a JSON config (--config) or a named preset
(--preset), runs the seeded trials, writes trials.csv and summary.json to
--out, and renders figures next to them unless --no-figures is given.
The exit status is 0 on success, 1 when a declared acceptance band fails,
and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import figures, harness, sched, sync
from .errors import PcosimError
from .rng import trial_seed
from .topology import maximal_cliques


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcosim",
        description="pulse-coupled synchronization and scheduling experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("sync", "synchronization Monte Carlo on a fixed topology"),
        ("sched", "scheduling Monte Carlo on a fixed topology"),
        ("spectral", "eigenvalue analysis and fixed-point predictions"),
        ("montecarlo", "network-size sweeps and histogram experiments"),
        ("bounds", "per-head accumulated-delay bounds for a topology"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--preset", help="named preset (see --list-presets)")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory (default: ./out)")
        p.add_argument("--figures", default=True,
                       action=argparse.BooleanOptionalAction,
                       help="render PNG figures next to the data files")
        p.add_argument("--list-presets", action="store_true",
                       help="print available presets and exit")
    return parser


def _resolve_spec(args, allowed_kinds) -> harness.ExperimentSpec:
    if args.preset:
        spec = harness.preset_spec(args.preset, base_seed=args.seed, trials=args.trials)
    elif args.config:
        spec = harness.load_spec(args.config)
        if args.seed is not None:
            spec.base_seed = args.seed
        if args.trials is not None:
            spec.trials = args.trials
    else:
        raise harness.ConfigError("provide --config or --preset")
    if spec.kind not in allowed_kinds:
        raise harness.ConfigError(
            f"kind {spec.kind!r} is not valid here (expected one of {allowed_kinds})"
        )
    return spec


def _maybe_list_presets(args) -> bool:
    if getattr(args, "list_presets", False):
        for name in sorted(harness.PRESETS):
            print(name)
        return True
    return False


def cmd_sync(args) -> int:
    if _maybe_list_presets(args):
        return 0
    spec = _resolve_spec(args, ("sync", "sync-delay"))
    report, records = harness.run_experiment(spec)
    harness.emit_results(records, report, args.out)
    if args.figures:
        _render_sync_trace(spec, args.out)
    print(f"{spec.kind}: {report.metrics['convergence_rate']:.1%} converged, "
          f"mean residual {report.metrics['delta_max_mean']}")
    return 0


def _render_sync_trace(spec, out_dir):
    """Re-run trial 0 with tracing and plot distances to node 0."""
    st = sync.init_sync(spec.topology, harness._sync_config(spec),
                        seed=trial_seed(spec.base_seed, 0))
    times, series = [], {f"node {j}": [] for j in range(1, spec.topology.node_count)}
    last_round = 0
    while st.sim_time < min(spec.max_periods, 200.0):
        sync.step(st)
        r = st.rounds_completed()
        if r > last_round:
            last_round = r
            dv = st.delta_vector()
            times.append(st.sim_time)
            for j in range(1, spec.topology.node_count):
                series[f"node {j}"].append(max(dv.delta(0, j), 1e-12))
    figures.save_sync_trace_plot(times, series, Path(out_dir) / "sync_trace.png",
                                 logy=spec.topology.has_delays())


def cmd_sched(args) -> int:
    if _maybe_list_presets(args):
        return 0
    spec = _resolve_spec(args, ("sched",))
    report, records, _ = harness.run_experiment(spec)
    harness.emit_results(records, report, args.out)
    dump_rows = _schedule_dump(spec, args.out)
    if args.figures:
        figures.save_schedule_plot(dump_rows, spec.topology.node_count,
                                   Path(args.out) / "schedule.png")
    print(f"sched: {report.metrics['convergence_rate']:.1%} converged, "
          f"median frames {report.metrics['median_frames_to_converge']}")
    return 0


def _schedule_dump(spec, out_dir):
    """Per-frame schedule of trial 0, exported as CSV."""
    topo = spec.topology
    cover = maximal_cliques(topo)
    cfg = sched.SchedConfig(beta=spec.beta, delta=spec.delta, demands=spec.demands,
                            max_frames=spec.max_frames)
    st = sched.init_schedule(
        topo, cover, cfg, seed=trial_seed(spec.base_seed, 0),
        require_consecutive_locals=spec.require_consecutive_locals,
    )
    rows: list = []
    sched.run_frames(st, dump=rows)
    with open(Path(out_dir) / "schedule.csv", "w", newline="") as fp:
        sched.write_schedule_dump(rows, fp)
    return rows


def cmd_spectral(args) -> int:
    if _maybe_list_presets(args):
        return 0
    spec = _resolve_spec(args, ("spectral",))
    report, records = harness.run_experiment(spec)
    harness.emit_results(records, report, args.out)
    rows = report.metrics["per_size"]
    with open(Path(args.out) / "eigens.csv", "w", newline="") as fp:
        fp.write("n,real,imag,modulus\n")
        for row in rows:
            for re, im in row["eigenvalues"]:
                fp.write(f"{row['n']},{re!r},{im!r},{abs(complex(re, im))!r}\n")
    if args.figures:
        figures.save_eigen_accuracy_plot(rows, Path(args.out) / "eigen_accuracy.png")
    print("spectral: estimate errors " +
          ", ".join(f"n={r['n']}: {r['estimate_error']:.2e}" for r in rows))
    return 0


def cmd_montecarlo(args) -> int:
    if _maybe_list_presets(args):
        return 0
    spec = _resolve_spec(args, ("montecarlo-line", "montecarlo-star", "histogram-f"))
    report, records = harness.run_experiment(spec)
    harness.emit_results(records, report, args.out)
    if args.figures:
        if spec.kind == "histogram-f":
            figures.save_share_histogram(
                report.metrics["histogram_bin_edges"],
                report.metrics["histogram_counts"],
                Path(args.out) / "share_histogram.png",
            )
        else:
            level = 0.75 if spec.kind == "montecarlo-line" else 4.0 / 3.0
            figures.save_saturation_plot(
                report.metrics["per_size"], level,
                f"{spec.kind} saturation", Path(args.out) / "saturation.png",
            )
    if spec.kind == "histogram-f":
        print(f"histogram-f: max-share fraction {report.metrics['max_share_fraction']:.3f} "
              f"band_ok={report.band_ok}")
    else:
        print(f"{spec.kind}: saturation ratio {report.metrics['saturation_ratio']:.4f} "
              f"band_ok={report.band_ok}")
    return 0 if report.band_ok in (True, None) else 1


def cmd_bounds(args) -> int:
    if _maybe_list_presets(args):
        return 0
    spec = _resolve_spec(args, ("sync", "sync-delay", "sched", "histogram-f"))
    if spec.topology is None:
        raise harness.ConfigError("bounds needs a topology")
    info = harness.head_bounds(spec.topology)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bounds.csv", "w", newline="") as fp:
        fp.write("head,max_path_delay\n")
        for h in sorted(info["eccentricity"]):
            fp.write(f"{h},{info['eccentricity'][h]!r}\n")
    with open(out / "bounds.json", "w") as fp:
        json.dump({"best": info["best"], "worst": info["worst"]}, fp, indent=2,
                  sort_keys=True)
        fp.write("\n")
    print(f"bounds: best {info['best']!r}, worst {info['worst']!r}")
    return 0


COMMANDS = {
    "sync": cmd_sync,
    "sched": cmd_sched,
    "spectral": cmd_spectral,
    "montecarlo": cmd_montecarlo,
    "bounds": cmd_bounds,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except PcosimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
