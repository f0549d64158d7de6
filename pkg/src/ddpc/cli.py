"""Command-line interface: run studies, scan singular spectra, collect data.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .behavior import build_mosaic_hankel
from .config import ConfigError, Strategy, load_config
from .dataio import load_dataset_csv, save_trajectories_csv
from .harness import collect_initial_data, export_results, run_study
from .rank import robustified_rank, singular_spectrum, threshold_window
from .robot import NoiseModel, RobotParams


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddpc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a closed-loop Monte-Carlo study")
    run.add_argument("--config", required=True, help="scenario YAML file")
    run.add_argument("--runs", type=int, default=None, help="override the run count")
    run.add_argument(
        "--strategy",
        choices=["pm", "au", "nu", "all"],
        default=None,
        help="override the update strategy ('all' runs the three paired)",
    )
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--parallel", type=int, default=1, metavar="W", help="worker processes")
    run.add_argument("--plots", action="store_true", help="render figures next to the CSV output")

    scan = sub.add_parser("rank-scan", help="print the singular spectrum of a dataset")
    scan.add_argument("--data", required=True, help="trajectory CSV file")
    scan.add_argument("--rank", required=True, type=int, help="required rank n + m*L")
    scan.add_argument("--depth", type=int, default=14, help="window depth L (default 14)")
    scan.add_argument("--rho", type=float, default=None, help="also report the robustified rank at rho")
    scan.add_argument("--out", default=None, help="write the CSV here instead of stdout")
    scan.add_argument("--figure", default=None, help="render the spectrum plot to this file")

    collect = sub.add_parser("collect", help="excite the robot and store the run as CSV")
    collect.add_argument("--steps", required=True, type=int, help="number of samples")
    collect.add_argument("--bound", required=True, type=float, help="input inf-norm bound (N m)")
    collect.add_argument("--out", required=True, help="output CSV path")
    collect.add_argument("--seed", type=int, default=0)
    collect.add_argument("--dt", type=float, default=0.01)
    collect.add_argument("--noise", type=float, default=1e-3, help="measurement noise bound (rad)")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config, strategy=None if args.strategy in (None, "all") else args.strategy,
                         runs=args.runs, master_seed=args.seed)
    strategies = [s for s in Strategy] if args.strategy == "all" else [config.strategy]
    study = run_study(config, strategies=strategies, workers=max(1, args.parallel))
    written = export_results(study, args.out)
    if args.plots:
        from .plots import render_study_figures

        written += render_study_figures(study, args.out)
    for strat in sorted(study.summaries):
        s = study.summaries[strat]
        print(
            f"{strat}: runs={s.n_runs} failed={len(s.failed_runs)} "
            f"median J_tot={s.median:.6g} iqr=[{s.q1:.6g}, {s.q3:.6g}]"
        )
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def _cmd_rank_scan(args) -> int:
    dataset = load_dataset_csv(args.data, args.depth)
    matrix = build_mosaic_hankel(dataset).entries
    spectrum = singular_spectrum(matrix)
    if not 1 <= args.rank <= spectrum.values.size:
        raise ConfigError(f"--rank must be in 1..{spectrum.values.size}")
    window = threshold_window(spectrum, args.rank)
    lines = [
        f"# data={args.data} depth={args.depth} shape={matrix.shape[0]}x{matrix.shape[1]}",
        f"# required_rank={args.rank}",
    ]
    if window is None:
        lines.append("# threshold_window=empty")
    else:
        lines.append(f"# threshold_window_lower={window[0]!r}")
        lines.append(f"# threshold_window_upper={window[1]!r}")
    if args.rho is not None:
        lines.append(f"# robustified_rank(rho={args.rho!r})={robustified_rank(spectrum, args.rho)}")
    lines.append("index,singular_value")
    for i, value in enumerate(spectrum.values, start=1):
        lines.append(f"{i},{value!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.figure:
        from .plots import render_spectrum

        render_spectrum(spectrum.values, args.figure, required_rank=args.rank, window=window, rho=args.rho)
    return 0


def _cmd_collect(args) -> int:
    if args.steps < 1 or args.bound <= 0 or args.dt <= 0 or args.noise < 0:
        raise ConfigError("collect: steps/bound/dt must be positive, noise nonnegative")
    rng = np.random.default_rng(args.seed)
    noise = NoiseModel(args.noise, seed=np.random.SeedSequence(args.seed).spawn(1)[0])
    result = collect_initial_data(
        RobotParams(), noise, args.dt, args.steps, args.bound, depth=1, rng=rng
    )
    from .behavior import Trajectory

    save_trajectories_csv([Trajectory(result.inputs, result.outputs)], args.out)
    print(f"collected {args.steps} samples -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "rank-scan":
            return _cmd_rank_scan(args)
        if args.command == "collect":
            return _cmd_collect(args)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
