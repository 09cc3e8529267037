"""Command-line entry points: run a campaign, regenerate a report, or
validate a config and its data without training."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import aggregate, emit_report, load_campaign, load_config, max_fapv, run_campaign
from .market_data import align_assets, load_manifest, load_ohlc_csv, split_periods


def _print_table(report) -> None:
    header = f"{'method':<14}{'FAPV':>22}{'MDD':>22}{'SR (excess)':>24}{'max FAPV':>12}"
    print(header)
    print("-" * len(header))
    for kind in sorted(report.methods):
        method = report.methods[kind]
        agg = aggregate(method.results)
        cells = [f"{agg[name][0]:.4f} +- {agg[name][1]:.4f}" for name in ("fapv", "mdd", "sharpe_excess")]
        print(f"{kind:<14}{cells[0]:>22}{cells[1]:>22}{cells[2]:>24}{max_fapv(method.results):>12.4f}")
        if method.failures:
            print(f"  warning: {len(method.failures)} failed run(s): "
                  + ", ".join(f"seed {seed}" for seed, _ in method.failures))


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.runs is not None:
        config.runs = args.runs
    if args.steps is not None:
        config.steps = args.steps
    if args.workers is not None:
        config.workers = args.workers
    report = run_campaign(config)
    out_dir = Path(args.out) if args.out else Path(f"campaign_{config.normalization}")
    emit_report(report, out_dir)
    print(f"campaign written to {out_dir}")
    _print_table(report)
    return 0


def _cmd_report(args) -> int:
    report = load_campaign(args.campaign_dir)
    emit_report(report, args.campaign_dir)
    _print_table(report)
    return 0


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    entries, manifest_alignment = load_manifest(config.manifest)
    series = [load_ohlc_csv(csv_path, ticker) for ticker, csv_path in entries]
    alignment = config.alignment or manifest_alignment or "intersect"
    frame = align_assets(series, alignment)
    split = split_periods(
        frame,
        (config.train_start, config.train_end),
        (config.test_start, config.test_end),
        config.time_window,
    )
    print(f"ok: {frame.n_assets} assets aligned ({alignment}), calendar {frame.dates[0]}..{frame.dates[-1]}")
    print(f"ok: train slice {split.train.n_steps} rows ({split.train.dates[0]}..{split.train.dates[-1]})")
    print(f"ok: test slice {split.test.n_steps} rows incl. {config.time_window - 1}-row prefix "
          f"({split.test.dates[0]}..{split.test.dates[-1]})")
    print(f"ok: {split.train.n_steps - config.time_window} decidable training steps, "
          f"{split.test.n_steps - config.time_window} decidable test steps")
    print(f"ok: normalization '{config.normalization}', {config.runs} run(s), {config.steps} training steps")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="portrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run a campaign from a config file")
    run_parser.add_argument("config")
    run_parser.add_argument("--out", help="output directory (default campaign_<method>)")
    run_parser.add_argument("--workers", type=int, default=None)
    run_parser.add_argument("--runs", type=int, default=None)
    run_parser.add_argument("--steps", type=int, default=None)
    run_parser.set_defaults(func=_cmd_run)

    report_parser = sub.add_parser("report", help="regenerate aggregates from an emitted campaign")
    report_parser.add_argument("campaign_dir")
    report_parser.set_defaults(func=_cmd_report)

    validate_parser = sub.add_parser("validate", help="check config and data without training")
    validate_parser.add_argument("config")
    validate_parser.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
