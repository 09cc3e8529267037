#!/usr/bin/env python3
"""Reduced directional replication: N seeds x 3 normalization methods.

Trains and backtests with the standard hyperparameters (reduced step
count) on the configured portfolio, reports the mean FAPV per
normalization method, and records whether the dataset-level
normalization matches or beats both state normalizations. The market
data here is synthetic (see make_synthetic_market.py), so this is a
directional exercise, not a reproduction of published numbers.
"""

import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import argparse
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import date
from pathlib import Path

from portrl.experiment import (
    CampaignReport,
    ExperimentConfig,
    MethodResults,
    aggregate,
    emit_report,
    max_fapv,
    run_single,
)

METHODS = ("last_close", "last_price", "data_max")


def build_config(args, kind: str) -> ExperimentConfig:
    return ExperimentConfig(
        manifest=str(Path(args.manifest).resolve()),
        train_start=date.fromisoformat(args.train_start),
        train_end=date.fromisoformat(args.train_end),
        test_start=date.fromisoformat(args.test_start),
        test_end=date.fromisoformat(args.test_end),
        normalization=kind,
        steps=args.steps,
        online_steps=args.online_steps,
        runs=args.seeds,
        base_seed=args.base_seed,
        workers=1,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--manifest", default="data/synth_crypto/portfolio.txt")
    parser.add_argument("--out", default="results/replication")
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--steps", type=int, default=20_000)
    parser.add_argument("--online-steps", type=int, default=30)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--base-seed", type=int, default=0)
    parser.add_argument("--train-start", default="2018-01-01")
    parser.add_argument("--train-end", default="2022-12-31")
    parser.add_argument("--test-start", default="2023-01-01")
    parser.add_argument("--test-end", default="2023-12-31")
    args = parser.parse_args(argv)

    configs = {kind: build_config(args, kind) for kind in METHODS}
    jobs = [(kind, configs[kind].base_seed + k) for kind in METHODS for k in range(args.seeds)]
    started = time.time()
    outcomes: dict[tuple[str, int], object] = {}
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = {job: pool.submit(run_single, configs[job[0]], job[1]) for job in jobs}
            for job in jobs:
                try:
                    outcomes[job] = futures[job].result()
                except Exception as exc:  # recorded, not fatal
                    outcomes[job] = exc
                kind, seed = job
                print(f"[{time.time() - started:7.0f}s] {kind} seed {seed} done", flush=True)
    else:
        for job in jobs:
            try:
                outcomes[job] = run_single(configs[job[0]], job[1])
            except Exception as exc:
                outcomes[job] = exc
            kind, seed = job
            print(f"[{time.time() - started:7.0f}s] {kind} seed {seed} done", flush=True)

    methods: dict[str, MethodResults] = {}
    for kind in METHODS:
        method = MethodResults()
        for k in range(args.seeds):
            seed = configs[kind].base_seed + k
            outcome = outcomes[(kind, seed)]
            if isinstance(outcome, Exception):
                method.failures.append((seed, f"{type(outcome).__name__}: {outcome}"))
                continue
            result, trajectory, scales = outcome
            method.results.append(result)
            method.trajectories[seed] = trajectory
            method.scales = scales
        methods[kind] = method

    report = CampaignReport(config=configs["last_close"], methods=methods)
    out_dir = Path(args.out)
    emit_report(report, out_dir)

    lines = [
        f"seeds per method: {args.seeds}, training steps: {args.steps}, "
        f"online steps: {args.online_steps}",
        "",
        f"{'method':<14}{'mean FAPV':>12}{'+-':>8}{'mean MDD':>12}{'SR(excess)':>12}{'max FAPV':>12}",
    ]
    means = {}
    for kind in METHODS:
        agg = aggregate(methods[kind].results)
        means[kind] = agg["fapv"][0]
        lines.append(
            f"{kind:<14}{agg['fapv'][0]:>12.4f}{agg['fapv'][1]:>8.3f}"
            f"{agg['mdd'][0]:>12.4f}{agg['sharpe_excess'][0]:>12.4f}"
            f"{max_fapv(methods[kind].results):>12.4f}"
        )
    data_max_leads = means["data_max"] >= max(means["last_close"], means["last_price"])
    lines += [
        "",
        f"data_max mean FAPV >= both state normalizations: {data_max_leads}",
        f"total wall time: {time.time() - started:.0f}s",
    ]
    verdict = "\n".join(lines)
    (out_dir / "verdict.txt").write_text(verdict + "\n")
    print(verdict)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
