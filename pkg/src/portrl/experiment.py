"""Config-driven campaign runner.

A campaign is N seeded train/backtest runs of one normalization method.
Each run is fully determined by (config, seed): the pipeline loads and
aligns the manifest's assets, splits train/test, fits/applies the
normalization, trains the policy, and backtests with online learning.
Reports carry per-run metrics, per-method aggregates (mean and 95%
normal CI half-width of the mean), and plot-ready sample lists. Wall
times go to a separate timings file so every other emitted byte is
reproducible from (config, seed) alone.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import date
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .market_data import align_assets, load_manifest, load_ohlc_csv, split_periods
from .normalization import DATA_MAX, KINDS, apply_data_max, fit_data_max, scheme_from_kind
from .policy import init_policy
from .training import Trainer, TrainerConfig, Trajectory

REPORT_FORMAT_VERSION = 1
_METRIC_NAMES = ("fapv", "mdd", "sharpe", "sharpe_excess")


@dataclass
class ExperimentConfig:
    manifest: str
    train_start: date
    train_end: date
    test_start: date
    test_end: date
    normalization: str
    learning_rate: float = 5e-5
    batch_size: int = 200
    sample_bias: float = 0.002
    steps: int = 300_000
    online_steps: int = 30
    time_window: int = 50
    commission_rate: float = 0.0025
    initial_value: float = 100_000.0
    weight_decay: float = 0.01
    runs: int = 50
    base_seed: int = 0
    workers: int = 1
    alignment: str = ""
    kernel_width: int = 3
    conv1_channels: int = 2
    conv2_channels: int = 20

    def __post_init__(self):
        if self.normalization not in KINDS:
            raise ValueError(f"normalization must be one of {KINDS}, got '{self.normalization}'")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        for name in ("learning_rate", "batch_size", "sample_bias", "time_window", "initial_value"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class RunResult:
    seed: int
    metrics: metrics_mod.MetricReport
    trajectory_path: str
    wall_time: float


@dataclass
class MethodResults:
    results: list[RunResult] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    scales: tuple[float, ...] | None = None
    trajectories: dict[int, Trajectory] = field(default_factory=dict)


@dataclass
class CampaignReport:
    config: ExperimentConfig
    methods: dict[str, MethodResults]


_KEY_PARSERS: dict[str, object] = {}
for _name in ("train_start", "train_end", "test_start", "test_end"):
    _KEY_PARSERS[_name] = date.fromisoformat
for _name in ("batch_size", "steps", "online_steps", "time_window", "runs", "base_seed",
              "workers", "kernel_width", "conv1_channels", "conv2_channels"):
    _KEY_PARSERS[_name] = int
for _name in ("learning_rate", "sample_bias", "commission_rate", "initial_value", "weight_decay"):
    _KEY_PARSERS[_name] = float
for _name in ("manifest", "normalization", "alignment"):
    _KEY_PARSERS[_name] = str


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a flat `key = value` config file ('#' starts a comment)."""
    path = Path(path)
    values: dict[str, object] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected 'key = value'")
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if key not in _KEY_PARSERS:
            raise ValueError(f"{path}:{line_no}: unknown config key '{key}'")
        try:
            values[key] = _KEY_PARSERS[key](text)
        except ValueError:
            raise ValueError(f"{path}:{line_no}: cannot parse '{text}' for key '{key}'") from None
    missing = [name for name in ("manifest", "train_start", "train_end", "test_start", "test_end", "normalization") if name not in values]
    if missing:
        raise ValueError(f"{path}: missing required keys {missing}")
    config = ExperimentConfig(**values)
    if not Path(config.manifest).is_absolute():
        config.manifest = str((path.parent / config.manifest).resolve())
    return config


def config_to_text(config: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def run_single(config: ExperimentConfig, seed: int) -> tuple[RunResult, Trajectory, tuple[float, ...] | None]:
    """One fully seeded train + backtest; returns metrics, trajectory, fitted scales."""
    started = time.perf_counter()
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
    if config.normalization == DATA_MAX:
        scheme = fit_data_max(split.train)
        train_frame = apply_data_max(scheme, split.train)
        test_frame = apply_data_max(scheme, split.test)
        scales = scheme.scales
    else:
        scheme = scheme_from_kind(config.normalization)
        train_frame, test_frame = split.train, split.test
        scales = None

    params = init_policy(
        frame.n_assets,
        config.time_window,
        seed,
        k1=config.kernel_width,
        c1=config.conv1_channels,
        c2=config.conv2_channels,
    )
    trainer = Trainer(
        params=params,
        frame=train_frame,
        window=config.time_window,
        scheme=scheme,
        initial_value=config.initial_value,
        commission=config.commission_rate,
        config=TrainerConfig(
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            sample_bias=config.sample_bias,
            steps=config.steps,
            online_steps=config.online_steps,
            weight_decay=config.weight_decay,
        ),
        rng=np.random.default_rng(seed),
    )
    trainer.fill_buffer()
    trainer.train(config.steps)
    trajectory = trainer.backtest(test_frame, config.online_steps)
    report = metrics_mod.report(trajectory, config.initial_value)
    result = RunResult(
        seed=seed,
        metrics=report,
        trajectory_path=f"traj_{config.normalization}_{seed:05d}.tsv",
        wall_time=time.perf_counter() - started,
    )
    return result, trajectory, scales


def run_campaign(config: ExperimentConfig) -> CampaignReport:
    """Execute config.runs seeded runs (seed = base_seed + k), possibly in parallel."""
    seeds = [config.base_seed + k for k in range(config.runs)]
    method = MethodResults()
    outcomes: list[tuple[int, object]] = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {seed: pool.submit(run_single, config, seed) for seed in seeds}
            for seed in seeds:
                try:
                    outcomes.append((seed, futures[seed].result()))
                except Exception as exc:
                    outcomes.append((seed, exc))
    else:
        for seed in seeds:
            try:
                outcomes.append((seed, run_single(config, seed)))
            except Exception as exc:
                outcomes.append((seed, exc))

    for seed, outcome in sorted(outcomes, key=lambda pair: pair[0]):
        if isinstance(outcome, Exception):
            method.failures.append((seed, f"{type(outcome).__name__}: {outcome}"))
            continue
        result, trajectory, scales = outcome
        method.results.append(result)
        method.trajectories[seed] = trajectory
        method.scales = scales
    if not method.results:
        raise RuntimeError(f"all {config.runs} runs failed; first error: {method.failures[0][1]}")
    return CampaignReport(config=config, methods={config.normalization: method})


def merge_campaigns(reports: list[CampaignReport]) -> CampaignReport:
    """Combine single-method campaigns that share everything but the method."""
    merged = CampaignReport(config=reports[0].config, methods={})
    for report in reports:
        for kind, method in report.methods.items():
            if kind in merged.methods:
                raise ValueError(f"duplicate method '{kind}' across campaigns")
            merged.methods[kind] = method
    return merged


def aggregate(results: list[RunResult]) -> dict[str, tuple[float, float]]:
    """Per metric: (mean, 1.96 * sample std / sqrt(N)); half-width 0 for N = 1."""
    if not results:
        raise ValueError("aggregate needs at least one result")
    out = {}
    for name in _METRIC_NAMES:
        samples = np.array([getattr(r.metrics, name) for r in results])
        if len(samples) == 1:
            out[name] = (float(samples[0]), 0.0)
        else:
            half = 1.96 * float(samples.std(ddof=1)) / np.sqrt(len(samples))
            out[name] = (float(samples.mean()), half)
    return out


def max_fapv(results: list[RunResult]) -> float:
    return max(r.metrics.fapv for r in results)


def _float_text(value: float) -> str:
    return repr(float(value))


def _write_trajectory(traj: Trajectory, path: Path) -> None:
    n_weights = traj.actions.shape[1]
    header = "step\tvalue\treward\t" + "\t".join(f"w_{i}" for i in range(n_weights))
    lines = [header]
    for i in range(len(traj)):
        row = [str(int(traj.steps[i])), _float_text(traj.values[i]), _float_text(traj.rewards[i])]
        row += [_float_text(w) for w in traj.actions[i]]
        lines.append("\t".join(row))
    path.write_text("\n".join(lines) + "\n")


def _read_trajectory(path: Path) -> Trajectory:
    lines = path.read_text().splitlines()
    rows = [line.split("\t") for line in lines[1:]]
    return Trajectory(
        steps=np.array([int(r[0]) for r in rows], dtype=np.int64),
        values=np.array([float(r[1]) for r in rows]),
        rewards=np.array([float(r[2]) for r in rows]),
        actions=np.array([[float(x) for x in r[3:]] for r in rows]),
    )


def summary_dict(report: CampaignReport) -> dict:
    """Deterministic machine-readable content of a campaign."""
    methods = {}
    for kind in sorted(report.methods):
        method = report.methods[kind]
        aggregates = {
            name: {"mean": mean, "half_width": half, "single_run": len(method.results) == 1}
            for name, (mean, half) in aggregate(method.results).items()
        }
        methods[kind] = {
            "aggregates": aggregates,
            "max_fapv": max_fapv(method.results),
            "runs": [
                {
                    "seed": r.seed,
                    "fapv": r.metrics.fapv,
                    "mdd": r.metrics.mdd,
                    "sharpe": r.metrics.sharpe,
                    "sharpe_excess": r.metrics.sharpe_excess,
                    "n_steps": r.metrics.n_steps,
                    "trajectory": r.trajectory_path,
                }
                for r in method.results
            ],
            "failures": [{"seed": seed, "error": message} for seed, message in method.failures],
            "data_max_scales": list(method.scales) if method.scales is not None else None,
        }
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "conventions": {
            "half_width": "95% normal CI of the mean: 1.96 * sample std (ddof=1) / sqrt(N)",
            "sharpe": "mean(rho) / population std(rho), rho_t = V_t / V_{t-1}, risk-free ratio 0",
            "sharpe_excess": "mean(rho - 1) / population std(rho - 1)",
        },
        "config": {f.name: str(getattr(report.config, f.name)) for f in fields(ExperimentConfig)},
        "methods": methods,
    }


def emit_report(report: CampaignReport, out_dir: str | Path) -> None:
    """Write summary.json, runs.tsv, per-method FAPV lists, the resolved
    config, per-run trajectories, and (separately) wall times."""
    if not any(method.results for method in report.methods.values()):
        raise ValueError("refusing to emit a campaign with no successful runs")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    (out / "summary.json").write_text(json.dumps(summary_dict(report), indent=2, sort_keys=True) + "\n")

    rows = ["method\tseed\tfapv\tmdd\tsharpe\tsharpe_excess\tn_steps\ttrajectory"]
    for kind in sorted(report.methods):
        for r in report.methods[kind].results:
            rows.append(
                "\t".join(
                    [
                        kind,
                        str(r.seed),
                        _float_text(r.metrics.fapv),
                        _float_text(r.metrics.mdd),
                        _float_text(r.metrics.sharpe),
                        _float_text(r.metrics.sharpe_excess),
                        str(r.metrics.n_steps),
                        r.trajectory_path,
                    ]
                )
            )
    (out / "runs.tsv").write_text("\n".join(rows) + "\n")

    for kind in sorted(report.methods):
        samples = [_float_text(r.metrics.fapv) for r in report.methods[kind].results]
        (out / f"fapv_{kind}.txt").write_text("\n".join(samples) + "\n")

    seed_lines = [f"# seeds used: {', '.join(str(r.seed) for m in report.methods.values() for r in m.results)}"]
    (out / "config_resolved.txt").write_text("\n".join(seed_lines) + "\n" + config_to_text(report.config))

    timing_rows = ["method\tseed\twall_time"]
    for kind in sorted(report.methods):
        for r in report.methods[kind].results:
            timing_rows.append(f"{kind}\t{r.seed}\t{_float_text(r.wall_time)}")
    (out / "timings.tsv").write_text("\n".join(timing_rows) + "\n")

    for kind, method in report.methods.items():
        for r in method.results:
            if r.seed in method.trajectories:
                _write_trajectory(method.trajectories[r.seed], out / r.trajectory_path)


def load_campaign(out_dir: str | Path) -> CampaignReport:
    """Rebuild a CampaignReport from an emitted directory."""
    out = Path(out_dir)
    config = load_config(out / "config_resolved.txt")
    summary = json.loads((out / "summary.json").read_text())
    timings: dict[tuple[str, int], float] = {}
    for line in (out / "timings.tsv").read_text().splitlines()[1:]:
        kind, seed, wall = line.split("\t")
        timings[(kind, int(seed))] = float(wall)

    methods: dict[str, MethodResults] = {}
    for kind, entry in summary["methods"].items():
        method = MethodResults()
        for run in entry["runs"]:
            result = RunResult(
                seed=run["seed"],
                metrics=metrics_mod.MetricReport(
                    fapv=run["fapv"],
                    mdd=run["mdd"],
                    sharpe=run["sharpe"],
                    sharpe_excess=run["sharpe_excess"],
                    n_steps=run["n_steps"],
                ),
                trajectory_path=run["trajectory"],
                wall_time=timings.get((kind, run["seed"]), 0.0),
            )
            method.results.append(result)
            traj_file = out / run["trajectory"]
            if traj_file.exists():
                method.trajectories[result.seed] = _read_trajectory(traj_file)
        method.failures = [(f["seed"], f["error"]) for f in entry["failures"]]
        scales = entry["data_max_scales"]
        method.scales = tuple(scales) if scales is not None else None
        methods[kind] = method
    return CampaignReport(config=config, methods=methods)
