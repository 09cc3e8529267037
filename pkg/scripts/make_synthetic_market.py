#!/usr/bin/env python3
"""Generate a seeded synthetic daily-OHLC market and portfolio manifest.

Each asset follows geometric Brownian motion around a slow boom/bust
cycle (log-space sinusoid) plus a shared market factor, so absolute
price levels carry mean-reversion information while day-to-day moves
stay noisy. Price levels span several orders of magnitude across
assets, like a cryptocurrency basket.
"""

import argparse
from datetime import date, timedelta
from pathlib import Path

import numpy as np


def synth_asset(rng: np.random.Generator, days: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    base = 10.0 ** rng.uniform(-1.0, 4.0)
    trend = rng.uniform(0.0, 0.0012)
    amplitude = rng.uniform(0.3, 0.8)
    period = rng.uniform(200.0, 600.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    sigma = rng.uniform(0.025, 0.05)
    beta = rng.uniform(0.5, 1.5)

    t = np.arange(days)
    market = rng.normal(0.0, 0.02, size=days).cumsum()
    noise = rng.normal(0.0, sigma, size=days).cumsum()
    log_close = np.log(base) + trend * t + amplitude * np.sin(2.0 * np.pi * t / period + phase)
    log_close += noise + beta * market
    closes = np.exp(log_close)

    opens = np.empty(days)
    opens[0] = closes[0]
    opens[1:] = closes[:-1] * np.exp(rng.normal(0.0, 0.3 * sigma, size=days - 1))
    spread_hi = np.abs(rng.normal(0.0, 0.5 * sigma, size=days))
    spread_lo = np.abs(rng.normal(0.0, 0.5 * sigma, size=days))
    highs = np.maximum(opens, closes) * (1.0 + spread_hi)
    lows = np.minimum(opens, closes) * (1.0 - spread_lo)
    return opens, highs, lows, closes


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/synth_crypto", help="output directory")
    parser.add_argument("--seed", type=int, default=20180101)
    parser.add_argument("--assets", type=int, default=9)
    parser.add_argument("--start", default="2018-01-01")
    parser.add_argument("--end", default="2023-12-31")
    parser.add_argument("--alignment", default="forward_fill", choices=["intersect", "forward_fill"])
    args = parser.parse_args(argv)

    start = date.fromisoformat(args.start)
    end = date.fromisoformat(args.end)
    days = (end - start).days + 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(args.seed)
    manifest_lines = [f"# synthetic market, seed {args.seed}", f"alignment = {args.alignment}"]
    for i in range(args.assets):
        ticker = f"COIN{i + 1}"
        opens, highs, lows, closes = synth_asset(rng, days)
        rows = ["date,open,high,low,close"]
        for j in range(days):
            day = start + timedelta(days=j)
            rows.append(f"{day},{opens[j]:.8g},{highs[j]:.8g},{lows[j]:.8g},{closes[j]:.8g}")
        (out / f"{ticker}.csv").write_text("\n".join(rows) + "\n")
        manifest_lines.append(f"{ticker} {ticker}.csv")
        print(f"{ticker}: first close {closes[0]:.4g}, last close {closes[-1]:.4g}")
    (out / "portfolio.txt").write_text("\n".join(manifest_lines) + "\n")
    print(f"wrote {args.assets} assets and portfolio.txt to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
