"""Performance metrics over a backtest trajectory.

The Sharpe ratio is reported in two labeled conventions, because its
defining formula leaves the risk-free term at zero: ``sharpe`` uses the
raw value ratios rho_t = V_t / V_{t-1} (literal reading), and
``sharpe_excess`` the per-step excess returns rho_t - 1. Both use the
population (1/N) standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .training import Trajectory


class EmptyTrajectory(ValueError):
    pass


class TooShort(ValueError):
    pass


class ZeroVariance(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    fapv: float
    mdd: float
    sharpe: float
    sharpe_excess: float
    n_steps: int


def fapv(traj: Trajectory, initial_value: float) -> float:
    """Final portfolio value over initial value."""
    if len(traj) == 0:
        raise EmptyTrajectory("trajectory has no steps")
    return float(traj.values[-1]) / initial_value


def mdd(traj: Trajectory) -> float:
    """Largest peak-to-trough relative loss, 0 if values never decline."""
    if len(traj) == 0:
        raise EmptyTrajectory("trajectory has no steps")
    peak = traj.values[0]
    worst = 0.0
    for value in traj.values:
        if value > peak:
            peak = value
        else:
            drop = (peak - value) / peak
            if drop > worst:
                worst = drop
    return worst


def sharpe_from_returns(returns: np.ndarray, risk_free: float = 0.0) -> float:
    """mean(r - r_F) / population-std(r - r_F)."""
    excess = np.asarray(returns, dtype=np.float64) - risk_free
    std = float(excess.std())
    if std == 0.0:
        raise ZeroVariance("returns are all identical")
    return float(excess.mean()) / std


def sharpe(traj: Trajectory, risk_free: float = 0.0) -> float:
    """Sharpe ratio of the consecutive value ratios V_t / V_{t-1}."""
    if len(traj) < 2:
        raise TooShort("need at least two steps for a return series")
    ratios = traj.values[1:] / traj.values[:-1]
    return sharpe_from_returns(ratios, risk_free)


def report(traj: Trajectory, initial_value: float) -> MetricReport:
    ratios = traj.values[1:] / traj.values[:-1]
    return MetricReport(
        fapv=fapv(traj, initial_value),
        mdd=mdd(traj),
        sharpe=sharpe_from_returns(ratios, 0.0),
        sharpe_excess=sharpe_from_returns(ratios - 1.0, 0.0),
        n_steps=len(traj),
    )
