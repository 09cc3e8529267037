"""Deterministic portfolio-market simulator.

One step: rebalance the drifted weights to the requested action, paying
the transaction-cost factor mu; then prices move one day, drifting
weights and value passively. The reward is the log-return of the
drifted portfolio value. The market frame is never mutated; the agent's
actions do not influence prices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .market_data import MarketFrame, price_relatives
from .normalization import NormalizationScheme, normalize_window


class WindowOutOfRange(IndexError):
    pass


class FrameTooShort(ValueError):
    pass


class InvalidAction(ValueError):
    pass


class SteppedAfterTerminal(RuntimeError):
    pass


class NoConvergence(RuntimeError):
    pass


class BracketFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class StateTensor:
    """Normalized (close, high, low) window of shape (3, n, t) ending at step t_index."""

    values: np.ndarray
    t_index: int


@dataclass(frozen=True, eq=False)
class EnvState:
    """Snapshot of a simulation: value/weights before and after the day's
    price drift, plus everything needed to step it as a pure function."""

    t: int
    weights: np.ndarray          # W_t, the last rebalancing target
    drifted_weights: np.ndarray  # W_t after price drift
    value: float                 # V_t, value right after rebalancing
    drifted_value: float         # V_t after price drift
    frame: MarketFrame
    window: int
    scheme: NormalizationScheme
    commission: float
    terminal: bool = False


def coerce_action(action: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Validate a proposed weight vector and snap it onto the simplex.

    Entries >= -1e-9 are clamped to 0 and the vector renormalized when
    its sum is within ``tol`` of 1; anything farther off is rejected.
    """
    action = np.asarray(action, dtype=np.float64)
    if not np.isfinite(action).all():
        raise InvalidAction(f"non-finite entries in action {action}")
    if action.min() < -1e-9 or abs(action.sum() - 1.0) > tol:
        raise InvalidAction(f"action off the simplex beyond tolerance: sum={action.sum()!r}, min={action.min()!r}")
    clipped = np.clip(action, 0.0, None)
    return clipped / clipped.sum()


def drift_weights(weights: np.ndarray, rel: np.ndarray) -> np.ndarray:
    """Weights after a price move: (y * w) / (y . w)."""
    moved = rel * weights
    return moved / moved.sum()


def drift_value(value: float, weights: np.ndarray, rel: np.ndarray) -> float:
    """Value after a price move: V * (w . y)."""
    return value * float(np.dot(weights, rel))


def transaction_factor(w_from: np.ndarray, w_to: np.ndarray, commission: float,
                       tol: float = 1e-12, max_iter: int = 10000) -> float:
    """Cost factor mu of rebalancing w_from -> w_to at commission rate c.

    mu is the fixed point of
        mu = (1 - c*w_from[0] - (2c - c^2) * sum_i max(w_from[i] - mu*w_to[i], 0))
             / (1 - c*w_to[0])
    over the risky entries i >= 1, iterated from mu_0 = 1 - c*sum|delta|.
    """
    c = commission
    risky_from, risky_to = w_from[1:], w_to[1:]
    denominator = 1.0 - c * w_to[0]
    mu = 1.0 - c * np.abs(risky_from - risky_to).sum()
    for _ in range(max_iter):
        sold = np.maximum(risky_from - mu * risky_to, 0.0).sum()
        nxt = (1.0 - c * w_from[0] - (2.0 * c - c * c) * sold) / denominator
        if abs(nxt - mu) < tol:
            return nxt
        mu = nxt
    raise NoConvergence(f"mu fixed point did not converge (c={c}, last mu={mu})")


def transaction_factor_batch(w_from: np.ndarray, w_to: np.ndarray, commission: float,
                             tol: float = 1e-12, max_iter: int = 10000) -> np.ndarray:
    """Row-wise transaction_factor over (B, n+1) weight matrices.

    Same fixed-point update, iterated until every row moves less than
    ``tol``; each row satisfies the scalar stopping rule at return.
    """
    c = commission
    risky_from, risky_to = w_from[:, 1:], w_to[:, 1:]
    denominator = 1.0 - c * w_to[:, 0]
    mu = 1.0 - c * np.abs(risky_from - risky_to).sum(axis=1)
    for _ in range(max_iter):
        sold = np.maximum(risky_from - mu[:, None] * risky_to, 0.0).sum(axis=1)
        nxt = (1.0 - c * w_from[:, 0] - (2.0 * c - c * c) * sold) / denominator
        if np.abs(nxt - mu).max() < tol:
            return nxt
        mu = nxt
    raise NoConvergence(f"batch mu fixed point did not converge (c={c})")


def transaction_factor_oracle(w_from: np.ndarray, w_to: np.ndarray, commission: float,
                              tol: float = 1e-14) -> float:
    """Independent bisection on the fixed-point residual.

    g(mu) = mu*(1 - c*w_to[0]) - (1 - c*w_from[0] - (2c - c^2)*sum max(w_from[i] - mu*w_to[i], 0))
    is continuous and strictly increasing on [1 - 2c, 1], which brackets
    the unique root for any simplex pair.
    """
    c = commission
    risky_from, risky_to = w_from[1:], w_to[1:]

    def g(mu: float) -> float:
        sold = np.maximum(risky_from - mu * risky_to, 0.0).sum()
        return mu * (1.0 - c * w_to[0]) - (1.0 - c * w_from[0] - (2.0 * c - c * c) * sold)

    lo, hi = 1.0 - 2.0 * c, 1.0
    if g(lo) * g(hi) > 0.0:
        lo, hi = 0.0, 1.0
        if g(lo) * g(hi) > 0.0:
            raise BracketFailure(f"no sign change on [0, 1] (c={c})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_state(frame: MarketFrame, t: int, window: int, scheme: NormalizationScheme) -> StateTensor:
    """Normalized observation for deciding at step t (window ends at t, inclusive)."""
    if t < window - 1 or t >= frame.n_steps:
        raise WindowOutOfRange(f"step {t} with window {window} outside frame of length {frame.n_steps}")
    cols = slice(t - window + 1, t + 1)
    values = normalize_window(scheme, frame.closes[:, cols], frame.highs[:, cols], frame.lows[:, cols])
    return StateTensor(values=values, t_index=t)


def env_reset(frame: MarketFrame, window: int, scheme: NormalizationScheme,
              initial_value: float = 100_000.0, commission: float = 0.0025) -> tuple[EnvState, StateTensor]:
    """All-cash start at the first decidable step."""
    if window < 1:
        raise WindowOutOfRange(f"window must be >= 1, got {window}")
    if frame.n_steps < window + 1:
        raise FrameTooShort(f"frame of length {frame.n_steps} allows no step with window {window}")
    w0 = np.zeros(frame.n_assets + 1)
    w0[0] = 1.0
    t0 = window - 1
    state = EnvState(
        t=t0,
        weights=w0,
        drifted_weights=w0.copy(),
        value=float(initial_value),
        drifted_value=float(initial_value),
        frame=frame,
        window=window,
        scheme=scheme,
        commission=commission,
    )
    return state, build_state(frame, t0, window, scheme)


def env_step(state: EnvState, action: np.ndarray) -> tuple[EnvState, StateTensor | None, float]:
    """Rebalance to ``action``, advance one day, and return the log-return reward."""
    if state.terminal:
        raise SteppedAfterTerminal(f"episode already ended at step {state.t}")
    action = coerce_action(action)
    mu = transaction_factor(state.drifted_weights, action, state.commission)
    value = mu * state.drifted_value
    rel = price_relatives(state.frame, state.t + 1)
    drifted = drift_weights(action, rel)
    drifted_value = drift_value(value, action, rel)
    reward = math.log(drifted_value / state.drifted_value)
    t_next = state.t + 1
    terminal = t_next == state.frame.n_steps - 1
    next_state = replace(
        state,
        t=t_next,
        weights=action,
        drifted_weights=drifted,
        value=value,
        drifted_value=drifted_value,
        terminal=terminal,
    )
    obs = None if terminal else build_state(state.frame, t_next, state.window, state.scheme)
    return next_state, obs, reward
