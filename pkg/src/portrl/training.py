"""Domain-specific policy-gradient training.

The trainer fills a replay buffer with one experience per training
step, samples recency-biased sequential batches via a geometric
distribution, ascends the mean log-profit objective with AdamW, and
rewrites the sampled experiences' stored last-actions with the updated
policy's outputs. During backtests it keeps learning online: each new
test experience is appended to the buffer before a burst of update
steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .environment import env_reset, env_step, transaction_factor_batch
from .market_data import MarketFrame, price_relatives
from .normalization import NormalizationScheme
from .policy import PolicyParams, forward_batch, policy_forward


class BatchTooLarge(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Experience:
    t: int
    state: np.ndarray        # (3, n, window)
    last_action: np.ndarray  # (n+1,)
    relative: np.ndarray     # (n+1,) price relatives for the transition out of t


@dataclass
class Trajectory:
    """Backtest record: one row per decision, values are post-drift."""

    steps: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    actions: np.ndarray

    def __len__(self) -> int:
        return len(self.steps)


class ReplayBuffer:
    """Ordered per-step experiences backed by flat arrays.

    The last_action column is mutable by design: training rewrites it
    with fresh policy outputs. Everything else is frozen history.
    """

    def __init__(self, t0: int, n_assets: int, window: int, capacity: int = 64):
        self.t0 = t0
        self._size = 0
        self._states = np.empty((capacity, 3, n_assets, window))
        self._last_actions = np.empty((capacity, n_assets + 1))
        self._relatives = np.empty((capacity, n_assets + 1))

    def __len__(self) -> int:
        return self._size

    def append(self, state: np.ndarray, last_action: np.ndarray, relative: np.ndarray) -> None:
        if self._size == self._states.shape[0]:
            grow = lambda a: np.concatenate([a, np.empty_like(a)], axis=0)
            self._states = grow(self._states)
            self._last_actions = grow(self._last_actions)
            self._relatives = grow(self._relatives)
        self._states[self._size] = state
        self._last_actions[self._size] = last_action
        self._relatives[self._size] = relative
        self._size += 1

    def __getitem__(self, i: int) -> Experience:
        if not 0 <= i < self._size:
            raise IndexError(i)
        return Experience(
            t=self.t0 + i,
            state=self._states[i],
            last_action=self._last_actions[i],
            relative=self._relatives[i],
        )

    @property
    def states(self) -> np.ndarray:
        return self._states[: self._size]

    @property
    def last_actions(self) -> np.ndarray:
        return self._last_actions[: self._size]

    @property
    def relatives(self) -> np.ndarray:
        return self._relatives[: self._size]


@dataclass
class TrainerConfig:
    learning_rate: float = 5e-5
    batch_size: int = 200
    sample_bias: float = 0.002
    steps: int = 300_000
    online_steps: int = 30
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    log_every: int = 100


class AdamW:
    """Adam with decoupled weight decay; decay applies only to the
    parameters passed in ``decayed``."""

    def __init__(self, decayed: list[Tensor], undecayed: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8,
                 weight_decay: float = 0.01):
        self.groups = [(decayed, weight_decay), (undecayed, 0.0)]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self._m = {id(p): np.zeros_like(p.data) for group, _ in self.groups for p in group}
        self._v = {id(p): np.zeros_like(p.data) for group, _ in self.groups for p in group}

    def zero_grad(self) -> None:
        for group, _ in self.groups:
            for p in group:
                p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for group, decay in self.groups:
            for p in group:
                if p.grad is None:
                    continue
                m = self._m[id(p)]
                v = self._v[id(p)]
                m *= self.beta1
                m += (1.0 - self.beta1) * p.grad
                v *= self.beta2
                v += (1.0 - self.beta2) * p.grad * p.grad
                update = (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)
                if decay:
                    p.data -= self.lr * decay * p.data
                p.data -= self.lr * update


def fill_buffer(frame: MarketFrame, window: int, scheme: NormalizationScheme,
                initial_value: float, commission: float, params: PolicyParams) -> ReplayBuffer:
    """Roll the policy greedily through the whole episode, one experience per step."""
    state, obs = env_reset(frame, window, scheme, initial_value, commission)
    buffer = ReplayBuffer(t0=state.t, n_assets=frame.n_assets, window=window,
                          capacity=max(frame.n_steps - window, 1))
    # The buffer keeps the policy's raw outputs as last-actions (the
    # simulator renormalizes its own copy), so rewrites stay exact.
    last_action = state.weights
    while not state.terminal:
        action = policy_forward(params, obs, last_action)
        relative = price_relatives(frame, state.t + 1)
        buffer.append(obs.values, last_action, relative)
        state, obs, _ = env_step(state, action)
        last_action = action
    return buffer


def sample_batch(buffer: ReplayBuffer, batch_size: int, sample_bias: float,
                 rng: np.random.Generator, max_redraws: int = 100) -> tuple[int, int]:
    """Pick a contiguous range [start, start+batch_size) biased toward the end.

    The offset back from the latest valid start is geometric with
    success probability ``sample_bias`` (support 0, 1, 2, ...);
    out-of-range draws are redrawn, then clamped to the earliest start.
    """
    if batch_size > len(buffer):
        raise BatchTooLarge(f"batch {batch_size} exceeds buffer length {len(buffer)}")
    latest = len(buffer) - batch_size
    for _ in range(max_redraws):
        offset = int(rng.geometric(sample_bias)) - 1
        if offset <= latest:
            return latest - offset, latest - offset + batch_size
    return 0, batch_size


def batch_objective(params: PolicyParams, buffer: ReplayBuffer, start: int, stop: int,
                    commission: float, frozen_mu: np.ndarray | None = None) -> tuple[Tensor, np.ndarray]:
    """Mean log-profit of the policy over one sequential batch.

    Each step contributes ln(mu_t * (a_t . y_t)) where a_t is the policy
    output for the stored state and last-action, y_t the stored price
    relatives, and mu_t the rebalancing cost factor from the previous
    action's drifted weights. mu_t is held constant under
    differentiation; pass ``frozen_mu`` to reuse values from a previous
    evaluation (finite-difference checks need this).
    """
    states = buffer.states[start:stop]
    last_actions = buffer.last_actions[start:stop]
    relatives = buffer.relatives[start:stop]
    actions = forward_batch(params, states, last_actions)
    if frozen_mu is None:
        before = np.array(last_actions)
        lo = max(start, 1)  # the episode's first experience has undrifted weights
        if stop > lo:
            moved = buffer.last_actions[lo:stop] * buffer.relatives[lo - 1 : stop - 1]
            before[lo - start :] = moved / moved.sum(axis=1, keepdims=True)
        frozen_mu = transaction_factor_batch(before, actions.data, commission)
    gains = ad.tensor_sum(ad.mul(actions, Tensor(relatives)), axis=1)
    objective = ad.mean(ad.log(ad.mul(gains, Tensor(frozen_mu))))
    return objective, frozen_mu


class Trainer:
    """One training run: owns its policy, buffer, optimizer state, and RNG."""

    def __init__(self, params: PolicyParams, frame: MarketFrame, window: int,
                 scheme: NormalizationScheme, initial_value: float, commission: float,
                 config: TrainerConfig, rng: np.random.Generator, log_file=None,
                 eval_fn=None, eval_every: int = 0):
        self.params = params
        self.eval_fn = eval_fn
        self.eval_every = eval_every
        self.frame = frame
        self.window = window
        self.scheme = scheme
        self.initial_value = initial_value
        self.commission = commission
        self.config = config
        self.rng = rng
        self.log_file = log_file
        self.buffer: ReplayBuffer | None = None
        self.step_count = 0
        self.last_batch: tuple[int, int] | None = None
        self.optimizer = AdamW(
            decayed=[t for _, t in params.kernel_tensors()],
            undecayed=[t for _, t in params.bias_tensors()],
            lr=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            epsilon=config.epsilon,
            weight_decay=config.weight_decay,
        )

    def fill_buffer(self) -> ReplayBuffer:
        self.buffer = fill_buffer(self.frame, self.window, self.scheme,
                                  self.initial_value, self.commission, self.params)
        return self.buffer

    def train_step(self) -> float:
        if self.buffer is None:
            raise RuntimeError("fill_buffer must run before train_step")
        start, stop = sample_batch(self.buffer, self.config.batch_size,
                                   self.config.sample_bias, self.rng)
        self.last_batch = (start, stop)
        objective, _ = batch_objective(self.params, self.buffer, start, stop, self.commission)
        loss = ad.smul(objective, -1.0)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss {value} at step {self.step_count}, batch [{start}, {stop})")
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self._rewrite(start, stop)
        self.step_count += 1
        if self.log_file is not None and self.step_count % self.config.log_every == 0:
            self.log_file.write(f"loss\t{self.step_count}\t{value!r}\n")
        if (self.eval_fn is not None and self.eval_every > 0
                and self.step_count % self.eval_every == 0):
            score = float(self.eval_fn(self.params))
            if self.log_file is not None:
                self.log_file.write(f"fapv\t{self.step_count}\t{score!r}\n")
        return value

    def _rewrite(self, start: int, stop: int) -> None:
        # New actions propagate forward: slot t+1 receives the updated
        # policy's output for experience t, chained through the batch.
        for j in range(start, stop):
            action = policy_forward(self.params, self.buffer.states[j], self.buffer.last_actions[j])
            if j + 1 < len(self.buffer):
                self.buffer.last_actions[j + 1] = action

    def train(self, steps: int) -> None:
        for _ in range(steps):
            self.train_step()

    def backtest(self, test_frame: MarketFrame, online_steps: int | None = None) -> Trajectory:
        """Fresh all-cash episode on the test frame; each new experience is
        appended to the buffer and followed by ``online_steps`` updates."""
        if online_steps is None:
            online_steps = self.config.online_steps
        state, obs = env_reset(test_frame, self.window, self.scheme,
                               self.initial_value, self.commission)
        steps, values, rewards, actions = [], [], [], []
        last_action = state.weights
        while not state.terminal:
            action = policy_forward(self.params, obs, last_action)
            relative = price_relatives(test_frame, state.t + 1)
            state_values = obs.values
            state, obs, reward = env_step(state, action)
            if self.buffer is not None:
                self.buffer.append(state_values, last_action, relative)
            for _ in range(online_steps):
                self.train_step()
            steps.append(state.t)
            values.append(state.drifted_value)
            rewards.append(reward)
            actions.append(state.weights)
            last_action = action
        return Trajectory(
            steps=np.asarray(steps, dtype=np.int64),
            values=np.asarray(values),
            rewards=np.asarray(rewards),
            actions=np.asarray(actions),
        )
