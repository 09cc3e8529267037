"""Convolutional policy with shared per-asset kernels.

Every asset's (close, high, low) window flows through the same two
convolution layers; the previous action's risky entries join as an
extra channel before a 1x1 convolution scores each asset. A learnable
cash bias provides the cash score and a softmax yields the new weights.
Because kernels are shared and convolution runs along time only, assets
never mix: the network is equivariant under asset permutation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .environment import StateTensor

CHECKPOINT_VERSION = 1


class WindowTooSmall(ValueError):
    pass


@dataclass(eq=False)
class PolicyParams:
    """Learnable tensors plus the fixed topology they were built for."""

    conv1_kernels: Tensor  # (c1, 3, k1)
    conv1_bias: Tensor     # (c1,)
    conv2_kernels: Tensor  # (c2, c1, window - k1 + 1)
    conv2_bias: Tensor     # (c2,)
    out_kernels: Tensor    # (1, c2 + 1, 1)
    out_bias: Tensor       # (1,)
    cash_bias: Tensor      # scalar
    n_assets: int
    window: int
    k1: int
    c1: int
    c2: int
    seed: int

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return [
            ("conv1_kernels", self.conv1_kernels),
            ("conv1_bias", self.conv1_bias),
            ("conv2_kernels", self.conv2_kernels),
            ("conv2_bias", self.conv2_bias),
            ("out_kernels", self.out_kernels),
            ("out_bias", self.out_bias),
            ("cash_bias", self.cash_bias),
        ]

    def kernel_tensors(self) -> list[tuple[str, Tensor]]:
        return [(name, t) for name, t in self.named_tensors() if name.endswith("_kernels")]

    def bias_tensors(self) -> list[tuple[str, Tensor]]:
        return [(name, t) for name, t in self.named_tensors() if not name.endswith("_kernels")]

    def zero_grad(self) -> None:
        for _, tensor in self.named_tensors():
            tensor.zero_grad()


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_policy(n_assets: int, window: int, seed: int, k1: int = 3, c1: int = 2, c2: int = 20) -> PolicyParams:
    """Seed-determined parameters: kernels uniform in +-sqrt(6/(fan_in+fan_out)), biases zero."""
    if n_assets < 1:
        raise ValueError(f"need at least one asset, got {n_assets}")
    if window < k1 + 1:
        raise WindowTooSmall(f"window {window} too small for kernel width {k1}")
    k2 = window - k1 + 1
    rng = np.random.default_rng(seed)
    return PolicyParams(
        conv1_kernels=Tensor(_uniform(rng, (c1, 3, k1), 3 * k1, c1 * k1), requires_grad=True),
        conv1_bias=Tensor(np.zeros(c1), requires_grad=True),
        conv2_kernels=Tensor(_uniform(rng, (c2, c1, k2), c1 * k2, c2 * k2), requires_grad=True),
        conv2_bias=Tensor(np.zeros(c2), requires_grad=True),
        out_kernels=Tensor(_uniform(rng, (1, c2 + 1, 1), c2 + 1, 1), requires_grad=True),
        out_bias=Tensor(np.zeros(1), requires_grad=True),
        cash_bias=Tensor(np.zeros(()), requires_grad=True),
        n_assets=n_assets,
        window=window,
        k1=k1,
        c1=c1,
        c2=c2,
        seed=seed,
    )


def forward_batch(params: PolicyParams, states: np.ndarray, last_actions: np.ndarray) -> Tensor:
    """Actions for a batch: states (B, 3, n, t), last_actions (B, n+1) -> Tensor (B, n+1).

    The batch folds into the asset axis, which the convolutions treat
    independently anyway; only the final softmax is per-sample.
    """
    batch, features, n, t = states.shape
    if features != 3 or n != params.n_assets or t != params.window:
        raise ad.ShapeMismatch(
            f"states {states.shape} incompatible with policy (3, {params.n_assets}, {params.window})"
        )
    if last_actions.shape != (batch, n + 1):
        raise ad.ShapeMismatch(f"last_actions {last_actions.shape}, expected {(batch, n + 1)}")

    x = Tensor(np.ascontiguousarray(states.transpose(1, 0, 2, 3)).reshape(3, batch * n, t))
    h = ad.relu(ad.conv1d_over_time(x, params.conv1_kernels, params.conv1_bias))
    h = ad.relu(ad.conv1d_over_time(h, params.conv2_kernels, params.conv2_bias))
    risky_memory = Tensor(np.ascontiguousarray(last_actions[:, 1:]).reshape(1, batch * n, 1))
    h = ad.concat([h, risky_memory], axis=0)
    scores = ad.reshape(ad.conv1d_over_time(h, params.out_kernels, params.out_bias), (batch, n))
    cash = ad.expand_scalar(params.cash_bias, (batch, 1))
    return ad.softmax(ad.concat([cash, scores], axis=1), axis=1)


def _forward_values(params: PolicyParams, states: np.ndarray, last_actions: np.ndarray) -> np.ndarray:
    """Raw-numpy twin of forward_batch: identical kernel calls in identical
    order, so outputs are bitwise equal, without graph bookkeeping."""
    batch, _, n, t = states.shape
    x = np.ascontiguousarray(states.transpose(1, 0, 2, 3)).reshape(3, batch * n, t)
    h = np.maximum(ad._conv1d_values(x, params.conv1_kernels.data, params.conv1_bias.data), 0.0)
    h = np.maximum(ad._conv1d_values(h, params.conv2_kernels.data, params.conv2_bias.data), 0.0)
    memory = np.ascontiguousarray(last_actions[:, 1:]).reshape(1, batch * n, 1)
    h = np.concatenate([h, memory], axis=0)
    scores = ad._conv1d_values(h, params.out_kernels.data, params.out_bias.data).reshape(batch, n)
    cash = np.full((batch, 1), float(params.cash_bias.data))
    logits = np.concatenate([cash, scores], axis=1)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exped = np.exp(shifted)
    return exped / exped.sum(axis=1, keepdims=True)


def policy_forward(params: PolicyParams, state: StateTensor | np.ndarray, last_action: np.ndarray) -> np.ndarray:
    """Pure inference for one state: returns the (n+1,) action."""
    values = state.values if isinstance(state, StateTensor) else np.asarray(state)
    last_action = np.asarray(last_action)
    if values.shape != (3, params.n_assets, params.window) or last_action.shape != (params.n_assets + 1,):
        raise ad.ShapeMismatch(
            f"state {values.shape} / last_action {last_action.shape} incompatible with "
            f"policy (3, {params.n_assets}, {params.window})"
        )
    return _forward_values(params, values[None], last_action[None])[0].copy()


def clone_params(params: PolicyParams) -> PolicyParams:
    """Deep copy of the parameter arrays (gradients are not copied)."""
    return PolicyParams(
        conv1_kernels=Tensor(params.conv1_kernels.data.copy(), requires_grad=True),
        conv1_bias=Tensor(params.conv1_bias.data.copy(), requires_grad=True),
        conv2_kernels=Tensor(params.conv2_kernels.data.copy(), requires_grad=True),
        conv2_bias=Tensor(params.conv2_bias.data.copy(), requires_grad=True),
        out_kernels=Tensor(params.out_kernels.data.copy(), requires_grad=True),
        out_bias=Tensor(params.out_bias.data.copy(), requires_grad=True),
        cash_bias=Tensor(params.cash_bias.data.copy(), requires_grad=True),
        n_assets=params.n_assets,
        window=params.window,
        k1=params.k1,
        c1=params.c1,
        c2=params.c2,
        seed=params.seed,
    )


def save_checkpoint(params: PolicyParams, path) -> None:
    """Write parameters as an .npz of named blocks plus a JSON meta header."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "n_assets": params.n_assets,
        "window": params.window,
        "k1": params.k1,
        "c1": params.c1,
        "c2": params.c2,
        "seed": params.seed,
    }
    arrays = {name: tensor.data for name, tensor in params.named_tensors()}
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> PolicyParams:
    with np.load(path) as archive:
        meta = json.loads(archive["meta"].tobytes().decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        return PolicyParams(
            conv1_kernels=Tensor(archive["conv1_kernels"], requires_grad=True),
            conv1_bias=Tensor(archive["conv1_bias"], requires_grad=True),
            conv2_kernels=Tensor(archive["conv2_kernels"], requires_grad=True),
            conv2_bias=Tensor(archive["conv2_bias"], requires_grad=True),
            out_kernels=Tensor(archive["out_kernels"], requires_grad=True),
            out_bias=Tensor(archive["out_bias"], requires_grad=True),
            cash_bias=Tensor(archive["cash_bias"], requires_grad=True),
            n_assets=meta["n_assets"],
            window=meta["window"],
            k1=meta["k1"],
            c1=meta["c1"],
            c2=meta["c2"],
            seed=meta["seed"],
        )
