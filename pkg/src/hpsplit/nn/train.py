"""Seeded mini-batch training."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arch import ArchSpec
from .network import Network, init_network, loss_and_grad
from .optim import DivergenceError, OptimizerState, optimizer_step

# spawn_key roles used to split TrainConfig.rng_seed
INIT_STREAM, SHUFFLE_STREAM = 0, 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    loss: str = "mse"
    rng_seed: int = 0
    learning_rate: float = 1e-3
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.loss not in ("mse", "ce"):
            raise ValueError(f"unknown loss {self.loss!r}")


def stream(seed, role):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(role,)))


def initial_network(arch: ArchSpec, config: TrainConfig) -> Network:
    """The network ``train`` starts from for this config."""
    return init_network(arch, stream(config.rng_seed, INIT_STREAM))


def train(arch: ArchSpec, config: TrainConfig, train_set) -> Network:
    """Train from the seeded initialization; returns final-epoch parameters.

    ``train_set`` is anything with ``inputs`` and ``targets`` arrays. Each
    epoch reshuffles with the seeded stream and keeps the final short batch.
    ``history`` holds the mean training loss of each epoch.
    """
    x = np.asarray(train_set.inputs, dtype=float)
    y = np.asarray(train_set.targets, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    net = initial_network(arch, config)
    shuffle_rng = stream(config.rng_seed, SHUFFLE_STREAM)
    state = OptimizerState.create(config.optimizer, config.learning_rate, net.n_params)
    bs = min(config.batch_size, n)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, grad = loss_and_grad(net, x[idx], y[idx], config.loss,
                                       train=True, rng=shuffle_rng)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            try:
                optimizer_step(state, net, grad)
            except DivergenceError as exc:
                raise DivergenceError(f"{exc} (epoch {epoch})") from None
            total += loss * idx.size
        net.history.append(total / n)
    return net
