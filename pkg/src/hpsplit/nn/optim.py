"""SGD and Adam acting in place on a network's flat parameter vector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    first_moment: np.ndarray
    second_moment: np.ndarray
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    step_count: int = 0

    @classmethod
    def create(cls, kind, learning_rate, n_params, **kw):
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        if not learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")
        return cls(kind, float(learning_rate), np.zeros(n_params), np.zeros(n_params), **kw)


def optimizer_step(state: OptimizerState, network, gradient):
    """Apply one update to ``network.params`` in place; returns (state, network)."""
    g = np.asarray(gradient, dtype=float)
    if g.shape != network.params.shape:
        raise ValueError(f"gradient shape {g.shape} != params shape {network.params.shape}")
    if not np.all(np.isfinite(g)):
        raise DivergenceError(f"non-finite gradient at optimizer step {state.step_count + 1}")
    state.step_count += 1
    if state.kind == "sgd":
        network.params -= state.learning_rate * g
        return state, network
    b1, b2 = state.adam_beta1, state.adam_beta2
    m, v = state.first_moment, state.second_moment
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1 ** state.step_count)
    v_hat = v / (1.0 - b2 ** state.step_count)
    network.params -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.adam_eps)
    return state, network
