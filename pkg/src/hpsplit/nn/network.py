"""Flat-parameter networks: construction, evaluation and exact gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arch import ArchSpec
from .layers import (Activation, Conv2D, Dense, Dropout, LastStep, MaxPool2D,
                     Recurrent, Reshape, SigmoidHead)

LOSSES = ("mse", "ce")


class InputError(ValueError):
    """Raised for inputs whose shape or values do not fit the network."""


def build_layers(arch: ArchSpec):
    act = arch.activation
    layers = []
    if arch.family == "mlp":
        fan_in = arch.input_dim
        for i in range(arch.depth):
            layers += [Dense(f"hidden{i}", fan_in, arch.hidden_size), Activation(act)]
            fan_in = arch.hidden_size
        layers.append(Dense("output", fan_in, 1))
    elif arch.family == "rnn":
        layers.append(Reshape((arch.input_dim, 1)))
        n_in = 1
        for i in range(arch.depth):
            layers.append(Recurrent(f"rnn{i}", n_in, arch.hidden_size, act))
            n_in = arch.hidden_size
        layers += [LastStep(), Dense("output", n_in, 1)]
    else:
        cf = arch.cnn
        layers.append(Reshape((cf.in_channels, cf.image_side, cf.image_side)))
        c = cf.in_channels
        n_conv = 0
        for kind, k, v in cf.stages:
            if kind == "conv":
                layers += [Conv2D(f"conv{n_conv}", c, v, k), Activation(act)]
                c = v
                n_conv += 1
            else:
                layers.append(MaxPool2D(k, v))
        fc, side, _ = cf.feature_shape()
        fan_in = fc * side * side
        layers.append(Reshape((fan_in,)))
        for i, width in enumerate(cf.fc_hidden):
            layers += [Dense(f"fc{i}", fan_in, width), Activation(act)]
            if cf.dropout > 0:
                layers.append(Dropout(cf.dropout))
            fan_in = width
        layers.append(Dense("output", fan_in, 1))
    if arch.output_head == "sigmoid":
        layers.append(SigmoidHead())
    return layers


def _layout(layers):
    layout, offset = {}, 0
    for layer in layers:
        for pname, shape, _, _ in layer.params:
            size = int(np.prod(shape))
            layout[f"{layer.name}.{pname}"] = (slice(offset, offset + size), shape)
            offset += size
    return layout, offset


@dataclass
class Network:
    """A network of fixed architecture holding its parameters as one vector.

    ``layout`` maps ``"<layer>.<param>"`` to ``(slice, shape)`` within
    ``params``; the slices are disjoint, ordered and cover the vector.
    """

    arch: ArchSpec
    params: np.ndarray
    layers: list = field(repr=False, default=None)
    layout: dict = field(repr=False, default=None)
    history: list = field(repr=False, default_factory=list)

    def __post_init__(self):
        if self.layers is None:
            self.layers = build_layers(self.arch)
        layout, size = _layout(self.layers)
        if self.layout is None:
            self.layout = layout
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (size,):
            raise InputError(f"expected {size} parameters, got {self.params.shape}")

    @property
    def n_params(self):
        return self.params.size

    def copy(self):
        return Network(self.arch, self.params.copy(), self.layers, self.layout,
                       list(self.history))

    def view(self, name, vector=None):
        """Reshaped view of one named parameter block of ``vector``."""
        sl, shape = self.layout[name]
        vec = self.params if vector is None else vector
        return vec[sl].reshape(shape)

    def _views(self, vector):
        out = []
        for layer in self.layers:
            out.append({pname: self.view(f"{layer.name}.{pname}", vector)
                        for pname, *_ in layer.params})
        return out


def init_network(arch: ArchSpec, rng: np.random.Generator) -> Network:
    """Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases."""
    layers = build_layers(arch)
    layout, size = _layout(layers)
    params = np.zeros(size)
    for layer in layers:
        for pname, shape, fan_in, fan_out in layer.params:
            if fan_in == 0:
                continue
            sl, _ = layout[f"{layer.name}.{pname}"]
            s = np.sqrt(6.0 / (fan_in + fan_out))
            params[sl] = rng.uniform(-s, s, size=sl.stop - sl.start)
    return Network(arch, params, layers, layout)


def _check_inputs(net, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.arch.input_dim:
        raise InputError(
            f"input of shape {x.shape[1:]} does not match input_dim {net.arch.input_dim}")
    return x


def _run_forward(net, x, train=False, rng=None):
    views = net._views(net.params)
    caches = []
    for layer, p in zip(net.layers, views):
        x, cache = layer.forward(p, x, train, rng)
        caches.append(cache)
    return x[:, 0], views, caches


def predict(net: Network, inputs) -> np.ndarray:
    """Evaluate the network on a batch of row inputs (inference mode)."""
    out, _, _ = _run_forward(net, _check_inputs(net, inputs))
    return out


def forward(net: Network, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError("forward takes a single input vector")
    return float(predict(net, x[None, :])[0])


def _loss_terms(kind, out, y):
    if kind == "mse":
        r = out - y
        return float(np.mean(r * r)), 2.0 * r / r.size
    if kind == "ce":
        loss = -np.mean(y * np.log(out) + (1.0 - y) * np.log1p(-out))
        return float(loss), (out - y) / (out * (1.0 - out)) / out.size
    raise InputError(f"unknown loss {kind!r}")


def loss_and_grad(net: Network, inputs, targets, loss="mse", train=False, rng=None):
    """Mean loss over the batch and its exact gradient w.r.t. ``net.params``."""
    x = _check_inputs(net, inputs)
    y = np.asarray(targets, dtype=float)
    if y.shape != (x.shape[0],):
        raise InputError("targets must be a vector with one entry per input row")
    if loss == "ce":
        if net.arch.output_head != "sigmoid":
            raise InputError("cross-entropy requires the sigmoid output head")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise InputError("cross-entropy targets must be 0 or 1")
    out, views, caches = _run_forward(net, x, train, rng)
    value, dout = _loss_terms(loss, out, y)
    grad = np.zeros_like(net.params)
    gviews = net._views(grad)
    d = dout[:, None]
    for layer, p, g, cache in zip(reversed(net.layers), reversed(views),
                                  reversed(gviews), reversed(caches)):
        d = layer.backward(p, g, d, cache)
    return value, grad


def backward(net: Network, x, target, loss="mse") -> np.ndarray:
    """Gradient of the single-sample loss at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError("backward takes a single input vector")
    return loss_and_grad(net, x[None, :], np.array([float(target)]), loss)[1]


def output_grad(net: Network, x) -> np.ndarray:
    """Gradient of the raw network output f(x, w) w.r.t. w."""
    x = _check_inputs(net, np.asarray(x, dtype=float)[None, :])
    _, views, caches = _run_forward(net, x)
    grad = np.zeros_like(net.params)
    gviews = net._views(grad)
    d = np.ones((1, 1))
    for layer, p, g, cache in zip(reversed(net.layers), reversed(views),
                                  reversed(gviews), reversed(caches)):
        d = layer.backward(p, g, d, cache)
    return grad
