"""Layer primitives with hand-derived backward passes.

Layers are stateless: parameters arrive as a dict of array views into the
network's flat parameter vector, and ``forward`` returns the cache that
``backward`` needs. This keeps a frozen network safe to evaluate from
several threads at once.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Keeps the sigmoid head strictly inside (0, 1) in float64.
HEAD_EPS = 1e-12


def sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Layer:
    name = ""
    # (param name, shape, fan_in, fan_out); fan_in == 0 marks a bias.
    params: tuple = ()

    def forward(self, p, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, p, g, dy, cache):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, name, n_in, n_out):
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        self.params = (("W", (n_in, n_out), n_in, n_out), ("b", (n_out,), 0, 0))

    def forward(self, p, x, train=False, rng=None):
        return x @ p["W"] + p["b"], x

    def backward(self, p, g, dy, cache):
        g["W"] += cache.T @ dy
        g["b"] += dy.sum(axis=0)
        return dy @ p["W"].T


class Activation(Layer):
    def __init__(self, kind):
        self.kind = kind
        self.name = kind

    def forward(self, p, x, train=False, rng=None):
        if self.kind == "relu":
            mask = x > 0
            return x * mask, mask
        if self.kind == "sigmoid":
            y = sigmoid(x)
            return y, y
        y = np.tanh(x)
        return y, y

    def backward(self, p, g, dy, cache):
        if self.kind == "relu":
            return dy * cache
        if self.kind == "sigmoid":
            return dy * cache * (1.0 - cache)
        return dy * (1.0 - cache * cache)


class SigmoidHead(Layer):
    """Sigmoid output clamped to [HEAD_EPS, 1 - HEAD_EPS]."""

    name = "sigmoid_head"

    def forward(self, p, x, train=False, rng=None):
        y = np.clip(sigmoid(x), HEAD_EPS, 1.0 - HEAD_EPS)
        return y, y

    def backward(self, p, g, dy, cache):
        return dy * cache * (1.0 - cache)


class Dropout(Layer):
    def __init__(self, rate):
        self.rate = rate
        self.name = f"dropout{rate}"

    def forward(self, p, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            return x, None
        keep = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * keep, keep

    def backward(self, p, g, dy, cache):
        return dy if cache is None else dy * cache


class Reshape(Layer):
    def __init__(self, shape):
        self.shape = tuple(shape)
        self.name = "reshape"

    def forward(self, p, x, train=False, rng=None):
        return x.reshape((x.shape[0],) + self.shape), x.shape

    def backward(self, p, g, dy, cache):
        return dy.reshape(cache)


class Conv2D(Layer):
    """Valid-padding, stride-1 convolution via im2col."""

    def __init__(self, name, c_in, c_out, kernel):
        self.name = name
        self.c_in, self.c_out, self.k = c_in, c_out, kernel
        fan_in, fan_out = c_in * kernel * kernel, c_out * kernel * kernel
        self.params = (("W", (c_out, c_in, kernel, kernel), fan_in, fan_out),
                       ("b", (c_out,), 0, 0))

    def forward(self, p, x, train=False, rng=None):
        b, c, h, w = x.shape
        k = self.k
        ho, wo = h - k + 1, w - k + 1
        win = sliding_window_view(x, (k, k), axis=(2, 3))  # (B, C, Ho, Wo, k, k)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)
        wm = p["W"].reshape(self.c_out, -1)
        out = cols @ wm.T + p["b"]
        out = out.reshape(b, ho, wo, self.c_out).transpose(0, 3, 1, 2)
        return out, (cols, x.shape)

    def backward(self, p, g, dy, cache):
        cols, (b, c, h, w) = cache
        k = self.k
        ho, wo = h - k + 1, w - k + 1
        dyr = dy.transpose(0, 2, 3, 1).reshape(-1, self.c_out)
        g["W"] += (dyr.T @ cols).reshape(g["W"].shape)
        g["b"] += dyr.sum(axis=0)
        dcols = (dyr @ p["W"].reshape(self.c_out, -1)).reshape(b, ho, wo, c, k, k)
        dx = np.zeros((b, c, h, w))
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dx


class MaxPool2D(Layer):
    def __init__(self, kernel, stride):
        self.k, self.s = kernel, stride
        self.name = f"pool{kernel}s{stride}"

    def forward(self, p, x, train=False, rng=None):
        k, s = self.k, self.s
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        flat = win.reshape(win.shape[:4] + (k * k,))
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        return out, (idx, x.shape)

    def backward(self, p, g, dy, cache):
        idx, shape = cache
        k, s = self.k, self.s
        ho, wo = idx.shape[2], idx.shape[3]
        dx = np.zeros(shape)
        for q in range(k * k):
            i, j = divmod(q, k)
            dx[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += dy * (idx == q)
        return dx


class Recurrent(Layer):
    """Elman layer: h_t = act(U x_t + W h_{t-1} + b), h_0 = 0.

    Input and output are (batch, time, features); the full state sequence
    is returned so layers can be stacked.
    """

    def __init__(self, name, n_in, n_state, activation):
        self.name = name
        self.n_in, self.n_state = n_in, n_state
        self.act = Activation(activation)
        self.params = (("U", (n_state, n_in), n_in, n_state),
                       ("W", (n_state, n_state), n_state, n_state),
                       ("b", (n_state,), 0, 0))

    def forward(self, p, x, train=False, rng=None):
        b, t_len, _ = x.shape
        u, w, bias = p["U"], p["W"], p["b"]
        hs = np.zeros((b, t_len, self.n_state))
        acts = []
        h = np.zeros((b, self.n_state))
        for t in range(t_len):
            c = x[:, t] @ u.T + h @ w.T + bias
            h, a_cache = self.act.forward(None, c)
            hs[:, t] = h
            acts.append(a_cache)
        return hs, (x, hs, acts)

    def backward(self, p, g, dy, cache):
        x, hs, acts = cache
        b, t_len, _ = x.shape
        u, w = p["U"], p["W"]
        dx = np.zeros_like(x)
        dh_next = np.zeros((b, self.n_state))
        for t in range(t_len - 1, -1, -1):
            dc = self.act.backward(None, None, dy[:, t] + dh_next, acts[t])
            g["U"] += dc.T @ x[:, t]
            if t > 0:
                g["W"] += dc.T @ hs[:, t - 1]
            g["b"] += dc.sum(axis=0)
            dx[:, t] = dc @ u
            dh_next = dc @ w
        return dx


class LastStep(Layer):
    name = "last_step"

    def forward(self, p, x, train=False, rng=None):
        return x[:, -1], x.shape

    def backward(self, p, g, dy, cache):
        dx = np.zeros(cache)
        dx[:, -1] = dy
        return dx
