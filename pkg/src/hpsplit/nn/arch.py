"""Architecture descriptors for the three network families."""
from __future__ import annotations

from dataclasses import dataclass, field

FAMILIES = ("mlp", "cnn", "rnn")
ACTIVATIONS = ("relu", "sigmoid", "tanh")
HEADS = ("linear", "sigmoid")


class ArchError(ValueError):
    """Raised when an architecture descriptor is inconsistent."""


@dataclass(frozen=True)
class CnnFields:
    """Convolutional trunk description.

    ``stages`` is a sequence of ``("conv", kernel, channels)`` and
    ``("pool", kernel, stride)`` tuples applied in order with valid padding.
    Every conv is followed by the network activation. ``fc_hidden`` lists the
    widths of the fully connected layers between the flattened trunk and the
    scalar output.
    """

    stages: tuple[tuple[str, int, int], ...]
    fc_hidden: tuple[int, ...] = (128,)
    dropout: float = 0.0
    image_side: int = 28
    in_channels: int = 1

    def feature_shape(self) -> tuple[int, int, int]:
        """(channels, side, side) after the last stage; raises on collapse."""
        c, side = self.in_channels, self.image_side
        for kind, k, v in self.stages:
            if k < 1 or v < 1:
                raise ArchError(f"stage {(kind, k, v)} has a non-positive size")
            if kind == "conv":
                side = side - k + 1
                c = v
            elif kind == "pool":
                if v > k:
                    raise ArchError(f"pool stride {v} exceeds pool kernel {k}")
                side = (side - k) // v + 1 if side >= k else 0
            else:
                raise ArchError(f"unknown stage kind {kind!r}")
            if side < 1:
                raise ArchError(
                    f"spatial size collapses below 1 at stage {(kind, k, v)}")
        return c, side, side


@dataclass(frozen=True)
class ArchSpec:
    family: str
    input_dim: int
    hidden_size: int = 1
    depth: int = 1
    activation: str = "relu"
    output_head: str = "linear"
    cnn: CnnFields | None = field(default=None)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ArchError(f"unknown family {self.family!r}")
        if self.activation not in ACTIVATIONS:
            raise ArchError(f"unknown activation {self.activation!r}")
        if self.output_head not in HEADS:
            raise ArchError(f"unknown output head {self.output_head!r}")
        for name in ("input_dim", "hidden_size", "depth"):
            if int(getattr(self, name)) < 1:
                raise ArchError(f"{name} must be >= 1")
        if (self.family == "cnn") != (self.cnn is not None):
            raise ArchError("cnn fields must be present iff family == 'cnn'")
        if self.cnn is not None:
            self.cnn.feature_shape()
            expected = self.cnn.in_channels * self.cnn.image_side ** 2
            if self.input_dim != expected:
                raise ArchError(
                    f"cnn input_dim {self.input_dim} != channels*side^2 = {expected}")
            if not 0.0 <= self.cnn.dropout < 1.0:
                raise ArchError("dropout must lie in [0, 1)")


def mlp_arch(input_dim, hidden_size, depth, activation="relu", output_head="linear"):
    return ArchSpec("mlp", input_dim, hidden_size, depth, activation, output_head)


def rnn_arch(window, hidden_size, depth, activation="tanh", output_head="linear"):
    return ArchSpec("rnn", window, hidden_size, depth, activation, output_head)


def cnn_arch(conv_kernel, channels, pool_kernel, pool_stride, *, fc_hidden=128,
             image_side=28, activation="relu", output_head="sigmoid"):
    """Experiment CNN: conv, pool, conv, pool, then one hidden dense layer.

    Both conv layers share the grid's (kernel, channels) pair.
    """
    fields = CnnFields(
        stages=(("conv", conv_kernel, channels), ("pool", pool_kernel, pool_stride),
                ("conv", conv_kernel, channels), ("pool", pool_kernel, pool_stride)),
        fc_hidden=(fc_hidden,),
        image_side=image_side,
    )
    return ArchSpec("cnn", image_side * image_side, fc_hidden, 1, activation,
                    output_head, fields)


def reference_arch(image_side=28, dropout=0.5):
    """AlexNet-style reference classifier used to relabel image data."""
    fields = CnnFields(
        stages=(("conv", 5, 32), ("conv", 3, 64), ("pool", 2, 2),
                ("conv", 3, 96), ("conv", 3, 64), ("conv", 3, 32),
                ("pool", 2, 1)),
        fc_hidden=(512, 128),
        dropout=dropout,
        image_side=image_side,
    )
    return ArchSpec("cnn", image_side * image_side, 512, 2, "relu", "sigmoid", fields)


def mlp_param_count(input_dim, hidden_size, depth):
    """Closed-form d(lambda) for an MLP with equal hidden widths."""
    total, fan_in = 0, input_dim
    for _ in range(depth):
        total += (fan_in + 1) * hidden_size
        fan_in = hidden_size
    return total + hidden_size + 1
