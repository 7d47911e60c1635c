"""Layers with cached forward state and hand-written backward passes.

Every layer maps a ``(N, C, H, W)`` batch to another and treats batch items
independently.  ``backward`` consumes the gradient of the loss w.r.t. the
layer output, accumulates parameter gradients into ``grads`` and returns the
gradient w.r.t. the input.
"""
from __future__ import annotations

import copy

import numpy as np

from restorekit.nn import functional as F


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def children(self) -> list["Layer"]:
        return []

    def named_params(self, prefix=""):
        """``(name, layer, key)`` triples in declaration order."""
        for key in self.params:
            yield prefix + key, self, key
        for i, child in enumerate(self.children()):
            yield from child.named_params(f"{prefix}{i}.")

    def zero_grad(self):
        for key, p in self.params.items():
            self.grads[key] = np.zeros_like(p)
        for child in self.children():
            child.zero_grad()

    def replica(self) -> "Layer":
        """Copy that shares parameter arrays but has its own caches and grads."""
        twin = copy.copy(self)
        twin.params = dict(self.params)
        twin.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        if hasattr(self, "layers"):
            twin.layers = [layer.replica() for layer in self.layers]
        return twin


class Conv2d(Layer):
    def __init__(self, in_ch, out_ch, kernel_size=3, stride=1, padding=None):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError(f"conv kernel size must be odd, got {kernel_size}")
        if stride < 1:
            raise ValueError(f"conv stride must be >= 1, got {stride}")
        self.in_ch, self.out_ch, self.kernel_size, self.stride = in_ch, out_ch, kernel_size, stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.params["weight"] = np.zeros((out_ch, in_ch, kernel_size, kernel_size))
        self.params["bias"] = np.zeros(out_ch)
        self.zero_grad()

    def init(self, rng, scale=1.0):
        """Kaiming-normal (fan-in) weights, zero bias."""
        fan_in = self.in_ch * self.kernel_size ** 2
        self.params["weight"][...] = rng.standard_normal(self.params["weight"].shape) * (scale * np.sqrt(2.0 / fan_in))
        self.params["bias"][...] = 0.0

    def forward(self, x):
        self._x = x
        out, self._cols = F.conv2d_forward(x, self.params["weight"], self.params["bias"],
                                           self.stride, self.padding, return_cols=True)
        return out

    def backward(self, grad_out):
        gx, gw, gb = F.conv2d_backward(self._x, self.params["weight"], grad_out,
                                       self.stride, self.padding, cols=self._cols)
        self.grads["weight"] += gw
        self.grads["bias"] += gb
        return gx


class ReLU(Layer):
    def forward(self, x):
        self._x = x
        return F.relu_forward(x)

    def backward(self, grad_out):
        return F.relu_backward(self._x, grad_out)


class Sigmoid(Layer):
    def forward(self, x):
        self._y = F.sigmoid_forward(x)
        return self._y

    def backward(self, grad_out):
        return F.sigmoid_backward(self._y, grad_out)


class NearestUpsample(Layer):
    def __init__(self, factor=2):
        super().__init__()
        self.factor = factor

    def forward(self, x):
        return F.nearest_upsample_forward(x, self.factor)

    def backward(self, grad_out):
        return F.nearest_upsample_backward(grad_out, self.factor)


class PixelShuffle(Layer):
    def __init__(self, factor=2):
        super().__init__()
        self.factor = factor

    def forward(self, x):
        return F.pixel_shuffle_forward(x, self.factor)

    def backward(self, grad_out):
        return F.pixel_shuffle_backward(grad_out, self.factor)


class Shift(Layer):
    """Adds a fixed constant (input/output mean shift)."""

    def __init__(self, value):
        super().__init__()
        self.value = value

    def forward(self, x):
        return x + self.value

    def backward(self, grad_out):
        return grad_out


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out


class Residual(Sequential):
    """``y = x + body(x)``; the body must preserve shape."""

    def forward(self, x):
        return x + super().forward(x)

    def backward(self, grad_out):
        return grad_out + super().backward(grad_out)


class UpsampleSkip(Sequential):
    """``y = body(x) + nearest_upsample(x)``: the body only learns the detail
    missing from a plain pixel-replication upscale."""

    def __init__(self, layers, factor):
        super().__init__(layers)
        self.factor = factor

    def forward(self, x):
        return super().forward(x) + F.nearest_upsample_forward(x, self.factor)

    def backward(self, grad_out):
        return super().backward(grad_out) + F.nearest_upsample_backward(grad_out, self.factor)


def residual_block(features, kernel_size=3):
    """conv-relu-conv with an identity skip and no normalization."""
    return Residual([Conv2d(features, features, kernel_size), ReLU(), Conv2d(features, features, kernel_size)])


def convs(layer: Layer):
    if isinstance(layer, Conv2d):
        yield layer
    for child in layer.children():
        yield from convs(child)
