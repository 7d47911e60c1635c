"""Model definitions: the convolutional denoising autoencoder and the
EDSR-style super-resolution network, plus small debug models."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from restorekit.nn.layers import (Conv2d, Layer, NearestUpsample, PixelShuffle, ReLU, Residual,
                                  Sequential, Shift, Sigmoid, UpsampleSkip, convs,
                                  residual_block)


@dataclass(frozen=True)
class DenoiserConfig:
    channels: tuple[int, ...] = (32, 64, 128)
    kernel_size: int = 3
    kind: str = field(default="denoiser", init=False)


@dataclass(frozen=True)
class SrNetConfig:
    features: int = 32
    blocks: int = 4
    scale: int = 2
    kernel_size: int = 3
    upsample_skip: bool = True
    kind: str = field(default="srnet", init=False)


def build_denoiser(cfg: DenoiserConfig) -> Layer:
    k = cfg.kernel_size
    layers: list[Layer] = []
    prev = 3
    for ch in cfg.channels:
        layers += [Conv2d(prev, ch, k, stride=2), ReLU()]
        prev = ch
    outs = list(cfg.channels[-2::-1]) + [3]
    for ch in outs:
        layers += [NearestUpsample(2), Conv2d(prev, ch, k), ReLU()]
        prev = ch
    layers[-1] = Sigmoid()
    return Sequential(layers)


def _upsampler(features: int, scale: int, k: int) -> list[Layer]:
    if scale == 1:
        return []
    if scale & (scale - 1) == 0:
        stages = [2] * (scale.bit_length() - 1)
    else:
        stages = [scale]
    layers: list[Layer] = []
    for r in stages:
        layers += [Conv2d(features, features * r * r, k), PixelShuffle(r)]
    return layers


def build_srnet(cfg: SrNetConfig) -> Layer:
    f, k = cfg.features, cfg.kernel_size
    body = Residual([residual_block(f, k) for _ in range(cfg.blocks)])
    layers = [Conv2d(3, f, k), body, *_upsampler(f, cfg.scale, k), Conv2d(f, 3, k)]
    if cfg.upsample_skip:
        return Sequential([UpsampleSkip([Shift(-0.5), *layers], cfg.scale)])
    return Sequential([Shift(-0.5), *layers, Shift(0.5)])


def _residual_blocks(layer: Layer):
    if isinstance(layer, Residual) and all(not isinstance(c, Residual) for c in layer.layers):
        yield layer
    for child in layer.children():
        yield from _residual_blocks(child)


def config_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind == "denoiser":
        if "channels" in d:
            d["channels"] = tuple(d["channels"])
        return DenoiserConfig(**d)
    if kind == "srnet":
        return SrNetConfig(**d)
    if kind == "identity":
        return {"kind": "identity"}
    if kind == "conv":
        return {"kind": "conv", **d}
    raise ValueError(f"unknown model kind {kind!r}")


class Model:
    """A network plus the config needed to rebuild it."""

    def __init__(self, config, seed: int = 0):
        if isinstance(config, dict):
            config = config_from_dict(config)
        self.config = config
        kind = self.kind
        if kind == "denoiser":
            self.net = build_denoiser(config)
        elif kind == "srnet":
            self.net = build_srnet(config)
        elif kind == "identity":
            conv = Conv2d(3, 3, 1)
            conv.params["weight"][:, :, 0, 0] = np.eye(3)
            self.net = Sequential([conv])
        elif kind == "conv":
            self.net = Sequential([Conv2d(config["in_ch"], config["out_ch"], config.get("kernel_size", 3),
                                          config.get("stride", 1))])
        if kind != "identity":
            self.init(seed)

    @property
    def kind(self) -> str:
        return self.config["kind"] if isinstance(self.config, dict) else self.config.kind

    @property
    def scale(self) -> int:
        return self.config.scale if self.kind == "srnet" else 1

    @property
    def input_multiple(self) -> int:
        return 2 ** len(self.config.channels) if self.kind == "denoiser" else 1

    def config_dict(self) -> dict:
        if isinstance(self.config, dict):
            return dict(self.config)
        d = asdict(self.config)
        if "channels" in d:
            d["channels"] = list(d["channels"])
        return d

    def init(self, seed: int):
        rng = np.random.default_rng(seed)
        for conv in convs(self.net):
            conv.init(rng)
        # damp each residual branch at init so the skip path dominates early
        for block in _residual_blocks(self.net):
            block.layers[-1].init(rng, scale=0.1)
        if self.kind == "srnet" and self.config.upsample_skip:
            # start close to the plain pixel-replication upscale
            list(convs(self.net))[-1].init(rng, scale=0.1)

    def forward(self, x):
        return self.net.forward(x)

    def backward(self, grad_out):
        return self.net.backward(grad_out)

    def zero_grad(self):
        self.net.zero_grad()

    def named_params(self):
        return list(self.net.named_params())

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [(name, layer.params[key]) for name, layer, key in self.named_params()]

    def gradients(self) -> list[tuple[str, np.ndarray]]:
        return [(name, layer.grads[key]) for name, layer, key in self.named_params()]

    def n_params(self) -> int:
        return sum(p.size for _, p in self.parameters())

    def replica(self) -> "Model":
        twin = object.__new__(Model)
        twin.config = self.config
        twin.net = self.net.replica()
        return twin

    def predict(self, x, batch_size: int = 8) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        outs = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0)
