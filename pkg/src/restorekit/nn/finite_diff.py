"""Central finite-difference verification of analytic gradients.

The scalar probe loss is ``sum(out * R)`` for a fixed random ``R``.  Checking
every parameter of a full model one forward pass at a time is too slow, so
the perturbed copies of a parameter tensor are evaluated together: layers
upstream of the perturbed conv run once at batch size 1, the conv fans out
into one batch item per perturbation (recomputing the affected output
channel with the perturbed filter), and numpy broadcasting carries the batch
through the rest of the network, including residual additions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from restorekit.nn import functional as F
from restorekit.nn.layers import Conv2d, Layer, ReLU
from restorekit.nn.models import Model


@dataclass
class GradcheckReport:
    # per tensor: ||analytic - numeric|| / max(||analytic||, ||numeric||)
    relative: dict[str, float] = field(default_factory=dict)
    # per tensor: max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
    entrywise: dict[str, float] = field(default_factory=dict)
    checked: int = 0

    @property
    def max_relative_error(self) -> float:
        return max(self.relative.values(), default=0.0)

    @property
    def max_entrywise_error(self) -> float:
        return max(self.entrywise.values(), default=0.0)

    def to_json(self) -> dict:
        return {
            "max_relative_error": self.max_relative_error,
            "max_entrywise_error": self.max_entrywise_error,
            "checked": self.checked,
            "tensors": {k: {"relative": self.relative[k], "entrywise": self.entrywise[k]} for k in self.relative},
        }


def _errors(a, n, floor):
    a, n = a.ravel(), n.ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    rel = 0.0 if denom == 0 else float(np.linalg.norm(a - n) / denom)
    ent = float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))
    return rel, ent


def _fanout_conv(conv: Conv2d, key: str, idx: np.ndarray, h: float):
    """Forward replacement for ``conv`` producing ``2 * len(idx)`` outputs:
    entries ``idx`` of ``conv.params[key]`` nudged by ``+h`` then by ``-h``."""
    weight, bias = conv.params["weight"], conv.params["bias"]
    f_out = weight.shape[0]
    per_filter = weight[0].size
    p = len(idx)
    signs = np.concatenate([np.full(p, h), np.full(p, -h)])
    idx2 = np.concatenate([idx, idx])
    if key == "weight":
        filt, pos = np.divmod(idx2, per_filter)
    else:
        filt, pos = idx2, None

    def forward(x):
        if len(x) != 1:
            raise ValueError("fan-out conv expects an unexpanded batch of one")
        out, cols = F.conv2d_forward(x, weight, bias, conv.stride, conv.padding, return_cols=True)
        rows = weight.reshape(f_out, per_filter)[filt].copy()
        b = bias[filt].copy()
        if pos is None:
            b += signs
        else:
            rows[np.arange(2 * p), pos] += signs
        fan = np.repeat(out.reshape(1, f_out, -1), 2 * p, axis=0)
        fan[np.arange(2 * p), filt] = rows @ cols + b[:, None]
        return fan.reshape((2 * p,) + out.shape[1:])

    return forward


def _param_fd(layer: Layer, x1, probe1, owner, key, h, chunk):
    base = owner.params[key]
    numeric = np.empty(base.size)
    for start in range(0, base.size, chunk):
        idx = np.arange(start, min(start + chunk, base.size))
        p = len(idx)
        owner.forward = _fanout_conv(owner, key, idx, h)
        try:
            out = layer.forward(x1)
        finally:
            del owner.forward
        losses = (out * probe1).reshape(2 * p, -1).sum(axis=1)
        numeric[idx] = (losses[:p] - losses[p:]) / (2 * h)
    return numeric


def _relus(layer: Layer):
    if isinstance(layer, ReLU):
        yield layer
    for child in layer.children():
        yield from _relus(child)


def kink_margin(layer, x) -> float:
    """Smallest ``|z|`` over every ReLU input at ``x``.

    Central differences are only meaningful where the network is smooth; a
    ReLU input within about ``h`` of zero lets a perturbation cross the kink.
    """
    if isinstance(layer, Model):
        layer = layer.net
    layer.forward(np.asarray(x, dtype=np.float64))
    return min((float(np.min(np.abs(r._x))) for r in _relus(layer)), default=np.inf)


def smooth_probe(layer, shape, margin: float = 1e-4, seed: int = 0, tries: int = 100):
    """First seeded uniform input of ``shape`` whose ReLU inputs all keep
    ``margin`` away from zero; returns ``(x, seed_used)``."""
    for k in range(tries):
        x = np.random.default_rng(seed + k).random(shape)
        if kink_margin(layer, x) >= margin:
            return x, seed + k
    raise ValueError(f"no probe with kink margin {margin} in {tries} draws")


def gradcheck(layer, x, h: float = 1e-5, chunk: int = 256, seed: int = 0, floor: float = 1e-6,
              check_input: bool = True) -> GradcheckReport:
    """Compare backprop gradients of ``layer`` (or a :class:`Model`) at ``x``
    against central differences for every parameter entry and, optionally,
    every input entry."""
    if isinstance(layer, Model):
        layer = layer.net
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    probe = rng.standard_normal(layer.forward(x).shape)
    layer.zero_grad()
    layer.forward(x)
    grad_x = layer.backward(probe)
    report = GradcheckReport()

    for name, owner, key in list(layer.named_params()):
        if not isinstance(owner, Conv2d):
            raise TypeError(f"gradcheck only knows how to perturb conv parameters, not {name}")
        analytic = owner.grads[key].copy()
        # the probe loss is a sum over batch items, so its FD is too
        numeric = sum(_param_fd(layer, x[i:i + 1], probe[i:i + 1], owner, key, h, chunk)
                      for i in range(len(x)))
        report.relative[name], report.entrywise[name] = _errors(analytic, numeric, floor)
        report.checked += analytic.size

    if check_input:
        flat = x.reshape(-1)
        numeric = np.empty(x.size)
        for start in range(0, x.size, chunk):
            idx = np.arange(start, min(start + chunk, x.size))
            p = len(idx)
            xs = np.repeat(flat[None], 2 * p, axis=0)
            xs[np.arange(p), idx] += h
            xs[p + np.arange(p), idx] -= h
            xs = xs.reshape((2 * p * len(x),) + x.shape[1:])
            out = layer.forward(xs)
            losses = (out * np.tile(probe, (2 * p, 1, 1, 1))).reshape(2 * p, -1).sum(axis=1)
            numeric[idx] = (losses[:p] - losses[p:]) / (2 * h)
        report.relative["input"], report.entrywise["input"] = _errors(grad_x, numeric, floor)
        report.checked += x.size
    return report
