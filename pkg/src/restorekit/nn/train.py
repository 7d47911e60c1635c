"""Minibatch MSE training with SGD or Adam."""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from restorekit.nn.models import Model


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    loss: str = "mse"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    workers: int = 1

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss != "mse":
            raise ValueError("only the mse loss is supported")
        if not self.lr >= 0:
            raise ValueError("learning rate must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1 or self.workers < 1:
            raise ValueError("epochs, batch_size and workers must be >= 1")


@dataclass
class TrainLog:
    seed: int
    config: dict
    model: dict
    epochs: list[dict] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [e["train_loss"] for e in self.epochs]

    def deterministic_view(self) -> list[dict]:
        """Epoch records without wall-clock fields."""
        return [{k: v for k, v in e.items() if k != "seconds"} for e in self.epochs]

    def to_jsonl(self) -> str:
        head = {"seed": self.seed, "config": self.config, "model": self.model}
        lines = [json.dumps(head, sort_keys=True)]
        lines += [json.dumps(e, sort_keys=True) for e in self.epochs]
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())


class SGD:
    def __init__(self, cfg: TrainConfig):
        self.lr = cfg.lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        c = self.cfg
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1 - c.beta1 ** self.t
        bc2 = 1 - c.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            p -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def mse_loss(pred, target):
    d = pred - target
    return float(np.mean(d * d)), 2.0 * d / d.size


def _check_pairs(model: Model, inputs, targets):
    if len(inputs) == 0:
        raise TrainingError("empty dataset")
    if len(inputs) != len(targets):
        raise TrainingError(f"{len(inputs)} inputs but {len(targets)} targets")
    n, c, h, w = inputs.shape
    r = model.scale
    if targets.shape != (n, 3, h * r, w * r):
        raise TrainingError(f"target shape {targets.shape} does not match input {inputs.shape} at scale {r}")


def _batch_grad(model: Model, xb, yb, workers, pool):
    """Loss and parameter gradients for one minibatch, optionally sharded."""
    if workers == 1 or len(xb) < 2:
        model.zero_grad()
        pred = model.forward(xb)
        loss, g = mse_loss(pred, yb)
        model.backward(g)
        return loss, [gr for _, gr in model.gradients()]

    shards = np.array_split(np.arange(len(xb)), min(workers, len(xb)))
    total = yb.size

    def work(idx):
        twin = model.replica()
        twin.zero_grad()
        pred = twin.forward(xb[idx])
        d = pred - yb[idx]
        twin.backward(2.0 * d / total)
        return float(np.sum(d * d)), [gr for _, gr in twin.gradients()]

    results = list(pool.map(work, shards))
    loss = sum(r[0] for r in results) / total
    grads = [sum(parts) for parts in zip(*(r[1] for r in results))]
    return loss, grads


def evaluate_loss(model: Model, inputs, targets, batch_size=16) -> float:
    total = 0.0
    for i in range(0, len(inputs), batch_size):
        d = model.forward(inputs[i:i + batch_size]) - targets[i:i + batch_size]
        total += float(np.sum(d * d))
    return total / targets.size


def train(model: Model, inputs, targets, cfg: TrainConfig, val=None, log_path=None, progress=None) -> TrainLog:
    """Fit ``model`` in place and return the per-epoch loss trace.

    ``val`` is an optional ``(inputs, targets)`` pair evaluated after every
    epoch.  With ``cfg.workers > 1`` minibatches are sharded over threads;
    the reduction order then makes results only approximately reproducible.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    _check_pairs(model, inputs, targets)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg) if cfg.optimizer == "adam" else SGD(cfg)
    log = TrainLog(cfg.seed, asdict(cfg), model.config_dict())
    params = [p for _, p in model.parameters()]
    n = len(inputs)
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            order = rng.permutation(n)
            seen, total = 0, 0.0
            for start in range(0, n, cfg.batch_size):
                idx = np.sort(order[start:start + cfg.batch_size])
                loss, grads = _batch_grad(model, inputs[idx], targets[idx], cfg.workers, pool)
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch starting {start}; "
                                        f"try a smaller learning rate (lr={cfg.lr})")
                if cfg.lr > 0:
                    opt.step(params, grads)
                total += loss * len(idx)
                seen += len(idx)
            record = {"epoch": epoch + 1, "train_loss": total / seen}
            if val is not None:
                record["val_loss"] = evaluate_loss(model, *val, batch_size=cfg.batch_size)
            record["seconds"] = time.perf_counter() - t0
            log.epochs.append(record)
            if progress is not None:
                progress(record)
    finally:
        if pool is not None:
            pool.shutdown()
    if log_path is not None:
        log.write(log_path)
    return log
