"""Minimal Adam trainer for the full-precision baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset, random_crop_flip
from ..errors import DomainError, TrainingError
from .layers import softmax_cross_entropy
from .network import (
    NetworkDef,
    WeightStore,
    backward,
    copy_weights,
    evaluate_accuracy,
    forward_train,
    init_weights,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 128
    weight_decay: float = 1e-4
    seed: int = 0
    val_fraction: float = 0.1
    augment: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise DomainError("epochs must be nonnegative")
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise DomainError("learning rate and batch size must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise DomainError("val_fraction must lie in [0, 1)")


@dataclass
class TrainResult:
    weights: WeightStore
    best_epoch: int  # 0 means the initialisation was kept
    best_val_accuracy: float | None
    history: list = field(default_factory=list)


class Adam:
    def __init__(self, params: WeightStore, lr, beta1, beta2, eps, weight_decay):
        self.lr, self.beta1, self.beta2, self.eps, self.wd = lr, beta1, beta2, eps, weight_decay
        self.m = {i: {k: np.zeros_like(v) for k, v in p.items()} for i, p in params.items()}
        self.v = {i: {k: np.zeros_like(v) for k, v in p.items()} for i, p in params.items()}
        self.t = 0

    def step(self, params: WeightStore, grads: WeightStore):
        self.t += 1
        bc1 = 1 - self.beta1 ** self.t
        bc2 = 1 - self.beta2 ** self.t
        for i, p in params.items():
            for k, value in p.items():
                g = grads[i][k]
                if self.wd:
                    g = g + self.wd * value
                m, v = self.m[i][k], self.v[i][k]
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * g * g
                step = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                value -= step.astype(value.dtype, copy=False)


def split_validation(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset | None]:
    if fraction == 0 or len(dataset) < 2:
        return dataset, None
    rng = np.random.default_rng([seed, 1])
    order = rng.permutation(len(dataset))
    n_val = max(1, int(round(len(dataset) * fraction)))
    return dataset.subset(np.sort(order[n_val:])), dataset.subset(np.sort(order[:n_val]))


def train_baseline(
    net: NetworkDef,
    dataset: Dataset,
    config: TrainConfig | None = None,
    weights: WeightStore | None = None,
) -> TrainResult:
    """Train with Adam on cross-entropy and keep the epoch with peak validation accuracy.

    Deterministic for a given ``config.seed``. With ``val_fraction == 0`` the
    final epoch is kept.
    """
    config = config or TrainConfig()
    if len(dataset) == 0:
        raise DomainError("cannot train on an empty dataset")
    params = copy_weights(weights) if weights is not None else init_weights(net, config.seed)
    if config.epochs == 0:
        return TrainResult(params, 0, None, [])

    train_set, val_set = split_validation(dataset, config.val_fraction, config.seed)
    rng = np.random.default_rng([config.seed, 2])
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps, config.weight_decay)
    best = (copy_weights(params), 0, -1.0)
    history = []
    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x = train_set.images[idx]
            if config.augment:
                x = random_crop_flip(x, rng)
            logits, caches = forward_train(net, params, x)
            loss, dlogits = softmax_cross_entropy(logits, train_set.labels[idx])
            if not np.isfinite(loss):
                raise TrainingError("loss became non-finite", epoch)
            grads = backward(net, caches, dlogits)
            opt.step(params, grads)
            total += loss * len(idx)
            seen += len(idx)
        if not all(np.isfinite(v).all() for p in params.values() for v in p.values()):
            raise TrainingError("weights became non-finite", epoch)
        entry = {"epoch": epoch, "train_loss": total / seen}
        if val_set is not None:
            entry["val_accuracy"] = evaluate_accuracy(net, params, val_set)
            if entry["val_accuracy"] > best[2]:
                best = (copy_weights(params), epoch, entry["val_accuracy"])
        else:
            best = (params, epoch, None)
        history.append(entry)
        log.info("epoch %d loss %.4f val %s", epoch, entry["train_loss"], entry.get("val_accuracy"))
    return TrainResult(best[0], best[1], best[2], history)
