"""Padded sequence datasets and the minibatch training loop.

A *model* here is any object with

``init_params(rng) -> NetParams``
``loss(params, batch) -> float``
``loss_and_grad(params, batch) -> (float, dict)``

where ``loss`` is the mean per-sequence loss over the batch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import NumericError
from .optim import make_optimizer
from .params import NetParams


@dataclass
class SeqBatch:
    actions: np.ndarray  # (B, L) vocabulary indices, -1 for padding
    mask: np.ndarray  # (B, L) bool
    lengths: np.ndarray  # (B,)
    times: np.ndarray | None = None  # (B, L) time track, 0 on padding
    y: np.ndarray | None = None  # (B,) responses
    X: np.ndarray | None = None  # (B, p) covariates

    @property
    def size(self) -> int:
        return self.actions.shape[0]


class SequenceData:
    """Right-padded storage of variable-length sequences plus optional targets."""

    def __init__(self, actions: Sequence[np.ndarray], times=None, y=None, X=None):
        n = len(actions)
        self.lengths = np.array([len(a) for a in actions], dtype=np.int64)
        L = int(self.lengths.max()) if n else 0
        self.actions = np.full((n, L), -1, dtype=np.int64)
        self.times = None if times is None else np.zeros((n, L))
        for i, a in enumerate(actions):
            self.actions[i, : len(a)] = a
            if times is not None:
                self.times[i, : len(a)] = times[i]
        self.y = None if y is None else np.asarray(y, dtype=float)
        self.X = None if X is None else np.asarray(X, dtype=float).reshape(n, -1)

    def __len__(self) -> int:
        return self.actions.shape[0]

    def batch(self, idx) -> SeqBatch:
        idx = np.asarray(idx, dtype=np.int64)
        lengths = self.lengths[idx]
        L = int(lengths.max())
        acts = self.actions[idx, :L]
        return SeqBatch(
            actions=acts,
            mask=acts >= 0,
            lengths=lengths,
            times=None if self.times is None else self.times[idx, :L],
            y=None if self.y is None else self.y[idx],
            X=None if self.X is None else self.X[idx],
        )


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    step_size: float | None = None
    n_epoch: int = 50
    batch_size: int = 16
    seed: int = 0
    train_idx: Sequence[int] | None = None
    valid_idx: Sequence[int] | None = None

    def __post_init__(self):
        if self.n_epoch < 1:
            raise ValueError("n_epoch must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.train_idx is not None and self.valid_idx is not None:
            if set(map(int, self.train_idx)) & set(map(int, self.valid_idx)):
                raise ValueError("training and validation indices overlap")


@dataclass
class TrainResult:
    params: NetParams
    history: np.ndarray  # (n_epoch, 2): train loss, validation loss
    best_epoch: int
    diverged: bool = False
    extra: dict = field(default_factory=dict)


def grad(model, params, batch):
    """Loss and exact gradient of ``model`` on ``batch``; raises on non-finite values."""
    loss, g = model.loss_and_grad(params, batch)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    for k, v in g.items():
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite gradient for {k!r}")
    return loss, g


def evaluate(model, params, data: SequenceData, idx, chunk: int = 256) -> float:
    """Mean per-sequence loss over ``idx``."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return float("nan")
    total = 0.0
    for s in range(0, idx.size, chunk):
        part = idx[s : s + chunk]
        total += model.loss(params, data.batch(part)) * part.size
    return total / idx.size


def train(model, data: SequenceData, cfg: TrainConfig, params: NetParams | None = None) -> TrainResult:
    """Minibatch training; returns the parameters with the lowest validation loss.

    Without a validation set the training loss is used for selection.
    """
    init_ss, shuffle_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    if params is None:
        params = model.init_params(np.random.default_rng(init_ss))
    else:
        params = params.copy()
    rng = np.random.default_rng(shuffle_ss)
    train_idx = np.arange(len(data)) if cfg.train_idx is None else np.asarray(cfg.train_idx, dtype=np.int64)
    valid_idx = np.zeros(0, dtype=np.int64) if cfg.valid_idx is None else np.asarray(cfg.valid_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise ValueError("empty training set")
    opt = make_optimizer(cfg.optimizer, cfg.step_size)
    history = np.full((cfg.n_epoch, 2), np.nan)
    best, best_loss, best_epoch = params.copy(), np.inf, -1
    diverged = False
    for epoch in range(cfg.n_epoch):
        order = train_idx[rng.permutation(train_idx.size)]
        try:
            for s in range(0, order.size, cfg.batch_size):
                _, g = grad(model, params, data.batch(order[s : s + cfg.batch_size]))
                opt.step(params, g)
            params.check_finite()
        except NumericError as exc:
            warnings.warn(f"training diverged in epoch {epoch + 1}: {exc}; keeping last finite snapshot", stacklevel=2)
            diverged = True
            break
        tr = evaluate(model, params, data, train_idx)
        va = evaluate(model, params, data, valid_idx)
        history[epoch] = tr, va
        score = va if valid_idx.size else tr
        if not np.isfinite(score):
            warnings.warn(f"non-finite loss after epoch {epoch + 1}; keeping last finite snapshot", stacklevel=2)
            diverged = True
            break
        if score < best_loss:
            best, best_loss, best_epoch = params.copy(), score, epoch
    return TrainResult(params=best, history=history, best_epoch=best_epoch, diverged=diverged)
