"""Reconstruction and prediction losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossSpec:
    kind: str = "action"  # action | time | both | binary_ce | squared
    w_action: float = 1.0
    w_time: float = 1.0

    def __post_init__(self):
        if self.kind not in ("action", "time", "both", "binary_ce", "squared"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.w_action < 0 or self.w_time < 0 or self.w_action + self.w_time <= 0:
            raise ValueError("loss weights must be nonnegative with a positive sum")


def loss_action(S, S_hat) -> float:
    """Mean negative log-likelihood of the true actions ``S`` under per-step distributions ``S_hat``.

    ``S`` holds vocabulary indices (length L); ``S_hat`` is ``(L, N)`` with rows
    summing to one.
    """
    S = np.asarray(S, dtype=np.int64)
    S_hat = np.asarray(S_hat, dtype=float)
    if S_hat.ndim != 2 or S_hat.shape[0] != S.size:
        raise DataError(f"expected distributions of shape ({S.size}, N), got {S_hat.shape}")
    if np.any(S_hat < 0) or np.any(np.abs(S_hat.sum(axis=1) - 1.0) > 1e-6):
        raise DataError("each predicted row must be a probability vector")
    p = S_hat[np.arange(S.size), S]
    return float(-np.mean(np.log(np.maximum(p, LOG_FLOOR))))


def loss_time(T, T_hat) -> float:
    """Sum of squared timestamp errors (not length-normalised)."""
    T = np.asarray(T, dtype=float)
    T_hat = np.asarray(T_hat, dtype=float)
    if T.shape != T_hat.shape:
        raise DataError(f"length mismatch: {T.shape} vs {T_hat.shape}")
    return float(np.sum((T - T_hat) ** 2))


def binary_ce_from_logits(z: np.ndarray, y: np.ndarray):
    """Per-sample cross-entropy of labels ``y`` under ``sigmoid(z)`` and its derivative in ``z``."""
    loss = np.logaddexp(0.0, z) - y * z
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    return loss, p - y
