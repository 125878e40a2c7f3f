"""Named parameter store and initialisers."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError


class NetParams(dict):
    """Ordered mapping of parameter name to float64 array.

    Names are dotted paths such as ``"enc.W"`` or ``"head_action.b"``.
    """

    def copy(self) -> "NetParams":
        return NetParams((k, v.copy()) for k, v in self.items())

    def zeros_like(self) -> "NetParams":
        return NetParams((k, np.zeros_like(v)) for k, v in self.items())

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.items()}

    def flat(self) -> np.ndarray:
        if not self:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self.values()])

    def n_params(self) -> int:
        return sum(v.size for v in self.values())

    def check_finite(self) -> None:
        for k, v in self.items():
            if not np.all(np.isfinite(v)):
                raise NumericError(f"non-finite values in parameter {k!r}")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random n x n orthogonal matrix (QR of a Gaussian, sign-corrected)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def embedding_uniform(rng: np.random.Generator, n_rows: int, dim: int) -> np.ndarray:
    return rng.uniform(-0.05, 0.05, size=(n_rows, dim))
