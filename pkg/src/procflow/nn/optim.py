"""Stochastic optimisers updating a :class:`NetParams` in place."""

from __future__ import annotations

import numpy as np

DEFAULT_STEP = {"sgd": 0.1, "adam": 0.001, "adadelta": 1.0, "rmsprop": 0.001}


class Optimizer:
    def __init__(self, step_size: float):
        if step_size <= 0:
            raise ValueError("step_size must be positive")
        self.step_size = float(step_size)
        self.state: dict[str, dict[str, np.ndarray]] = {}
        self.t = 0

    def _slot(self, name, like, *keys):
        st = self.state.get(name)
        if st is None:
            st = self.state[name] = {k: np.zeros_like(like) for k in keys}
        return st

    def step(self, params, grads) -> None:
        self.t += 1
        for name, g in grads.items():
            if params[name].shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}")
            params[name] -= self._update(name, g)

    def _update(self, name, g):
        raise NotImplementedError


class SGD(Optimizer):
    def _update(self, name, g):
        return self.step_size * g


class Adam(Optimizer):
    def __init__(self, step_size=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(step_size)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def _update(self, name, g):
        st = self._slot(name, g, "m", "v")
        st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * g
        st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * g * g
        m_hat = st["m"] / (1 - self.beta1**self.t)
        v_hat = st["v"] / (1 - self.beta2**self.t)
        return self.step_size * m_hat / (np.sqrt(v_hat) + self.eps)


class Adadelta(Optimizer):
    """AdaDelta; ``step_size`` multiplies the unit-corrected update."""

    def __init__(self, step_size=1.0, rho=0.95, eps=1e-6):
        super().__init__(step_size)
        self.rho, self.eps = rho, eps

    def _update(self, name, g):
        st = self._slot(name, g, "eg", "ed")
        st["eg"] = self.rho * st["eg"] + (1 - self.rho) * g * g
        delta = np.sqrt(st["ed"] + self.eps) / np.sqrt(st["eg"] + self.eps) * g
        st["ed"] = self.rho * st["ed"] + (1 - self.rho) * delta * delta
        return self.step_size * delta


class RMSprop(Optimizer):
    def __init__(self, step_size=0.001, rho=0.9, eps=1e-8):
        super().__init__(step_size)
        self.rho, self.eps = rho, eps

    def _update(self, name, g):
        st = self._slot(name, g, "v")
        st["v"] = self.rho * st["v"] + (1 - self.rho) * g * g
        return self.step_size * g / (np.sqrt(st["v"]) + self.eps)


_OPTIMIZERS = {"sgd": SGD, "adam": Adam, "adadelta": Adadelta, "rmsprop": RMSprop}


def make_optimizer(name: str, step_size: float | None = None) -> Optimizer:
    try:
        cls = _OPTIMIZERS[name]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose from {sorted(_OPTIMIZERS)}") from None
    return cls(DEFAULT_STEP[name] if step_size is None else step_size)
