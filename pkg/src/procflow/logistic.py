"""Binary logistic regression by Newton-Raphson (IRLS) with a tiny ridge."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError

MAX_ITER = 50
RIDGE = 1e-8


@dataclass
class LogisticFit:
    coefficients: np.ndarray  # intercept first
    accuracy: float
    n_iter: int
    converged: bool
    separated: bool

    def linear_predictor(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.coefficients[0] + X @ self.coefficients[1:]


def irls(X, y, ridge: float = RIDGE, max_iter: int = MAX_ITER, tol: float = 1e-10):
    """Penalised maximum likelihood for ``logit P(y=1) = b0 + X b``; the intercept is not penalised.

    Returns ``(beta, n_iter, converged)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([np.ones(len(y)), X])
    P = ridge * np.eye(A.shape[1])
    P[0, 0] = 0.0
    beta = np.zeros(A.shape[1])
    for it in range(1, max_iter + 1):
        eta = A @ beta
        mu = 0.5 * (1.0 + np.tanh(0.5 * eta))
        w = mu * (1.0 - mu)
        grad = A.T @ (y - mu) - P @ beta
        H = (A * w[:, None]).T @ A + P
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        beta = beta + step
        if not np.all(np.isfinite(beta)):
            raise NumericError("logistic regression diverged")
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(beta))):
            return beta, it, True
    return beta, max_iter, False


def fit_logistic(features, labels, train_idx=None, test_idx=None) -> LogisticFit:
    """Fit on ``train_idx`` and report accuracy on ``test_idx`` (the training rows if omitted).

    A test case is predicted positive when the linear predictor is > 0.
    """
    X = np.asarray(getattr(features, "theta", features), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(labels)
    if y.shape[0] != X.shape[0]:
        raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
    if not np.all(np.isin(y, (0, 1))):
        raise DataError("labels must be binary (0/1)")
    y = y.astype(float)
    n = len(y)
    tr = np.arange(n) if train_idx is None else np.asarray(train_idx, dtype=int)
    te = tr if test_idx is None else np.asarray(test_idx, dtype=int)
    if tr.size == 0:
        raise DataError("empty training set")
    beta, n_iter, conv = irls(X[tr], y[tr])
    eta_tr = beta[0] + X[tr] @ beta[1:]
    separated = bool(np.all((eta_tr > 0) == (y[tr] == 1))) and 0 < y[tr].sum() < tr.size
    if separated or not conv:
        warnings.warn(
            "training data appear separable; ridge-stabilised estimate returned" if separated else "IRLS did not converge in 50 iterations",
            stacklevel=2,
        )
    fit = LogisticFit(beta, float("nan"), n_iter, conv, separated)
    if te.size:
        fit.accuracy = float(np.mean((fit.linear_predictor(X[te]) > 0) == (y[te] == 1)))
    return fit
