"""Layers with explicit forward/backward passes.

Sequences are batched as ``(B, L, D)`` arrays, right-padded.  Because
padding sits after the valid steps, padded positions never influence the
states of valid ones; callers only need to mask losses and reductions.

Recurrent weights are stored gate-stacked:

* GRU: ``W (D, 3K)``, ``U (K, 3K)``, ``b (3K,)`` with gate order update, reset, candidate.
* LSTM: ``W (D, 4K)``, ``U (K, 4K)``, ``b (4K,)`` with gate order input, forget, cell, output.
"""

from __future__ import annotations

import numpy as np

from .params import NetParams, glorot_uniform, orthogonal

N_GATES = {"gru": 3, "lstm": 4}


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


# -- recurrent ---------------------------------------------------------------

def rnn_init(params: NetParams, prefix: str, cell: str, n_in: int, n_hidden: int, rng) -> None:
    g = N_GATES[cell]
    K = n_hidden
    params[f"{prefix}.W"] = np.concatenate([glorot_uniform(rng, n_in, K) for _ in range(g)], axis=1)
    params[f"{prefix}.U"] = np.concatenate([orthogonal(rng, K) for _ in range(g)], axis=1)
    b = np.zeros(g * K)
    if cell == "lstm":
        b[K : 2 * K] = 1.0
    params[f"{prefix}.b"] = b


def rnn_forward(params, prefix: str, cell: str, X: np.ndarray):
    """Run a recurrent layer over ``X (B, L, D)`` from a zero state; returns ``H (B, L, K)`` and a cache."""
    W, U, b = params[f"{prefix}.W"], params[f"{prefix}.U"], params[f"{prefix}.b"]
    if X.shape[-1] != W.shape[0]:
        raise ValueError(f"{prefix}: input width {X.shape[-1]} does not match weight rows {W.shape[0]}")
    B, L, _ = X.shape
    K = U.shape[0]
    XW = X @ W + b
    H = np.empty((B, L, K))
    h = np.zeros((B, K))
    if cell == "gru":
        Z, R, N, RH = (np.empty((B, L, K)) for _ in range(4))
        U_zr, U_h = U[:, : 2 * K], U[:, 2 * K :]
        for t in range(L):
            a = XW[:, t]
            hu = h @ U_zr
            z = sigmoid(a[:, :K] + hu[:, :K])
            r = sigmoid(a[:, K : 2 * K] + hu[:, K:])
            rh = r * h
            n = np.tanh(a[:, 2 * K :] + rh @ U_h)
            h = (1.0 - z) * h + z * n
            Z[:, t], R[:, t], N[:, t], RH[:, t], H[:, t] = z, r, n, rh, h
        cache = (X, H, Z, R, N, RH)
    elif cell == "lstm":
        I, F, G, O, C, TC = (np.empty((B, L, K)) for _ in range(6))
        c = np.zeros((B, K))
        for t in range(L):
            a = XW[:, t] + h @ U
            i = sigmoid(a[:, :K])
            f = sigmoid(a[:, K : 2 * K])
            g = np.tanh(a[:, 2 * K : 3 * K])
            o = sigmoid(a[:, 3 * K :])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            I[:, t], F[:, t], G[:, t], O[:, t], C[:, t], TC[:, t], H[:, t] = i, f, g, o, c, tc, h
        cache = (X, H, I, F, G, O, C, TC)
    else:
        raise ValueError(f"unknown rnn type {cell!r}")
    return H, cache


def rnn_backward(params, prefix: str, cell: str, cache, dH: np.ndarray):
    """Backpropagate ``dL/dH`` through time; returns ``dL/dX`` and parameter gradients."""
    W, U = params[f"{prefix}.W"], params[f"{prefix}.U"]
    X, H = cache[0], cache[1]
    B, L, K = H.shape
    g = U.shape[1] // K
    dA = np.empty((B, L, g * K))
    dU = np.zeros_like(U)
    dh_next = np.zeros((B, K))
    zeros = np.zeros((B, K))
    if cell == "gru":
        _, _, Z, R, N, RH = cache
        U_zr, U_h = U[:, : 2 * K], U[:, 2 * K :]
        for t in range(L - 1, -1, -1):
            hp = H[:, t - 1] if t > 0 else zeros
            z, r, n = Z[:, t], R[:, t], N[:, t]
            dh = dH[:, t] + dh_next
            dn_pre = dh * z * (1.0 - n * n)
            dz_pre = dh * (n - hp) * z * (1.0 - z)
            drh = dn_pre @ U_h.T
            dr_pre = drh * hp * r * (1.0 - r)
            dzr = np.concatenate([dz_pre, dr_pre], axis=1)
            dU[:, 2 * K :] += RH[:, t].T @ dn_pre
            dU[:, : 2 * K] += hp.T @ dzr
            dh_next = dh * (1.0 - z) + drh * r + dzr @ U_zr.T
            dA[:, t, : 2 * K] = dzr
            dA[:, t, 2 * K :] = dn_pre
    else:
        _, _, I, F, G, O, C, TC = cache
        dc_next = np.zeros((B, K))
        for t in range(L - 1, -1, -1):
            hp = H[:, t - 1] if t > 0 else zeros
            cp = C[:, t - 1] if t > 0 else zeros
            i, f, gg, o, tc = I[:, t], F[:, t], G[:, t], O[:, t], TC[:, t]
            dh = dH[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = np.concatenate(
                [
                    dc * gg * i * (1.0 - i),
                    dc * cp * f * (1.0 - f),
                    dc * i * (1.0 - gg * gg),
                    dh * tc * o * (1.0 - o),
                ],
                axis=1,
            )
            dU += hp.T @ da
            dh_next = da @ U.T
            dc_next = dc * f
            dA[:, t] = da
    flatA = dA.reshape(B * L, -1)
    grads = {
        f"{prefix}.W": X.reshape(B * L, -1).T @ flatA,
        f"{prefix}.U": dU,
        f"{prefix}.b": flatA.sum(axis=0),
    }
    return dA @ W.T, grads


def gru_step(params, prefix: str, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """One GRU update ``h_t`` from input ``x_t`` and state ``h_{t-1}``."""
    W, U, b = params[f"{prefix}.W"], params[f"{prefix}.U"], params[f"{prefix}.b"]
    K = U.shape[0]
    a = x @ W + b
    hu = h @ U[:, : 2 * K]
    z = sigmoid(a[..., :K] + hu[..., :K])
    r = sigmoid(a[..., K : 2 * K] + hu[..., K:])
    n = np.tanh(a[..., 2 * K :] + (r * h) @ U[:, 2 * K :])
    return (1.0 - z) * h + z * n


def gru_forward(params, seq, prefix: str = "rnn") -> np.ndarray:
    """GRU outputs ``(L, K)`` for a single input sequence ``(L, D)``."""
    H, _ = rnn_forward(params, prefix, "gru", np.asarray(seq, dtype=float)[None])
    return H[0]


def lstm_forward(params, seq, prefix: str = "rnn") -> np.ndarray:
    """LSTM outputs ``(L, K)`` for a single input sequence ``(L, D)``."""
    H, _ = rnn_forward(params, prefix, "lstm", np.asarray(seq, dtype=float)[None])
    return H[0]


# -- dense / embedding -------------------------------------------------------

def dense_init(params: NetParams, prefix: str, n_in: int, n_out: int, rng) -> None:
    params[f"{prefix}.W"] = glorot_uniform(rng, n_in, n_out)
    params[f"{prefix}.b"] = np.zeros(n_out)


def dense_forward(params, prefix: str, X: np.ndarray) -> np.ndarray:
    """Pre-activation ``X @ W + b`` over any leading dimensions."""
    return X @ params[f"{prefix}.W"] + params[f"{prefix}.b"]


def dense_backward(params, prefix: str, X: np.ndarray, dZ: np.ndarray):
    W = params[f"{prefix}.W"]
    Xf = X.reshape(-1, X.shape[-1])
    dZf = dZ.reshape(-1, dZ.shape[-1])
    grads = {f"{prefix}.W": Xf.T @ dZf, f"{prefix}.b": dZf.sum(axis=0)}
    return dZ @ W.T, grads


def embed(table: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Look up rows of ``table``; negative indices are padding and map to zero vectors."""
    valid = idx >= 0
    out = table[np.where(valid, idx, 0)]
    out[~valid] = 0.0
    return out


def embed_backward(table: np.ndarray, idx: np.ndarray, dX: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(table)
    valid = idx >= 0
    np.add.at(grad, idx[valid], dX[valid])
    return grad
