"""Sequence autoencoders for unsupervised feature extraction.

The encoder embeds actions (action / both types), optionally appends the
time track, runs a recurrent layer and reduces its outputs to a K-vector
(last valid output or the average over valid steps).  The decoder repeats
that vector along the sequence, runs a second recurrent layer and emits a
softmax distribution over actions and/or a ReLU time reconstruction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .archive import load_archive, save_archive
from .core import ProcessSet
from .errors import DataError
from .features import FeatureMatrix, make_features
from .nn import layers as F
from .nn.losses import LOG_FLOOR
from .nn.params import NetParams, embedding_uniform
from .nn.train import SequenceData, TrainConfig, TrainResult, evaluate, train

LOG_OFFSET = 1e-3


def time_track(T, cumulative: bool = False, log: bool = True) -> np.ndarray:
    """Timestamps (``cumulative``) or inter-arrival gaps, optionally as ``log(x + 1e-3)``."""
    T = np.asarray(T, dtype=float)
    x = T.copy() if cumulative else np.diff(T, prepend=0.0)
    if log:
        x = np.log(x + LOG_OFFSET)
    return x


@dataclass(frozen=True)
class SeqAEArchitecture:
    ae_type: str = "action"
    K: int = 20
    rnn_type: str = "lstm"
    method: str = "last"
    cumulative: bool = False
    log: bool = True
    w_action: float = 1.0
    w_time: float = 1.0

    def __post_init__(self):
        if self.ae_type not in ("action", "time", "both"):
            raise ValueError(f"unknown ae_type {self.ae_type!r}")
        if self.rnn_type not in ("lstm", "gru"):
            raise ValueError(f"unknown rnn_type {self.rnn_type!r}")
        if self.method not in ("last", "avg"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.w_action < 0 or self.w_time < 0 or self.w_action + self.w_time <= 0:
            raise ValueError("weights must be nonnegative with a positive sum")

    @property
    def uses_actions(self) -> bool:
        return self.ae_type in ("action", "both")

    @property
    def uses_time(self) -> bool:
        return self.ae_type in ("time", "both")

    @property
    def weights(self) -> tuple[float, float]:
        if self.ae_type == "action":
            return 1.0, 0.0
        if self.ae_type == "time":
            return 0.0, 1.0
        return self.w_action, self.w_time


class SeqAE:
    """Autoencoder network over padded batches; see :mod:`procflow.nn.train` for the model protocol."""

    def __init__(self, arch: SeqAEArchitecture, n_action: int):
        self.arch = arch
        self.n_action = n_action

    def init_params(self, rng) -> NetParams:
        a, K = self.arch, self.arch.K
        p = NetParams()
        if a.uses_actions:
            p["emb"] = embedding_uniform(rng, self.n_action, K)
        n_in = {"action": K, "time": 1, "both": K + 1}[a.ae_type]
        F.rnn_init(p, "enc", a.rnn_type, n_in, K, rng)
        F.rnn_init(p, "dec", a.rnn_type, K, K, rng)
        if a.uses_actions:
            F.dense_init(p, "head_action", K, self.n_action, rng)
        if a.uses_time:
            F.dense_init(p, "head_time", K, 1, rng)
        return p

    def _encoder_input(self, params, batch):
        parts = []
        if self.arch.uses_actions:
            parts.append(F.embed(params["emb"], batch.actions))
        if self.arch.uses_time:
            parts.append(batch.times[..., None])
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=-1)

    def _reduce(self, H, batch):
        if self.arch.method == "last":
            return H[np.arange(batch.size), batch.lengths - 1]
        return (H * batch.mask[..., None]).sum(axis=1) / batch.lengths[:, None]

    def encode(self, params, batch) -> np.ndarray:
        H, _ = F.rnn_forward(params, "enc", self.arch.rnn_type, self._encoder_input(params, batch))
        return self._reduce(H, batch)

    def _forward(self, params, batch):
        a = self.arch
        X = self._encoder_input(params, batch)
        He, enc_cache = F.rnn_forward(params, "enc", a.rnn_type, X)
        feat = self._reduce(He, batch)
        L = batch.actions.shape[1]
        D = np.repeat(feat[:, None, :], L, axis=1)
        Hd, dec_cache = F.rnn_forward(params, "dec", a.rnn_type, D)
        out = {"X": X, "enc_cache": enc_cache, "dec_cache": dec_cache, "Hd": Hd, "feat": feat}
        if a.uses_actions:
            out["logp"] = F.log_softmax(F.dense_forward(params, "head_action", Hd))
        if a.uses_time:
            out["zt"] = F.dense_forward(params, "head_time", Hd)[..., 0]
        return out

    def decode(self, params, batch) -> dict:
        """Per-step action distributions and/or reconstructed time track."""
        out = self._forward(params, batch)
        res = {}
        if "logp" in out:
            res["action_probs"] = np.exp(out["logp"])
        if "zt" in out:
            res["times"] = np.maximum(out["zt"], 0.0)
        return res

    def _per_seq_losses(self, out, batch):
        B = batch.size
        mask = batch.mask
        la = lt = np.zeros(B)
        if "logp" in out:
            idx = np.where(mask, batch.actions, 0)
            lp = np.take_along_axis(out["logp"], idx[..., None], axis=-1)[..., 0]
            lp = np.maximum(lp, np.log(LOG_FLOOR))
            la = -(lp * mask).sum(axis=1) / batch.lengths
        if "zt" in out:
            that = np.maximum(out["zt"], 0.0)
            lt = (((batch.times - that) ** 2) * mask).sum(axis=1)
        return la, lt

    def per_sequence_loss(self, params, batch) -> np.ndarray:
        w_a, w_t = self.arch.weights
        la, lt = self._per_seq_losses(self._forward(params, batch), batch)
        return w_a * la + w_t * lt

    def loss(self, params, batch) -> float:
        return float(np.mean(self.per_sequence_loss(params, batch)))

    def loss_and_grad(self, params, batch):
        a = self.arch
        w_a, w_t = a.weights
        out = self._forward(params, batch)
        la, lt = self._per_seq_losses(out, batch)
        loss = float(np.mean(w_a * la + w_t * lt))
        B = batch.size
        mask = batch.mask
        grads: dict[str, np.ndarray] = {}
        Hd = out["Hd"]
        dHd = np.zeros_like(Hd)
        if "logp" in out:
            P = np.exp(out["logp"])
            valid_idx = np.where(mask, batch.actions, 0)
            dZ = P
            np.put_along_axis(dZ, valid_idx[..., None], np.take_along_axis(P, valid_idx[..., None], -1) - 1.0, -1)
            dZ *= (mask * (w_a / (B * batch.lengths))[:, None])[..., None]
            dH, g = F.dense_backward(params, "head_action", Hd, dZ)
            dHd += dH
            grads.update(g)
        if "zt" in out:
            zt = out["zt"]
            dz = 2.0 * (np.maximum(zt, 0.0) - batch.times) * (zt > 0) * mask * (w_t / B)
            dH, g = F.dense_backward(params, "head_time", Hd, dz[..., None])
            dHd += dH
            grads.update(g)
        dD, g = F.rnn_backward(params, "dec", a.rnn_type, out["dec_cache"], dHd)
        grads.update(g)
        dfeat = dD.sum(axis=1)
        He = out["enc_cache"][1]
        dHe = np.zeros_like(He)
        if a.method == "last":
            dHe[np.arange(B), batch.lengths - 1] = dfeat
        else:
            dHe = (dfeat / batch.lengths[:, None])[:, None, :] * mask[..., None]
        dX, g = F.rnn_backward(params, "enc", a.rnn_type, out["enc_cache"], dHe)
        grads.update(g)
        if a.uses_actions:
            grads["emb"] = F.embed_backward(params["emb"], batch.actions, dX[..., : a.K])
        return loss, {k: grads[k] for k in params}


def prepare_data(p: ProcessSet, arch: SeqAEArchitecture) -> SequenceData:
    if arch.uses_time and not p.has_times:
        raise DataError(f"ae_type {arch.ae_type!r} requires timestamps")
    times = None
    if arch.uses_time:
        times = [time_track(t, arch.cumulative, arch.log) for t in p.times]
    return SequenceData(list(p.actions), times)


def _default_split(n: int, seed: int, frac: float = 0.2):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    perm = rng.permutation(n)
    n_valid = int(round(n * frac)) if n > 1 else 0
    return np.sort(perm[n_valid:]), np.sort(perm[:n_valid])


def _resolve_split(n: int, cfg: TrainConfig) -> TrainConfig:
    if cfg.train_idx is None and cfg.valid_idx is None:
        tr, va = _default_split(n, cfg.seed)
        return replace(cfg, train_idx=tr, valid_idx=va)
    tr = cfg.train_idx if cfg.train_idx is not None else np.setdiff1d(np.arange(n), np.asarray(cfg.valid_idx, dtype=int))
    for idx in (tr, cfg.valid_idx if cfg.valid_idx is not None else []):
        idx = np.asarray(idx, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise DataError("training/validation index out of range")
    return replace(cfg, train_idx=tr)


@dataclass
class SeqAEResult:
    theta: FeatureMatrix
    train_loss: np.ndarray
    valid_loss: np.ndarray
    params: NetParams
    arch: SeqAEArchitecture
    vocab: tuple[str, ...]
    fit: TrainResult

    def save(self, path) -> None:
        save_model(path, self.arch, self.vocab, self.params)


def encode_all(model: SeqAE, params, data: SequenceData, chunk: int = 256) -> np.ndarray:
    parts = [model.encode(params, data.batch(np.arange(s, min(s + chunk, len(data))))) for s in range(0, len(data), chunk)]
    return np.vstack(parts)


def seq2feature_seq2seq(
    p: ProcessSet,
    arch: SeqAEArchitecture = SeqAEArchitecture(),
    cfg: TrainConfig = TrainConfig(),
    pca: bool = True,
) -> SeqAEResult:
    """Fit an autoencoder and return the features of every process under the best parameters.

    Without explicit index sets a seeded 80/20 train/validation split is used.
    """
    data = prepare_data(p, arch)
    cfg = _resolve_split(len(p), cfg)
    model = SeqAE(arch, len(p.vocab))
    fit = train(model, data, cfg)
    theta = encode_all(model, fit.params, data)
    return SeqAEResult(
        theta=make_features(theta, pca, p.ids),
        train_loss=fit.history[:, 0].copy(),
        valid_loss=fit.history[:, 1].copy(),
        params=fit.params,
        arch=arch,
        vocab=p.vocab,
        fit=fit,
    )


def _folds(n: int, n_fold: int, seed: int) -> list[np.ndarray]:
    if not 2 <= n_fold <= n:
        raise ValueError(f"n_fold must be between 2 and n={n}")
    perm = np.random.default_rng(np.random.SeedSequence([seed, 2])).permutation(n)
    return [np.sort(perm[k::n_fold]) for k in range(n_fold)]


def chooseK_seq2seq(
    p: ProcessSet,
    arch: SeqAEArchitecture = SeqAEArchitecture(),
    K_cand=(5, 10),
    n_fold: int = 5,
    cfg: TrainConfig = TrainConfig(),
    inner_valid: float = 0.1,
) -> dict:
    """Cross-validated choice of K.

    Every training fold is further split (``inner_valid``) to select the best
    epoch, so each held-out fold is scored by a model that never saw it.
    ``cv_loss[k]`` is the mean held-out loss per sequence.
    """
    data = prepare_data(p, arch)
    n = len(p)
    folds = _folds(n, n_fold, cfg.seed)
    cv = np.zeros(len(K_cand))
    for k_i, K in enumerate(K_cand):
        model = SeqAE(replace(arch, K=int(K)), len(p.vocab))
        total = 0.0
        for f_i, held in enumerate(folds):
            pool = np.setdiff1d(np.arange(n), held)
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3, k_i, f_i]))
            pool = pool[rng.permutation(pool.size)]
            n_in = max(1, int(round(pool.size * inner_valid))) if pool.size > 1 else 0
            fcfg = replace(cfg, seed=cfg.seed + 1000 * (f_i + 1) + k_i, train_idx=np.sort(pool[n_in:]), valid_idx=np.sort(pool[:n_in]))
            fit = train(model, data, fcfg)
            total += evaluate(model, fit.params, data, held) * held.size
        cv[k_i] = total / n
    best = int(np.argmin(cv))
    return {"K": int(K_cand[best]), "K_cand": list(K_cand), "cv_loss": cv}


# -- persistence -------------------------------------------------------------

def save_model(path, arch: SeqAEArchitecture, vocab, params: NetParams) -> None:
    fields = {f"arch.{k}": v for k, v in asdict(arch).items()}
    fields["vocab"] = list(vocab)
    save_archive(path, "seqae", fields, params)


def load_model(path) -> tuple[SeqAE, tuple[str, ...], NetParams]:
    kind, fields, params = load_archive(path)
    if kind != "seqae":
        raise DataError(f"{path}: expected a seqae archive, found {kind!r}")
    arch = SeqAEArchitecture(**{k[5:]: v for k, v in fields.items() if k.startswith("arch.")})
    vocab = tuple(fields["vocab"])
    return SeqAE(arch, len(vocab)), vocab, params
