"""Supervised sequence models: a response process (plus covariates) to a binary or numeric outcome."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .archive import load_archive, save_archive
from .core import ProcessSet
from .errors import DataError
from .nn import layers as F
from .nn.losses import binary_ce_from_logits
from .nn.params import NetParams, embedding_uniform
from .nn.train import SequenceData, TrainConfig, TrainResult, train
from .seqae import time_track


@dataclass(frozen=True)
class SeqmArchitecture:
    response_type: str = "binary"
    K_emb: int = 20
    K_rnn: int = 20
    rnn_type: str = "lstm"
    include_time: bool = False
    time_interval: bool = False
    log_time: bool = True
    n_hidden: int = 0
    K_hidden: tuple[int, ...] = ()
    n_covariates: int = 0
    max_len: int | None = None

    def __post_init__(self):
        if self.response_type not in ("binary", "scale"):
            raise ValueError(f"unknown response_type {self.response_type!r}")
        if self.rnn_type not in ("lstm", "gru"):
            raise ValueError(f"unknown rnn_type {self.rnn_type!r}")
        object.__setattr__(self, "K_hidden", tuple(int(k) for k in self.K_hidden))
        if self.n_hidden != len(self.K_hidden):
            raise ValueError("n_hidden must equal len(K_hidden)")

    def structure(self) -> str:
        parts = [f"embedding({self.K_emb})"]
        if self.include_time:
            kind = "interval" if self.time_interval else "timestamp"
            parts.append(f"+{'log-' if self.log_time else ''}{kind}")
        parts.append(f"{self.rnn_type}({self.K_rnn})")
        if self.n_covariates:
            parts.append(f"+covariates({self.n_covariates})")
        parts += [f"dense({k},tanh)" for k in self.K_hidden]
        parts.append("dense(1,sigmoid)" if self.response_type == "binary" else "dense(1,linear)")
        return " -> ".join(parts)


class SeqNet:
    """Embedding -> RNN -> last output (+ covariates) -> tanh layers -> output head.

    The embedding table carries one extra row (index ``n_action``) for actions
    unseen during fitting.
    """

    def __init__(self, arch: SeqmArchitecture, n_action: int):
        self.arch = arch
        self.n_action = n_action

    def init_params(self, rng) -> NetParams:
        a = self.arch
        p = NetParams()
        p["emb"] = embedding_uniform(rng, self.n_action + 1, a.K_emb)
        F.rnn_init(p, "rnn", a.rnn_type, a.K_emb + int(a.include_time), a.K_rnn, rng)
        width = a.K_rnn + a.n_covariates
        for k, size in enumerate(a.K_hidden):
            F.dense_init(p, f"hidden{k}", width, size, rng)
            width = size
        F.dense_init(p, "out", width, 1, rng)
        return p

    def _forward(self, params, batch):
        a = self.arch
        X = F.embed(params["emb"], batch.actions)
        if a.include_time:
            X = np.concatenate([X, batch.times[..., None]], axis=-1)
        H, cache = F.rnn_forward(params, "rnn", a.rnn_type, X)
        h = H[np.arange(batch.size), batch.lengths - 1]
        if a.n_covariates:
            if batch.X is None or batch.X.shape[1] != a.n_covariates:
                raise DataError(f"model expects {a.n_covariates} covariates")
            h = np.concatenate([h, batch.X], axis=1)
        acts = [h]
        for k in range(a.n_hidden):
            h = np.tanh(F.dense_forward(params, f"hidden{k}", h))
            acts.append(h)
        z = F.dense_forward(params, "out", h)[:, 0]
        return z, X, cache, acts

    def predict_raw(self, params, batch) -> np.ndarray:
        z = self._forward(params, batch)[0]
        return F.sigmoid(z) if self.arch.response_type == "binary" else z

    def _loss_terms(self, z, y):
        if self.arch.response_type == "binary":
            return binary_ce_from_logits(z, y)
        r = z - y
        return r * r, 2.0 * r

    def loss(self, params, batch) -> float:
        z = self._forward(params, batch)[0]
        return float(np.mean(self._loss_terms(z, batch.y)[0]))

    def loss_and_grad(self, params, batch):
        a = self.arch
        z, X, cache, acts = self._forward(params, batch)
        losses, dz = self._loss_terms(z, batch.y)
        B = batch.size
        grads: dict[str, np.ndarray] = {}
        dh, g = F.dense_backward(params, "out", acts[-1], (dz / B)[:, None])
        grads.update(g)
        for k in range(a.n_hidden - 1, -1, -1):
            h = acts[k + 1]
            dh, g = F.dense_backward(params, f"hidden{k}", acts[k], dh * (1.0 - h * h))
            grads.update(g)
        dlast = dh[:, : a.K_rnn]
        H = cache[1]
        dH = np.zeros_like(H)
        dH[np.arange(B), batch.lengths - 1] = dlast
        dX, g = F.rnn_backward(params, "rnn", a.rnn_type, cache, dH)
        grads.update(g)
        grads["emb"] = F.embed_backward(params["emb"], batch.actions, dX[..., : a.K_emb])
        return float(np.mean(losses)), {k: grads[k] for k in params}


def _encode(p: ProcessSet, vocab, arch: SeqmArchitecture, max_len: int, X=None, y=None, warn_unknown=False):
    index = {v: k for k, v in enumerate(vocab)}
    unk = len(vocab)
    n_unknown = 0
    n_trunc = 0
    acts, times = [], []
    for i in range(len(p)):
        lab = p.labels(i)
        if len(lab) > max_len:
            n_trunc += 1
            lab = lab[:max_len]
        codes = np.array([index.get(s, unk) for s in lab], dtype=np.int64)
        n_unknown += int(np.sum(codes == unk))
        acts.append(codes)
        if arch.include_time:
            t = p.times[i][: len(lab)]
            times.append(time_track(t, cumulative=not arch.time_interval, log=arch.log_time))
    if n_trunc:
        warnings.warn(f"{n_trunc} sequences longer than max_len={max_len} truncated to their first events", stacklevel=3)
    if n_unknown and warn_unknown:
        warnings.warn(f"{n_unknown} occurrences of actions unseen during fitting mapped to UNK", stacklevel=3)
    return SequenceData(acts, times if arch.include_time else None, y=y, X=X)


@dataclass
class SeqmModel:
    arch: SeqmArchitecture
    vocab: tuple[str, ...]
    coefficients: NetParams
    history: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def structure(self) -> str:
        return self.arch.structure()

    @property
    def max_len(self) -> int:
        return int(self.arch.max_len)

    def net(self) -> SeqNet:
        return SeqNet(self.arch, len(self.vocab))

    def predict(self, new_p: ProcessSet, new_X=None) -> np.ndarray:
        return seqm_predict(self, new_p, new_X)

    def save(self, path) -> None:
        fields = {f"arch.{k}": v for k, v in asdict(self.arch).items()}
        fields["arch.K_hidden"] = list(self.arch.K_hidden)
        fields["structure"] = self.structure
        fields["vocab"] = list(self.vocab)
        fields["history"] = [[None if not np.isfinite(x) else float(x) for x in row] for row in self.history]
        save_archive(path, "seqm", fields, self.coefficients)

    @classmethod
    def load(cls, path) -> "SeqmModel":
        kind, fields, params = load_archive(path)
        if kind != "seqm":
            raise DataError(f"{path}: expected a seqm archive, found {kind!r}")
        arch = SeqmArchitecture(**{k[5:]: v for k, v in fields.items() if k.startswith("arch.")})
        hist = np.array([[np.nan if x is None else x for x in row] for row in fields["history"]], dtype=float)
        return cls(arch, tuple(fields["vocab"]), params, hist.reshape(-1, 2))


def _check_inputs(p: ProcessSet, arch: SeqmArchitecture, X):
    if arch.include_time and not p.has_times:
        raise DataError("include_time requires timestamps")
    if arch.n_covariates:
        if X is None:
            raise DataError(f"model expects {arch.n_covariates} covariates")
        X = np.asarray(X, dtype=float).reshape(len(p), -1)
        if X.shape[1] != arch.n_covariates:
            raise DataError(f"covariate dimension {X.shape[1]} does not match model ({arch.n_covariates})")
    elif X is not None:
        raise DataError("model was fitted without covariates")
    return X


def seqm_fit(
    p: ProcessSet,
    response,
    covariates=None,
    arch: SeqmArchitecture = SeqmArchitecture(),
    cfg: TrainConfig = TrainConfig(n_epoch=20),
    index_valid=0.2,
) -> SeqmModel:
    """Fit a sequence model.

    The validation set comes from ``cfg.valid_idx`` if given, else from
    ``index_valid``: a list of indices, or a fraction drawn at random with a
    stream derived from ``cfg.seed``.
    """
    n = len(p)
    y = np.asarray(response, dtype=float)
    if y.shape != (n,):
        raise DataError(f"response has length {y.size}, expected {n}")
    if arch.response_type == "binary" and not np.all((y == 0) | (y == 1)):
        raise DataError("binary responses must be 0 or 1")
    if covariates is not None:
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if covariates.shape[0] != n:
            raise DataError(f"covariates have {covariates.shape[0]} rows, expected {n}")
        arch = replace(arch, n_covariates=covariates.shape[1])
    else:
        arch = replace(arch, n_covariates=0)
    if arch.max_len is None:
        arch = replace(arch, max_len=int(p.lengths.max()))
    X = _check_inputs(p, arch, covariates)
    data = _encode(p, p.vocab, arch, arch.max_len, X=X, y=y)

    if cfg.valid_idx is not None:
        valid = np.asarray(cfg.valid_idx, dtype=np.int64)
    elif isinstance(index_valid, float):
        if not 0 <= index_valid < 1:
            raise ValueError("validation proportion must be in [0, 1)")
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 4]))
        valid = np.sort(rng.permutation(n)[: int(round(n * index_valid))])
    else:
        valid = np.asarray(index_valid, dtype=np.int64)
    if valid.size and (valid.min() < 0 or valid.max() >= n):
        raise DataError("validation index out of range")
    train_idx = np.asarray(cfg.train_idx, dtype=np.int64) if cfg.train_idx is not None else np.setdiff1d(np.arange(n), valid)
    cfg = replace(cfg, train_idx=train_idx, valid_idx=valid)

    net = SeqNet(arch, len(p.vocab))
    fit: TrainResult = train(net, data, cfg)
    return SeqmModel(arch, p.vocab, fit.params, fit.history, extra={"best_epoch": fit.best_epoch, "diverged": fit.diverged})


def seqm_predict(model: SeqmModel, new_p: ProcessSet, new_X=None, chunk: int = 256) -> np.ndarray:
    """Probabilities of a positive response (binary) or expected responses (scale)."""
    X = _check_inputs(new_p, model.arch, new_X)
    data = _encode(new_p, model.vocab, model.arch, model.max_len, X=X, warn_unknown=True)
    net = model.net()
    out = [net.predict_raw(model.coefficients, data.batch(np.arange(s, min(s + chunk, len(data))))) for s in range(0, len(data), chunk)]
    return np.concatenate(out) if out else np.zeros(0)
