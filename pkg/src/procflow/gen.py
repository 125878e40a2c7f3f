"""Synthetic process generators.

Randomness comes from numpy's PCG64 bit generator.  A single seed is spread
into one independent child stream per process with ``SeedSequence.spawn``,
so process ``i`` depends only on ``(seed, i)`` and generation order or
parallelism cannot change the output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ProcessSet
from .errors import DataError
from .nn import layers as F
from .nn.params import NetParams

MAX_LEN = 1000


@dataclass(frozen=True)
class TimeModel:
    """Inter-arrival time distribution: ``exponential`` (rate), ``lognormal`` (mu, sigma) or ``constant`` (c)."""

    distribution: str = "exponential"
    rate: float = 1.0
    mu: float = 1.0
    sigma: float = 1.0
    c: float = 1.0
    include_time: bool = True

    def __post_init__(self):
        if self.distribution not in ("exponential", "lognormal", "constant"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.rate <= 0 or self.mu <= 0 or self.sigma <= 0 or self.c <= 0:
            raise ValueError("time model parameters must be strictly positive")

    def gaps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.distribution == "exponential":
            return rng.exponential(1.0 / self.rate, size=n)
        if self.distribution == "lognormal":
            return rng.lognormal(self.mu, self.sigma, size=n)
        return np.full(n, self.c)


NO_TIME = TimeModel(include_time=False)


def _streams(n: int, seed) -> list[np.random.Generator]:
    if n < 1:
        raise ValueError("n must be at least 1")
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def _assemble(seqs, rngs, time: TimeModel) -> ProcessSet:
    times = None
    if time.include_time:
        times = [np.cumsum(time.gaps(rng, len(s))) for s, rng in zip(seqs, rngs)]
    return ProcessSet.from_sequences([str(i + 1) for i in range(len(seqs))], seqs, times)


def seq_gen(
    n: int,
    c1: int = 3,
    c2: int = 3,
    p_continue: float = 0.5,
    time: TimeModel = NO_TIME,
    seed=None,
    checks: Sequence[str] = ("A", "B", "C", "D"),
) -> ProcessSet:
    """Processes resembling a two-condition simulated-experiment item.

    Each process is ``Start``, then ``G ~ Geometric`` rounds of
    ``OPT1_i, OPT2_j, RUN`` (``P(G = g) = p^g (1 - p)``, i and j uniform),
    then with probability 1/2 one ``CHECK_X``, then ``End``.
    """
    if not 0 < p_continue < 1:
        raise ValueError("p_continue must lie strictly between 0 and 1")
    if c1 < 1 or c2 < 1:
        raise ValueError("c1 and c2 must be positive")
    rngs = _streams(n, seed)
    seqs = []
    for rng in rngs:
        s = ["Start"]
        while rng.random() < p_continue:
            s += [f"OPT1_{rng.integers(1, c1 + 1)}", f"OPT2_{rng.integers(1, c2 + 1)}", "RUN"]
        if rng.random() < 0.5:
            s.append(f"CHECK_{checks[rng.integers(len(checks))]}")
        s.append("End")
        seqs.append(s)
    return _assemble(seqs, rngs, time)


@dataclass(frozen=True)
class MarkovSpec:
    vocab: tuple[str, ...]
    P: np.ndarray
    start: int = 0
    terminal: int = -1

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        N = len(self.vocab)
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "terminal", self.terminal % N)
        if P.shape != (N, N):
            raise DataError(f"transition matrix must be {N}x{N}, got {P.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise DataError("transition matrix rows must be probability vectors")
        if not 0 <= self.start < N:
            raise DataError("start index out of range")
        if not self._reachable():
            raise DataError("terminal action is unreachable from the start action")

    def _reachable(self) -> bool:
        seen, frontier = {self.start}, [self.start]
        while frontier:
            i = frontier.pop()
            if i == self.terminal:
                return True
            for j in np.flatnonzero(self.P[i] > 0):
                if j not in seen:
                    seen.add(int(j))
                    frontier.append(int(j))
        return False


def seq_gen2(n: int, spec: MarkovSpec, time: TimeModel = NO_TIME, seed=None, max_len: int = MAX_LEN) -> ProcessSet:
    """Markov-chain processes from ``spec.start`` up to and including the first terminal action."""
    rngs = _streams(n, seed)
    cdf = np.cumsum(spec.P, axis=1)
    seqs, capped = [], 0
    for rng in rngs:
        s = [spec.start]
        while s[-1] != spec.terminal:
            if len(s) >= max_len:
                capped += 1
                break
            j = int(np.searchsorted(cdf[s[-1]], rng.random(), side="right"))
            s.append(min(j, len(spec.vocab) - 1))
        seqs.append([spec.vocab[k] for k in s])
    if capped:
        warnings.warn(f"seq_gen2: {capped} chains hit the length cap {max_len}", stacklevel=2)
    return _assemble(seqs, rngs, time)


def random_rnn_params(n_action: int, K: int = 10, seed=None) -> NetParams:
    """Random GRU generator parameters: ``emb``, ``rnn.{W,U,b}``, ``head.{W,b}``."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    p = NetParams()
    p["emb"] = rng.standard_normal((n_action, K))
    F.rnn_init(p, "rnn", "gru", K, K, rng)
    p["head.W"] = rng.standard_normal((K, n_action))
    p["head.b"] = np.zeros(n_action)
    return p


def seq_gen3(
    n: int,
    vocab: Sequence[str] | int = 10,
    params: NetParams | None = None,
    terminal: int = -1,
    time: TimeModel = NO_TIME,
    seed=None,
    K: int = 10,
    max_len: int = MAX_LEN,
) -> ProcessSet:
    """Processes sampled from a GRU language model.

    ``S_1 ~ softmax(head(0))`` and ``S_t ~ softmax(head(h_{t-1}))`` where
    ``h`` is the GRU state over the embeddings of the actions so far; sampling
    stops at the terminal action.
    """
    if isinstance(vocab, int):
        vocab = [f"A{k + 1}" for k in range(vocab)]
    vocab = list(vocab)
    N = len(vocab)
    if params is None:
        params = random_rnn_params(N, K, seed=None if seed is None else [seed, 7])
    emb, W, U, b = params["emb"], params["rnn.W"], params["rnn.U"], params["rnn.b"]
    hW, hb = params["head.W"], params["head.b"]
    Kh = U.shape[0]
    if emb.shape[0] != N or hW.shape[1] != N or hb.shape != (N,):
        raise DataError(f"generator parameters do not match a vocabulary of {N} actions")
    if W.shape != (emb.shape[1], 3 * Kh) or U.shape != (Kh, 3 * Kh) or hW.shape[0] != Kh:
        raise DataError("generator parameter shapes are inconsistent")
    terminal %= N
    rngs = _streams(n, seed)
    seqs, capped = [], 0
    for rng in rngs:
        h = np.zeros(Kh)
        s: list[int] = []
        while True:
            prob = F.softmax(h @ hW + hb)
            a = int(min(np.searchsorted(np.cumsum(prob), rng.random(), side="right"), N - 1))
            s.append(a)
            if a == terminal:
                break
            if len(s) >= max_len:
                capped += 1
                break
            h = F.gru_step(params, "rnn", emb[a], h)
        seqs.append([vocab[k] for k in s])
    if capped:
        warnings.warn(f"seq_gen3: {capped} sequences hit the length cap {max_len}", stacklevel=2)
    return _assemble(seqs, rngs, time)
