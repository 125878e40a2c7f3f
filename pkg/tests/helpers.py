"""Shared generators and oracles for the test suite."""

import itertools

import numpy as np

from procflow.core import ProcessSet

LABEL_POOL = ["a", "b", "click", 'say "hi"', "x y", "näive", "semi;colon", "comma,in", "new\nline", "1_1_1", "END"]


def random_set(rng: np.random.Generator, n_max=50, len_max=12, with_times=None, forbid=""):
    n = int(rng.integers(1, n_max + 1))
    pool = [lab for lab in LABEL_POOL if not any(c in lab for c in forbid)]
    if with_times is None:
        with_times = bool(rng.integers(2))
    ids = [f"id{k}" if k % 3 else f'r,"{k}"' for k in rng.permutation(n * 2)[:n]]
    seqs, times = [], []
    for _ in range(n):
        L = int(rng.integers(1, len_max + 1))
        seqs.append([pool[k] for k in rng.integers(len(pool), size=L)])
        gaps = rng.exponential(10.0, size=L) * (rng.random(L) > 0.1)
        times.append(np.cumsum(gaps * rng.choice([1e-3, 1.0, 1e3])))
    return ProcessSet.from_sequences(ids, seqs, times if with_times else None)


def brute_oss_cost(a, b):
    """Minimum total displacement over all injective same-symbol matchings of maximum size.

    Exhaustive over permutations within each symbol, so it is an independent
    check that sorted (k-th with k-th) pairing is optimal.
    """
    total = 0
    for sym in set(a) & set(b):
        p = [k for k, s in enumerate(a) if s == sym]
        q = [k for k, s in enumerate(b) if s == sym]
        if len(p) > len(q):
            p, q = q, p
        total += min(sum(abs(x - y) for x, y in zip(p, perm)) for perm in itertools.permutations(q, len(p)))
    return total


def brute_oss_action(a, b):
    matched = sum(min(a.count(s), b.count(s)) for s in set(a) & set(b))
    cost = brute_oss_cost(a, b) / max(len(a), len(b))
    return (cost + len(a) + len(b) - 2 * matched) / (len(a) + len(b))


def euclid(X):
    diff = X[:, None, :] - X[None, :, :]
    D = np.sqrt((diff * diff).sum(-1))
    D = np.triu(D, 1)
    return D + D.T


def grad_check(model, params, batch, h=1e-6):
    """Largest per-tensor relative error between analytic and central-difference gradients.

    Relative error of a tensor is ``||g - fd|| / max(||g||, ||fd||)``; tensors
    whose gradients are both (numerically) zero count as exact.
    """
    _, g = model.loss_and_grad(params, batch)
    worst = {}
    for name, w in params.items():
        fd = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            old = w[ix]
            w[ix] = old + h
            fp = model.loss(params, batch)
            w[ix] = old - h
            fm = model.loss(params, batch)
            w[ix] = old
            fd[ix] = (fp - fm) / (2 * h)
        scale = max(np.linalg.norm(g[name]), np.linalg.norm(fd))
        worst[name] = 0.0 if scale < 1e-10 else float(np.linalg.norm(g[name] - fd) / scale)
    return worst


def small_process_set(seed=0, n=3, n_action=4, len_max=5):
    rng = np.random.default_rng(seed)
    vocab = [f"a{k}" for k in range(n_action)]
    seqs, times = [], []
    for i in range(n):
        L = len_max if i == 0 else int(rng.integers(2, len_max + 1))
        seqs.append([vocab[k] for k in rng.integers(n_action, size=L)])
        times.append(np.cumsum(rng.exponential(2.0, size=L) + 0.1))
    seqs[0][:n_action] = vocab[: min(n_action, len(seqs[0]))]
    return ProcessSet.from_sequences([str(i) for i in range(n)], seqs, times)


def ae_instance(ae_type, cell, method="last", K=3, seed=0):
    from procflow.seqae import SeqAE, SeqAEArchitecture, prepare_data

    p = small_process_set(seed)
    arch = SeqAEArchitecture(ae_type=ae_type, K=K, rnn_type=cell, method=method, w_action=0.7, w_time=0.3)
    model = SeqAE(arch, len(p.vocab))
    params = model.init_params(np.random.default_rng(seed))
    if "head_time.b" in params:
        params["head_time.b"][:] = 1.0  # keep the ReLU head away from its kink
    batch = prepare_data(p, arch).batch(np.arange(len(p)))
    return model, params, batch


def seqm_instance(cell, covariates=False, time=False, interval=False, hidden=(), response="binary", K=3, seed=0):
    from procflow.seqm import SeqmArchitecture, SeqNet, _encode

    p = small_process_set(seed)
    rng = np.random.default_rng(seed + 100)
    X = rng.standard_normal((len(p), 2)) if covariates else None
    y = rng.integers(0, 2, len(p)).astype(float) if response == "binary" else rng.standard_normal(len(p))
    arch = SeqmArchitecture(response_type=response, K_emb=K, K_rnn=K, rnn_type=cell, include_time=time, time_interval=interval,
                            n_hidden=len(hidden), K_hidden=hidden, n_covariates=2 if covariates else 0, max_len=5)
    net = SeqNet(arch, len(p.vocab))
    params = net.init_params(np.random.default_rng(seed))
    batch = _encode(p, p.vocab, arch, 5, X=X, y=y).batch(np.arange(len(p)))
    return net, params, batch


def two_cluster_corpus(n_each=50, seed=0):
    """Two Markov chains over disjoint vocabularies; returns the set and 0/1 cluster labels."""
    from procflow import gen

    out_seqs = []
    for c, prefix in enumerate("xy"):
        rng = np.random.default_rng([seed, c])
        P = rng.dirichlet(np.ones(5), size=5)
        P[-1] = 0.0
        P[-1, -1] = 1.0
        spec = gen.MarkovSpec(tuple(f"{prefix}{k}" for k in range(5)), P)
        out_seqs += gen.seq_gen2(n_each, spec, seed=[seed, c, 1], max_len=1000).action_seqs()
    ids = [f"c{k // n_each}_{k % n_each}" for k in range(2 * n_each)]
    return ProcessSet.from_sequences(ids, out_seqs), np.repeat([0.0, 1.0], n_each)


def planted_corpus(n=1000, seed=0, n_action=6, marker="T"):
    """Random sequences; every odd-indexed one contains ``marker`` once at a random position."""
    rng = np.random.default_rng(seed)
    base = [f"a{k}" for k in range(n_action)]
    seqs, times = [], []
    for i in range(n):
        L = int(rng.integers(3, 16))
        s = [base[k] for k in rng.integers(n_action, size=L)]
        if i % 2:
            s.insert(int(rng.integers(L + 1)), marker)
        seqs.append(s)
        times.append(np.cumsum(rng.exponential(1.0, size=len(s))))
    return ProcessSet.from_sequences([str(i) for i in range(n)], seqs, times), (np.arange(n) % 2).astype(float)
