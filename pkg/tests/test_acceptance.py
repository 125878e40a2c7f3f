"""Acceptance criteria 1-10.  ``conftest.py`` prints one ``CRITERION n: PASS/FAIL/SKIP`` line each."""

import contextlib
import io as pyio
import itertools
import os
import time
import warnings

import numpy as np
import pytest

from helpers import ae_instance, euclid, grad_check, planted_corpus, random_set, seqm_instance, two_cluster_corpus
from procflow import cli, core, gen, io
from procflow.core import ProcessSet, sub_seqs
from procflow.dissim import dissimilarity_matrix
from procflow.logistic import fit_logistic
from procflow.mds import MdsConfig, chooseK_mds, mds_classical, mds_large, placement_objective, seq2feature_mds
from procflow.nn.train import TrainConfig
from procflow.seqae import SeqAEArchitecture, seq2feature_seq2seq
from procflow.seqm import SeqmArchitecture, seqm_fit, seqm_predict


class Clock:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.1f}s, limit {self.limit}s"


# -- 1 ---------------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_c1_io_round_trip(tmp_path):
    with Clock(5):
        for k in range(200):
            rng = np.random.default_rng([1, k])
            sep = "|" if k % 2 else ","
            p = random_set(rng, n_max=50, forbid=sep)
            single = io.CsvStyleSpec("single", step_sep=sep)
            multi = io.CsvStyleSpec("multiple")
            io.write_seqs(p, tmp_path / "s.csv", single)
            io.write_seqs(p, tmp_path / "m.csv", multi)
            a = io.read_seqs(tmp_path / "s.csv", single)
            b = io.read_seqs(tmp_path / "m.csv", multi)
            assert a == p and b == p and a == b
            assert a.vocab == p.vocab and a.ids == p.ids
            for x, y in zip(a.actions, p.actions):
                assert np.array_equal(x, y)
            if p.has_times:
                for x, y in zip(a.times, p.times):
                    assert np.array_equal(x, y)
            else:
                assert not a.has_times


# -- 2 ---------------------------------------------------------------------------------

def _subset_cost_table(L=6):
    """Brute-force optimal matching cost between every pair of position subsets of range(L)."""
    subsets = [[k for k in range(L) if m >> k & 1] for m in range(1 << L)]
    T = np.zeros((1 << L, 1 << L))
    for a, p in enumerate(subsets):
        for b, q in enumerate(subsets):
            small, big = (p, q) if len(p) <= len(q) else (q, p)
            if small:
                T[a, b] = min(sum(abs(x - y) for x, y in zip(small, perm)) for perm in itertools.permutations(big, len(small)))
    return T


@pytest.mark.criterion(2)
def test_c2_oss_properties_and_oracle():
    with Clock(30):
        rng = np.random.default_rng(2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # a few chains hit the length cap
            p = gen.seq_gen3(400, vocab=5, seed=2, max_len=30, time=gen.TimeModel())
        pairs = rng.integers(0, len(p), size=(1000, 2))
        for measure in ("oss_action", "oss_both"):
            fwd = dissimilarity_matrix(p, measure, pairs=pairs)
            rev = dissimilarity_matrix(p, measure, pairs=pairs[:, ::-1])
            diag = dissimilarity_matrix(p, measure, pairs=np.column_stack([pairs[:, 0], pairs[:, 0]]))
            assert np.array_equal(fwd, rev)
            assert np.all(diag == 0)
            assert fwd.min() >= 0 and fwd.max() <= 1

        seqs = [s for L in range(1, 7) for s in itertools.product("abc", repeat=L)]
        q = ProcessSet.from_sequences([str(i) for i in range(len(seqs))], [list(s) for s in seqs])
        D = dissimilarity_matrix(q, "oss_action").values
        masks = np.array([[sum(1 << k for k, x in enumerate(s) if x == c) for c in "abc"] for s in seqs])
        T = _subset_cost_table()
        L = np.array([len(s) for s in seqs], dtype=float)
        cost = sum(T[np.ix_(masks[:, c], masks[:, c])] for c in range(3))
        pop = np.array([[bin(m).count("1") for m in row] for row in masks])
        matched = sum(np.minimum(pop[:, None, c], pop[None, :, c]) for c in range(3))
        Li, Lj = L[:, None], L[None, :]
        oracle = (cost / np.maximum(Li, Lj) + Li + Lj - 2 * matched) / (Li + Lj)
        assert D.shape == (1092, 1092)
        np.testing.assert_allclose(D, oracle, rtol=0, atol=1e-14)


# -- 3 ---------------------------------------------------------------------------------

@pytest.mark.criterion(3)
def test_c3_mds_exactness():
    with Clock(10):
        X = np.random.default_rng(3).standard_normal((50, 3))
        D = euclid(X)
        th = mds_classical(D, 3).theta
        assert np.max(np.abs(D - euclid(th))) < 1e-8
        res = mds_large(D, 3, MdsConfig(K=3, m=20, seed=0))
        assert np.max(np.abs(D - euclid(res.theta.theta))) < 1e-3


# -- 4 ---------------------------------------------------------------------------------

@pytest.mark.criterion(4)
def test_c4_placement_gradient():
    rng = np.random.default_rng(4)
    h = 1e-6
    for _ in range(100):
        K = int(rng.integers(1, 6))
        A = rng.standard_normal((int(rng.integers(K + 1, 30)), K)) * rng.uniform(0.5, 3)
        d = rng.uniform(0, 4, size=A.shape[0])
        x = rng.standard_normal(K) * 2
        assert np.min(np.linalg.norm(A - x, axis=1)) > 1e-3
        _, g = placement_objective(x, d, A)
        fd = np.array([(placement_objective(x + h * e, d, A)[0] - placement_objective(x - h * e, d, A)[0]) / (2 * h) for e in np.eye(K)])
        assert np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd)) < 1e-5


# -- 5 ---------------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_c5_neural_gradients():
    with Clock(120):
        cases = []
        for cell in ("gru", "lstm"):
            for ae_type in ("action", "time", "both"):
                for method in ("last", "avg"):
                    cases.append((f"seqae-{ae_type}-{method}-{cell}", ae_instance(ae_type, cell, method, K=3)))
            for cov in (False, True):
                for t in (False, True):
                    cases.append((f"seqm-cov{cov}-time{t}-{cell}", seqm_instance(cell, covariates=cov, time=t, K=3)))
            cases.append((f"seqm-interval-hidden-{cell}", seqm_instance(cell, True, True, True, hidden=(3, 2), K=4)))
            cases.append((f"seqm-scale-{cell}", seqm_instance(cell, response="scale", K=4)))
        for name, (model, params, batch) in cases:
            assert batch.actions.shape[1] <= 5
            err = grad_check(model, params, batch)
            assert max(err.values()) < 1e-4, (name, err)


# -- 6 ---------------------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_c6_seqae_learning():
    with Clock(300):
        p, y = two_cluster_corpus(50, seed=0)
        res = seq2feature_seq2seq(p, SeqAEArchitecture(ae_type="action", K=5), TrainConfig(n_epoch=100, seed=0))
        va = res.valid_loss
        assert va.shape == (100,) and np.all(np.isfinite(va))
        assert va[-1] <= 0.8 * va[0], f"validation loss {va[0]:.4f} -> {va[-1]:.4f}"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_logistic(res.theta, y)
        assert fit.accuracy >= 0.9


# -- 7 ---------------------------------------------------------------------------------

@pytest.mark.criterion(7)
def test_c7_seqm_planted_signal():
    with Clock(300):
        p, y = planted_corpus(1000, seed=7)
        tr, te = np.arange(800), np.arange(800, 1000)
        assert max(y[te].mean(), 1 - y[te].mean()) == 0.5
        model = seqm_fit(sub_seqs(p, tr), y[tr], arch=SeqmArchitecture(), cfg=TrainConfig(n_epoch=20, seed=0))
        prob = seqm_predict(model, sub_seqs(p, te))
        assert np.mean((prob > 0.5) == (y[te] == 1)) >= 0.95


# -- 8 ---------------------------------------------------------------------------------

@pytest.mark.criterion(8)
def test_c8_choosek_mds_recovery():
    with Clock(120):
        picks = []
        for s in range(10):
            D = euclid(np.random.default_rng([8, s]).standard_normal((100, 3)))
            picks.append(chooseK_mds(D, range(1, 7), n_fold=5, seed=s)["K"])
        assert sum(k in (3, 4) for k in picks) >= 8, picks


# -- 9 ---------------------------------------------------------------------------------

def _run(argv, d):
    buf = pyio.StringIO()
    with contextlib.redirect_stdout(buf), contextlib.redirect_stderr(pyio.StringIO()):
        code = cli.main([str(a) for a in argv])
    assert code == 0, argv
    return buf.getvalue().replace(str(d), "<dir>")


def _labels(d, src, name):
    ids = io.read_seqs(d / src).ids
    (d / name).write_text("id,y\n" + "".join(f"{i},{k % 2}\n" for k, i in enumerate(ids)))


def _pipeline(d):
    """Every stochastic command, plus the deterministic ones feeding on their outputs."""
    d.mkdir()
    (d / "mk.csv").write_text("from,s,a,b,e\ns,0,0.5,0.5,0\na,0,0.2,0.4,0.4\nb,0,0.4,0.2,0.4\ne,0,0,0,1\n")
    (d / "ops").write_text("remove_repeat\n")
    gen_steps = [
        ["gen", d / "g1.csv", "--n", 60, "--seed", 1],
        ["gen", d / "g2.csv", "--generator", 2, "--markov", d / "mk.csv", "--n", 60, "--seed", 2],
        ["gen", d / "g3.csv", "--generator", 3, "--n", 60, "--n-action", 6, "--max-len", 40, "--seed", 3, "--time-dist", "lognormal"],
    ]
    steps = [
        ["clean", d / "g3.csv", d / "c.csv", "--ops", d / "ops"],
        ["summarize", d / "c.csv", "--trans-out", d / "trans.csv"],
        ["dist", d / "c.csv", d / "d.csv", "--measure", "oss_both", "--jobs", 3],
        ["mds", "--dist", d / "d.csv", "-o", d / "f_small.csv", "--k", 5, "--seed", 4],
        ["mds", d / "c.csv", "-o", d / "f_large.csv", "--k", 3, "--method", "large", "--m", 20, "--seed", 5],
        ["choosek-mds", "--dist", d / "d.csv", "--k-cand", "1:4", "--folds", 3, "--seed", 6],
        ["ae", d / "g1.csv", "-o", d / "f_ae.csv", "--k", 3, "--ae-type", "both", "--epochs", 3, "--seed", 7,
         "--model-out", d / "ae.m", "--history-out", d / "ae.h"],
        ["choosek-ae", d / "g1.csv", "--k-cand", "2,3", "--folds", 2, "--epochs", 2, "--seed", 8, "--rnn-type", "gru"],
        ["seqm-fit", d / "g1.csv", "--response", d / "y.csv", "--model-out", d / "sm.m", "--history-out", d / "sm.h",
         "--k-emb", 4, "--k-rnn", 4, "--epochs", 3, "--include-time", "--seed", 9],
        ["seqm-predict", d / "sm.m", d / "g1.csv", "-o", d / "pred.csv"],
        ["logistic", d / "f_small.csv", d / "y_c.csv", "--seed", 10],
    ]
    out = [_run(argv, d) for argv in gen_steps]
    _labels(d, "g1.csv", "y.csv")
    _labels(d, "g3.csv", "y_c.csv")
    out += [_run(argv, d) for argv in steps]
    files = {f.name: f.read_bytes() for f in sorted(d.iterdir())}
    return out, files


@pytest.mark.criterion(9)
def test_c9_determinism(tmp_path):
    out_a, files_a = _pipeline(tmp_path / "a")
    out_b, files_b = _pipeline(tmp_path / "b")
    assert out_a == out_b
    assert files_a.keys() == files_b.keys() and len(files_a) == 18
    for name in files_a:
        assert files_a[name] == files_b[name], name

    p = gen.seq_gen(80, time=gen.TimeModel(), seed=11)
    for measure in ("oss_action", "oss_both"):
        assert np.array_equal(dissimilarity_matrix(p, measure).values, dissimilarity_matrix(p, measure, n_jobs=4).values)
    runs = [seq2feature_mds(p, cfg=MdsConfig(K=3, method="large", m=15, seed=2)).theta.theta for _ in range(2)]
    assert np.array_equal(*runs)


# -- 10 --------------------------------------------------------------------------------

def _read_any_style(path):
    from procflow.errors import DataError

    try:
        return io.read_seqs(path, io.CsvStyleSpec("multiple"))
    except DataError:
        return io.read_seqs(path, io.CsvStyleSpec("single", step_sep=os.environ.get("PROCFLOW_CC_STEP_SEP", ",")))


@pytest.mark.criterion(10)
def test_c10_climate_control_case_study():
    data, labels = os.environ.get("PROCFLOW_CC_DATA"), os.environ.get("PROCFLOW_CC_LABELS")
    if not data or not labels:
        pytest.skip("set PROCFLOW_CC_DATA (process CSV, either style) and PROCFLOW_CC_LABELS (id,label CSV) to run")
    p = _read_any_style(data)
    y = cli._read_column(labels, p.ids, "label")[:, 0]
    rng = np.random.default_rng(12345)
    n = min(3000, len(p))
    idx = np.sort(rng.choice(len(p), n, replace=False))
    p, y = core.remove_repeat(sub_seqs(p, idx)), y[idx]
    res = seq2feature_mds(p, cfg=MdsConfig(K=60, method="small", seed=0))
    perm = rng.permutation(n)
    n_test = n // 6
    test, train = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_logistic(res.theta, y, train, test)
    assert abs(fit.accuracy - 0.80) <= 0.05, fit.accuracy
