import subprocess
import sys

import numpy as np
import pytest

from procflow import cli, gen, io
from procflow.core import ProcessSet
from procflow.errors import DataError, NumericError
from procflow.features import read_features


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    kv = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    return code, kv, err


@pytest.fixture()
def corpus(tmp_path):
    path = tmp_path / "p.csv"
    io.write_seqs(gen.seq_gen(40, time=gen.TimeModel(), seed=1), path)
    return path


def test_summarize(capsys, corpus, tmp_path):
    code, kv, err = run(capsys, "summarize", corpus, "--trans-out", tmp_path / "t.csv")
    p = io.read_seqs(corpus)
    assert code == 0
    assert kv["n_seq"] == "40" and int(kv["n_action"]) == len(p.vocab)
    assert (int(kv["len_min"]), int(kv["len_max"])) == (p.lengths.min(), p.lengths.max())
    assert "action" in err and "freq" in err
    rows = (tmp_path / "t.csv").read_text().splitlines()[1:]
    sums = [sum(float(x) for x in r.split(",")[1:]) for r in rows]
    assert all(s == pytest.approx(1.0) or s == 0 for s in sums)


def test_summarize_empty_file_is_data_error(capsys, tmp_path):
    (tmp_path / "e.csv").write_text("")
    assert run(capsys, "summarize", tmp_path / "e.csv")[0] == 3


def test_exit_codes(capsys, corpus, tmp_path):
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "summarize")[0] == 2
    assert run(capsys, "summarize", tmp_path / "missing.csv")[0] == 3
    assert run(capsys, "mds", corpus, "-o", tmp_path / "f.csv")[0] == 2  # no --seed
    assert run(capsys, "mds", corpus, "-o", tmp_path / "f.csv", "--k", 0, "--seed", 1)[0] == 2
    assert run(capsys, "dist", corpus, tmp_path / "d.csv", "--measure", "oss_both")[0] == 0
    notimes = tmp_path / "nt.csv"
    io.write_seqs(gen.seq_gen(5, seed=0), notimes)
    assert run(capsys, "dist", notimes, tmp_path / "d2.csv", "--measure", "oss_both")[0] == 3


@pytest.mark.parametrize("exc,code", [(NumericError("nan"), 4), (DataError("bad"), 3), (ValueError("bad"), 2), (OSError("disk"), 3)])
def test_error_to_exit_code_mapping(capsys, monkeypatch, corpus, exc, code):
    def boom(args):
        raise exc

    monkeypatch.setattr(cli, "cmd_summarize", boom)
    got, kv, err = run(capsys, "summarize", corpus)
    assert got == code and not kv and "error" in err


def _crafted(tmp_path):
    path = tmp_path / "c.csv"
    io.write_seqs(ProcessSet.from_sequences(["1"], [["a", "b", "c"]]), path)
    return path


def _clean(capsys, tmp_path, src, script, name):
    (tmp_path / f"{name}.ops").write_text(script)
    out = tmp_path / f"{name}.csv"
    assert run(capsys, "clean", src, out, "--ops", tmp_path / f"{name}.ops")[0] == 0
    return io.read_seqs(out)


def test_clean_script_order_matters(capsys, tmp_path):
    src = _crafted(tmp_path)
    one = _clean(capsys, tmp_path, src, "remove_action a\nreplace b a\n", "one")
    two = _clean(capsys, tmp_path, src, "replace b a\nremove_action a\n", "two")
    assert one.action_seqs() == [["a", "c"]] and two.action_seqs() == [["c"]]


def test_clean_empty_script_is_copy_and_remove_repeat(capsys, tmp_path):
    p = ProcessSet.from_sequences(["1", "2"], [["x", "x", "y"], ['q "z"', "q", "q"]], [[1.0, 2.0, 3.0], [0.5, 1.0, 2.0]])
    src = tmp_path / "s.csv"
    io.write_seqs(p, src)
    assert _clean(capsys, tmp_path, src, "# nothing\n\n", "copy") == p
    from procflow.core import remove_repeat

    assert _clean(capsys, tmp_path, src, "remove_repeat\n", "rr") == remove_repeat(p)
    assert _clean(capsys, tmp_path, src, "combine XY x y\nreplace 'q \"z\"' w\n", "comb").action_seqs() == [["x", "XY"], ["w", "q", "q"]]


def test_bad_ops_script(capsys, tmp_path):
    src = _crafted(tmp_path)
    (tmp_path / "bad.ops").write_text("explode a\n")
    assert run(capsys, "clean", src, tmp_path / "o.csv", "--ops", tmp_path / "bad.ops")[0] == 3
    (tmp_path / "bad2.ops").write_text("replace a\n")
    assert run(capsys, "clean", src, tmp_path / "o.csv", "--ops", tmp_path / "bad2.ops")[0] == 3


def test_style_conversion(capsys, corpus, tmp_path):
    out = tmp_path / "single.csv"
    assert run(capsys, "clean", corpus, out, "--out-style", "single")[0] == 0
    assert io.read_seqs(out, io.CsvStyleSpec("single")) == io.read_seqs(corpus)


def test_piped_dist_then_mds_equals_one_shot(capsys, corpus, tmp_path):
    run(capsys, "dist", corpus, tmp_path / "d.csv")
    c1, kv1, _ = run(capsys, "mds", "--dist", tmp_path / "d.csv", "-o", tmp_path / "a.csv", "--k", 4, "--seed", 0)
    c2, kv2, _ = run(capsys, "mds", corpus, "-o", tmp_path / "b.csv", "--k", 4, "--seed", 0, "--dist-out", tmp_path / "d2.csv")
    assert c1 == c2 == 0 and kv1["loss"] == kv2["loss"]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "d.csv").read_bytes() == (tmp_path / "d2.csv").read_bytes()
    fm = read_features(tmp_path / "a.csv")
    assert fm.shape == (40, 4) and kv1["k"] == "4" and kv1["n"] == "40"


def test_choosek_mds(capsys, tmp_path):
    X = np.random.default_rng(0).standard_normal((40, 2))
    from procflow.dissim import DissimilarityMatrix, write_matrix

    D = np.linalg.norm(X[:, None] - X[None], axis=-1)
    write_matrix(DissimilarityMatrix((D + D.T) / 2), tmp_path / "d.csv")
    code, kv, err = run(capsys, "choosek-mds", "--dist", tmp_path / "d.csv", "--k-cand", "1:4", "--folds", 4, "--seed", 2)
    assert code == 0 and kv["k"] == "2" and kv["k_cand"] == "1,2,3,4" and len(kv["cv_loss"].split(",")) == 4
    assert "cv_loss" in err


def test_config_file_and_override(capsys, corpus, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# ae settings\nk = 3\nepochs = 2\nrnn-type = gru\nseed = 4\npca = false\n")
    code, kv, _ = run(capsys, "ae", corpus, "-o", tmp_path / "a.csv", "--config", cfg)
    assert code == 0 and kv["k"] == "3"
    assert read_features(tmp_path / "a.csv").columns[0] == "F1"
    code, kv, _ = run(capsys, "ae", corpus, "-o", tmp_path / "b.csv", "--config", cfg, "--k", 2, "--pca")
    assert code == 0 and kv["k"] == "2" and read_features(tmp_path / "b.csv").columns[0] == "PC1"


def test_config_errors(capsys, corpus, tmp_path):
    (tmp_path / "u.cfg").write_text("colour = blue\n")
    assert run(capsys, "summarize", corpus, "--config", tmp_path / "u.cfg")[0] == 2
    (tmp_path / "b.cfg").write_text("pca = maybe\nseed = 1\n")
    assert run(capsys, "mds", corpus, "-o", tmp_path / "x.csv", "--config", tmp_path / "b.cfg")[0] == 2
    (tmp_path / "n.cfg").write_text("just words\n")
    assert run(capsys, "summarize", corpus, "--config", tmp_path / "n.cfg")[0] == 2
    assert run(capsys, "summarize", corpus, "--config", tmp_path / "absent.cfg")[0] == 2


def test_ae_determinism_and_seed_change(capsys, corpus, tmp_path):
    common = ["ae", corpus, "--k", 3, "--epochs", 3, "--rnn-type", "gru"]
    outs = {}
    for tag, seed in (("a", 1), ("b", 1), ("c", 2)):
        code, _, _ = run(capsys, *common, "-o", tmp_path / f"{tag}.csv", "--seed", seed,
                         "--model-out", tmp_path / f"{tag}.m", "--history-out", tmp_path / f"{tag}.h")
        assert code == 0
        outs[tag] = [(tmp_path / f"{tag}.{ext}").read_bytes() for ext in ("csv", "m", "h")]
    assert outs["a"] == outs["b"]
    assert outs["a"][0] != outs["c"][0]
    assert read_features(tmp_path / "a.csv").shape == read_features(tmp_path / "c.csv").shape == (40, 3)


def test_choosek_ae(capsys, corpus):
    code, kv, _ = run(capsys, "choosek-ae", corpus, "--k-cand", "1,2", "--folds", 2, "--epochs", 1, "--seed", 0, "--rnn-type", "gru")
    assert code == 0 and kv["k"] in ("1", "2")


def test_seqm_fit_and_predict(capsys, tmp_path):
    from helpers import planted_corpus

    p, y = planted_corpus(120, seed=0)
    io.write_seqs(p, tmp_path / "p.csv")
    (tmp_path / "y.csv").write_text("id,y\n" + "".join(f"{i},{int(v)}\n" for i, v in zip(p.ids, y)))
    (tmp_path / "x.csv").write_text("id,x1\n" + "".join(f"{i},{k % 3}\n" for k, i in enumerate(p.ids)))
    args = ["seqm-fit", tmp_path / "p.csv", "--response", tmp_path / "y.csv", "--model-out", tmp_path / "m.txt",
            "--k-emb", 4, "--k-rnn", 4, "--rnn-type", "gru", "--epochs", 3, "--seed", 0, "--include-time",
            "--covariates", tmp_path / "x.csv", "--k-hidden", "3", "--history-out", tmp_path / "h.csv"]
    code, kv, _ = run(capsys, *args)
    assert code == 0 and "gru(4)" in kv["structure"] and "+covariates(1)" in kv["structure"]
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 4
    code, kv, _ = run(capsys, "seqm-predict", tmp_path / "m.txt", tmp_path / "p.csv", "--covariates", tmp_path / "x.csv", "-o", tmp_path / "pred.csv")
    assert code == 0 and kv["n"] == "120"
    vals = [float(r.split(",")[1]) for r in (tmp_path / "pred.csv").read_text().splitlines()[1:]]
    assert all(0 < v < 1 for v in vals)
    assert run(capsys, "seqm-predict", tmp_path / "m.txt", tmp_path / "p.csv", "-o", tmp_path / "q.csv")[0] == 3
    (tmp_path / "y2.csv").write_text("id,y\n1,1\n")
    args[3] = tmp_path / "y2.csv"
    assert run(capsys, *args)[0] == 3


def test_gen_generators(capsys, tmp_path):
    code, kv, _ = run(capsys, "gen", tmp_path / "g1.csv", "--n", 10, "--seed", 3)
    assert code == 0 and kv["n"] == "10" and io.read_seqs(tmp_path / "g1.csv").has_times
    (tmp_path / "mk.csv").write_text("from,s,a,e\ns,0,1,0\na,0,0.5,0.5\ne,0,0,1\n")
    code, _, _ = run(capsys, "gen", tmp_path / "g2.csv", "--generator", 2, "--markov", tmp_path / "mk.csv", "--seed", 1, "--time-dist", "none")
    q = io.read_seqs(tmp_path / "g2.csv")
    assert code == 0 and not q.has_times and all(s[0] == "s" and s[-1] == "e" for s in q.action_seqs())
    code, kv, _ = run(capsys, "gen", tmp_path / "g3.csv", "--generator", 3, "--n-action", 5, "--k", 4, "--max-len", 30, "--seed", 1,
                      "--time-dist", "lognormal", "--style", "single")
    assert code == 0 and len(io.read_seqs(tmp_path / "g3.csv", io.CsvStyleSpec("single"))) == 100
    assert run(capsys, "gen", tmp_path / "g4.csv", "--generator", 2, "--seed", 1)[0] == 2
    run(capsys, "gen", tmp_path / "again.csv", "--n", 10, "--seed", 3)
    assert (tmp_path / "g1.csv").read_bytes() == (tmp_path / "again.csv").read_bytes()


def test_logistic_command(capsys, tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((100, 2))
    y = (X[:, 0] + 0.5 * rng.standard_normal(100) > 0).astype(int)
    from procflow.features import FeatureMatrix, write_features

    ids = tuple(f"s{i}" for i in range(100))
    write_features(FeatureMatrix(X, ids=ids), tmp_path / "f.csv")
    (tmp_path / "l.csv").write_text("id,label\n" + "".join(f"{i},{v}\n" for i, v in zip(reversed(ids), y[::-1])))
    code, kv, _ = run(capsys, "logistic", tmp_path / "f.csv", tmp_path / "l.csv", "--seed", 0)
    assert code == 0 and kv["n_test"] == "20" and kv["n_train"] == "80"
    assert float(kv["accuracy"]) >= 0.7 and 0.5 <= float(kv["majority"]) <= 1
    assert len(kv["coefficients"].split(",")) == 3
    (tmp_path / "bad.csv").write_text("id,label\n" + "".join(f"{i},maybe\n" for i in ids))
    assert run(capsys, "logistic", tmp_path / "f.csv", tmp_path / "bad.csv", "--seed", 0)[0] == 3


def test_mds_large_method_via_cli(capsys, corpus, tmp_path):
    code, kv, _ = run(capsys, "mds", corpus, "-o", tmp_path / "f.csv", "--k", 2, "--method", "large", "--m", 10, "--seed", 5)
    assert code == 0 and kv["method"] == "large"
    assert read_features(tmp_path / "f.csv").shape == (40, 2)


def test_console_entry_point(corpus):
    res = subprocess.run([sys.executable, "-m", "procflow.cli", "summarize", str(corpus)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("n_seq=40")
