"""Command-line front end: ``procflow <command> [options]``.

Results go to stdout as ``key=value`` lines; human-readable tables go to
stderr.  Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

Every command accepts ``--config FILE``, a flat text file of ``key = value``
lines (``#`` starts a comment; keys are option names with ``-`` or ``_``).
Flags given on the command line override the file; unknown keys are a usage
error.
"""

from __future__ import annotations

import argparse
import csv
import shlex
import sys
import warnings
from pathlib import Path

import numpy as np

from . import core, gen, io
from .dissim import dissimilarity_matrix, read_matrix, write_matrix
from .errors import DataError, NumericError
from .features import read_features, write_features
from .io import format_float

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


# -- helpers -------------------------------------------------------------------

def _emit(**kv) -> None:
    for k, v in kv.items():
        if isinstance(v, float):
            v = format_float(v)
        elif isinstance(v, (list, tuple, np.ndarray)):
            v = ",".join(format_float(x) if isinstance(x, (float, np.floating)) else str(x) for x in v)
        print(f"{k}={v}")


def _err(text: str) -> None:
    print(text, file=sys.stderr)


def _int_list(s: str) -> list[int]:
    """``"1,2,5"`` or ``"1:6"`` (inclusive range)."""
    out = []
    for part in s.split(","):
        part = part.strip()
        if ":" in part:
            a, b = part.split(":")
            out += list(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _style(args, prefix: str = "") -> io.CsvStyleSpec:
    get = lambda k: getattr(args, prefix + k, None) or getattr(args, k)  # noqa: E731
    return io.CsvStyleSpec(get("style"), get("id_var"), get("action_var"), get("time_var"), get("step_sep"))


def _read(args, path=None) -> core.ProcessSet:
    return io.read_seqs(path or args.input, _style(args))


def _read_column(path, ids, what: str, numeric: bool = True):
    """Second column of an ``id,value`` CSV (or more columns), aligned to ``ids``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataError(f"{path}: empty {what} file")
    table = {}
    for r in rows[1:]:
        if r[0] in table:
            raise DataError(f"{path}: duplicate id {r[0]!r}")
        table[r[0]] = r[1:]
    try:
        out = [table[i] for i in ids]
    except KeyError as exc:
        raise DataError(f"{path}: no {what} for id {exc.args[0]!r}") from None
    if not numeric:
        return out
    try:
        return np.array([[float(x) for x in r] for r in out], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _write_history(path, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["epoch", "train_loss", "valid_loss"])
        for e, (a, b) in enumerate(history, 1):
            w.writerow([e, format_float(a), "" if not np.isfinite(b) else format_float(b)])


def _train_cfg(args):
    from .nn.train import TrainConfig

    return TrainConfig(optimizer=args.optimizer, step_size=args.step_size, n_epoch=args.epochs, batch_size=args.batch, seed=args.seed)


def _table(header, rows) -> str:
    cols = [header] + [[str(x) for x in r] for r in rows]
    widths = [max(len(r[k]) for r in cols) for k in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cols)


# -- commands ------------------------------------------------------------------

def cmd_summarize(args) -> None:
    p = _read(args)
    s = core.summarize(p)
    _emit(n_seq=s.n_seq, n_action=s.n_action, len_min=int(s.seq_length.min()), len_max=int(s.seq_length.max()),
          len_mean=float(s.seq_length.mean()))
    if s.total_time is not None:
        _emit(**{f"total_time_{k}": float(v) for k, v in zip(("min", "q1", "median", "mean", "q3", "max"), s.total_time.values())})
        _emit(**{f"mean_react_time_{k}": float(v) for k, v in zip(("min", "q1", "median", "mean", "q3", "max"), s.mean_react_time.values())})
    _err(_table(["action", "freq", "seqfreq"], zip(s.actions, s.action_freq, s.action_seqfreq)))
    if args.trans_out:
        P = s.trans_prob()
        with open(args.trans_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["from", *s.actions])
            for a, row in zip(s.actions, P):
                w.writerow([a, *(format_float(x) for x in row)])
        _emit(trans_out=args.trans_out)


def parse_ops(text: str) -> list[tuple[str, list[str]]]:
    """Cleaning script: one operation per line, shell-style quoting.

    ``remove_repeat`` | ``remove_action A [B ...]`` | ``replace OLD NEW`` |
    ``combine NEW A B [...]`` (replace the run ``A B ...`` by ``NEW``).
    """
    ops = []
    arity = {"remove_repeat": (0, 0), "remove_action": (1, None), "replace": (2, 2), "combine": (2, None)}
    for n, line in enumerate(text.splitlines(), 1):
        toks = shlex.split(line, comments=True)
        if not toks:
            continue
        name, rest = toks[0], toks[1:]
        if name not in arity:
            raise DataError(f"ops line {n}: unknown operation {name!r}")
        lo, hi = arity[name]
        if len(rest) < lo or (hi is not None and len(rest) > hi):
            raise DataError(f"ops line {n}: wrong number of arguments for {name}")
        ops.append((name, rest))
    return ops


def apply_ops(p: core.ProcessSet, ops) -> core.ProcessSet:
    for name, a in ops:
        if name == "remove_repeat":
            p = core.remove_repeat(p)
        elif name == "remove_action":
            p = core.remove_action(p, a)
        elif name == "replace":
            p = core.replace_action(p, a[0], a[1])
        else:
            p = core.combine_actions(p, a[1:], a[0])
    return p


def cmd_clean(args) -> None:
    p = _read(args)
    ops = parse_ops(Path(args.ops).read_text(encoding="utf-8")) if args.ops else []
    q = apply_ops(p, ops)
    io.write_seqs(q, args.output, _style(args, "out_"))
    _emit(n_in=len(p), n_out=len(q), n_ops=len(ops), output=args.output)


def cmd_dist(args) -> None:
    p = _read(args)
    dm = dissimilarity_matrix(p, args.measure, args.w_time, n_jobs=args.jobs)
    write_matrix(dm, args.output)
    _emit(n=dm.n, measure=dm.measure, output=args.output)


def _mds_input(args):
    if args.dist:
        return read_matrix(args.dist)
    if not args.input:
        raise UsageError("give an input CSV or --dist")
    return _read(args)


def cmd_mds(args) -> None:
    from .mds import MdsConfig, seq2feature_mds

    x = _mds_input(args)
    cfg = MdsConfig(K=args.k, method=args.method, m=args.m, seed=args.seed, pca=args.pca, measure=args.measure, w_time=args.w_time)
    res = seq2feature_mds(x, cfg=cfg, return_dist=bool(args.dist_out))
    write_features(res.theta, args.output)
    if args.dist_out:
        write_matrix(res.dist_mat, args.dist_out)
    _emit(n=res.theta.shape[0], k=res.theta.shape[1], method=res.method, loss=res.loss, output=args.output)


def cmd_choosek_mds(args) -> None:
    from .mds import chooseK_mds

    x = _mds_input(args)
    out = chooseK_mds(x, args.k_cand, args.folds, seed=args.seed, measure=args.measure, w_time=args.w_time)
    _err(_table(["K", "cv_loss"], [(k, format_float(v)) for k, v in zip(out["K_cand"], out["cv_loss"])]))
    _emit(k=out["K"], k_cand=out["K_cand"], cv_loss=[float(v) for v in out["cv_loss"]])


def _ae_arch(args, K=None):
    from .seqae import SeqAEArchitecture

    return SeqAEArchitecture(ae_type=args.ae_type, K=K or args.k, rnn_type=args.rnn_type, method=args.method,
                             cumulative=args.cumulative, log=args.log_time, w_action=args.w_action, w_time=args.w_time)


def cmd_ae(args) -> None:
    from .seqae import seq2feature_seq2seq

    p = _read(args)
    res = seq2feature_seq2seq(p, _ae_arch(args), _train_cfg(args), pca=args.pca)
    write_features(res.theta, args.output)
    if args.model_out:
        res.save(args.model_out)
    if args.history_out:
        _write_history(args.history_out, res.fit.history)
    _emit(n=res.theta.shape[0], k=res.theta.shape[1], best_epoch=res.fit.best_epoch + 1,
          train_loss=float(res.train_loss[-1]), valid_loss=float(res.valid_loss[-1]), output=args.output)


def cmd_choosek_ae(args) -> None:
    from .seqae import chooseK_seq2seq

    p = _read(args)
    out = chooseK_seq2seq(p, _ae_arch(args, K=1), args.k_cand, args.folds, _train_cfg(args))
    _err(_table(["K", "cv_loss"], [(k, format_float(v)) for k, v in zip(out["K_cand"], out["cv_loss"])]))
    _emit(k=out["K"], k_cand=out["K_cand"], cv_loss=[float(v) for v in out["cv_loss"]])


def cmd_seqm_fit(args) -> None:
    from .seqm import SeqmArchitecture, seqm_fit

    p = _read(args)
    y = _read_column(args.response, p.ids, "response")[:, 0]
    X = _read_column(args.covariates, p.ids, "covariate") if args.covariates else None
    hidden = tuple(args.k_hidden) if args.k_hidden else ()
    arch = SeqmArchitecture(response_type=args.response_type, K_emb=args.k_emb, K_rnn=args.k_rnn, rnn_type=args.rnn_type,
                            include_time=args.include_time, time_interval=args.time_interval, log_time=args.log_time,
                            n_hidden=len(hidden), K_hidden=hidden, max_len=args.max_len)
    model = seqm_fit(p, y, X, arch, _train_cfg(args), index_valid=args.valid_frac)
    model.save(args.model_out)
    if args.history_out:
        _write_history(args.history_out, model.history)
    _emit(structure=model.structure, best_epoch=model.extra["best_epoch"] + 1, model_out=args.model_out)


def cmd_seqm_predict(args) -> None:
    from .seqm import SeqmModel, seqm_predict

    model = SeqmModel.load(args.model)
    p = _read(args)
    X = _read_column(args.covariates, p.ids, "covariate") if args.covariates else None
    pred = seqm_predict(model, p, X)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["id", "prediction"])
        for pid, v in zip(p.ids, pred):
            w.writerow([pid, format_float(v)])
    _emit(n=len(pred), output=args.output)


def _read_markov(path) -> gen.MarkovSpec:
    """Square CSV: header ``from, a1..aN``; start = first action, terminal = last."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    vocab = rows[0][1:]
    try:
        P = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return gen.MarkovSpec(tuple(vocab), P, start=0, terminal=-1)


def cmd_gen(args) -> None:
    tm = gen.NO_TIME if args.time_dist == "none" else gen.TimeModel(args.time_dist, rate=args.rate, mu=args.mu, sigma=args.sigma, c=args.c)
    if args.generator == "1":
        p = gen.seq_gen(args.n, time=tm, seed=args.seed)
    elif args.generator == "2":
        if not args.markov:
            raise UsageError("generator 2 needs --markov")
        p = gen.seq_gen2(args.n, _read_markov(args.markov), time=tm, seed=args.seed, max_len=args.max_len)
    else:
        p = gen.seq_gen3(args.n, args.n_action, time=tm, seed=args.seed, K=args.k, max_len=args.max_len)
    io.write_seqs(p, args.output, _style(args))
    _emit(n=len(p), n_action=len(p.vocab), output=args.output)


def cmd_logistic(args) -> None:
    from .logistic import fit_logistic

    fm = read_features(args.features)
    y = np.array([r[0] for r in _read_column(args.labels, fm.ids, "label", numeric=False)])
    try:
        y = y.astype(float)
    except ValueError:
        raise DataError(f"{args.labels}: labels must be 0/1") from None
    n = len(y)
    perm = np.random.default_rng(np.random.SeedSequence([args.seed, 8])).permutation(n)
    n_test = int(round(n * args.test_frac))
    test, train = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    fit = fit_logistic(fm.theta, y, train, test if n_test else None)
    _emit(n_train=train.size, n_test=n_test, accuracy=fit.accuracy, converged=str(fit.converged).lower(),
          majority=float(max(y[test if n_test else train].mean(), 1 - y[test if n_test else train].mean())),
          coefficients=[float(b) for b in fit.coefficients])


# -- parser --------------------------------------------------------------------

def _io_parent() -> argparse.ArgumentParser:
    a = argparse.ArgumentParser(add_help=False)
    a.add_argument("--style", choices=("single", "multiple"), default="multiple")
    a.add_argument("--id-var", default="ID")
    a.add_argument("--action-var", default="Action")
    a.add_argument("--time-var", default="Time")
    a.add_argument("--step-sep", default=",")
    return a


def _train_parent() -> argparse.ArgumentParser:
    a = argparse.ArgumentParser(add_help=False)
    a.add_argument("--rnn-type", choices=("lstm", "gru"), default="lstm")
    a.add_argument("--epochs", type=int, default=50)
    a.add_argument("--batch", type=int, default=16)
    a.add_argument("--optimizer", choices=("sgd", "adam", "adadelta", "rmsprop"), default="adam")
    a.add_argument("--step-size", type=float, default=None)
    return a


def _seed_parent() -> argparse.ArgumentParser:
    a = argparse.ArgumentParser(add_help=False)
    a.add_argument("--seed", type=int, default=None, help="required")
    return a


def _dist_opts(sp) -> None:
    sp.add_argument("--measure", choices=("oss_action", "oss_both"), default="oss_action")
    sp.add_argument("--w-time", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="procflow", description="Response process data toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)
    iop, trp, sdp = _io_parent(), _train_parent(), _seed_parent()

    def add(name, func, parents, stochastic=False, help=None):
        sp = sub.add_parser(name, parents=parents + ([sdp] if stochastic else []), help=help)
        sp.add_argument("--config", default=None, help="flat key = value file")
        sp.set_defaults(func=func, stochastic=stochastic)
        return sp

    sp = add("summarize", cmd_summarize, [iop], help="summary statistics")
    sp.add_argument("input")
    sp.add_argument("--trans-out", default=None, help="write the transition probability matrix (CSV)")

    sp = add("clean", cmd_clean, [iop], help="apply a cleaning script")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.add_argument("--ops", default=None, help="operations file, one per line")
    sp.add_argument("--out-style", choices=("single", "multiple"), default=None)

    sp = add("dist", cmd_dist, [iop], help="OSS dissimilarity matrix")
    sp.add_argument("input")
    sp.add_argument("output")
    _dist_opts(sp)
    sp.add_argument("--jobs", type=int, default=1)

    sp = add("mds", cmd_mds, [iop], stochastic=True, help="MDS features")
    sp.add_argument("input", nargs="?")
    sp.add_argument("--dist", default=None, help="precomputed dissimilarity matrix CSV")
    sp.add_argument("--output", "-o", required=True)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--method", choices=("small", "large", "auto"), default="auto")
    sp.add_argument("--m", type=int, default=500, help="subset size for the large-n method")
    sp.add_argument("--pca", action=argparse.BooleanOptionalAction, default=True)
    sp.add_argument("--dist-out", default=None)
    _dist_opts(sp)

    sp = add("choosek-mds", cmd_choosek_mds, [iop], stochastic=True, help="choose K for MDS by cross-validation")
    sp.add_argument("input", nargs="?")
    sp.add_argument("--dist", default=None)
    sp.add_argument("--k-cand", type=_int_list, default=_int_list("1:10"))
    sp.add_argument("--folds", type=int, default=5)
    _dist_opts(sp)

    for name, func in (("ae", cmd_ae), ("choosek-ae", cmd_choosek_ae)):
        sp = add(name, func, [iop, trp], stochastic=True, help="sequence autoencoder features" if name == "ae" else "choose K for the autoencoder")
        sp.add_argument("input")
        sp.add_argument("--ae-type", choices=("action", "time", "both"), default="action")
        sp.add_argument("--method", choices=("last", "avg"), default="last")
        sp.add_argument("--cumulative", action=argparse.BooleanOptionalAction, default=False)
        sp.add_argument("--log-time", action=argparse.BooleanOptionalAction, default=True)
        sp.add_argument("--w-action", type=float, default=1.0)
        sp.add_argument("--w-time", type=float, default=1.0)
        if name == "ae":
            sp.add_argument("--output", "-o", required=True)
            sp.add_argument("--k", type=int, default=20)
            sp.add_argument("--pca", action=argparse.BooleanOptionalAction, default=True)
            sp.add_argument("--model-out", default=None)
            sp.add_argument("--history-out", default=None)
        else:
            sp.add_argument("--k-cand", type=_int_list, default=[5, 10])
            sp.add_argument("--folds", type=int, default=5)

    sp = add("seqm-fit", cmd_seqm_fit, [iop, trp], stochastic=True, help="fit a sequence model")
    sp.add_argument("input")
    sp.add_argument("--response", required=True, help="CSV id,response")
    sp.add_argument("--covariates", default=None, help="CSV id,x1,x2,...")
    sp.add_argument("--model-out", required=True)
    sp.add_argument("--history-out", default=None)
    sp.add_argument("--response-type", choices=("binary", "scale"), default="binary")
    sp.add_argument("--k-emb", type=int, default=20)
    sp.add_argument("--k-rnn", type=int, default=20)
    sp.add_argument("--k-hidden", type=_int_list, default=None)
    sp.add_argument("--include-time", action=argparse.BooleanOptionalAction, default=False)
    sp.add_argument("--time-interval", action=argparse.BooleanOptionalAction, default=False)
    sp.add_argument("--log-time", action=argparse.BooleanOptionalAction, default=True)
    sp.add_argument("--max-len", type=int, default=None)
    sp.add_argument("--valid-frac", type=float, default=0.2)
    sp.set_defaults(epochs=20)

    sp = add("seqm-predict", cmd_seqm_predict, [iop], help="predict with a fitted sequence model")
    sp.add_argument("model")
    sp.add_argument("input")
    sp.add_argument("--covariates", default=None)
    sp.add_argument("--output", "-o", required=True)

    sp = add("gen", cmd_gen, [iop], stochastic=True, help="simulate processes")
    sp.add_argument("output")
    sp.add_argument("--generator", choices=("1", "2", "3"), default="1")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--markov", default=None, help="transition matrix CSV for generator 2")
    sp.add_argument("--n-action", type=int, default=10)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--max-len", type=int, default=gen.MAX_LEN)
    sp.add_argument("--time-dist", choices=("none", "exponential", "lognormal", "constant"), default="exponential")
    sp.add_argument("--rate", type=float, default=1.0)
    sp.add_argument("--mu", type=float, default=1.0)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--c", type=float, default=1.0)

    sp = add("logistic", cmd_logistic, [], stochastic=True, help="logistic regression on features")
    sp.add_argument("features")
    sp.add_argument("labels", help="CSV id,label")
    sp.add_argument("--test-frac", type=float, default=0.2)
    return ap


_TRUE, _FALSE = {"1", "true", "yes", "on"}, {"0", "false", "no", "off"}


def read_config(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_config(sp: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    defaults = {}
    for k, v in cfg.items():
        if k not in actions:
            raise UsageError(f"unknown config key {k!r}")
        a = actions[k]
        if isinstance(a, argparse.BooleanOptionalAction):
            lv = v.lower()
            if lv not in _TRUE | _FALSE:
                raise UsageError(f"config key {k!r} expects a boolean")
            defaults[k] = lv in _TRUE
        else:
            defaults[k] = v  # argparse converts string defaults with the action's type
        a.required = False
        if a.option_strings == [] and a.nargs is None:
            a.nargs = "?"
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = ap.parse_args(argv)
        if args.config:
            sp = ap._subparsers._group_actions[0].choices[args.command]
            _apply_config(sp, read_config(args.config))
            args = ap.parse_args(argv)
        if args.stochastic and args.seed is None:
            raise UsageError(f"{args.command} requires --seed")
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        _err(f"procflow: error: {exc}")
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda m, *a, **k: _err(f"warning: {m}")
            args.func(args)
    except UsageError as exc:
        _err(f"procflow: error: {exc}")
        return EXIT_USAGE
    except DataError as exc:
        _err(f"procflow: data error: {exc}")
        return EXIT_DATA
    except NumericError as exc:
        _err(f"procflow: numeric error: {exc}")
        return EXIT_NUMERIC
    except OSError as exc:
        _err(f"procflow: data error: {exc}")
        return EXIT_DATA
    except ValueError as exc:
        _err(f"procflow: error: {exc}")
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
