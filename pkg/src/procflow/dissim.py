"""Pairwise dissimilarities between response processes.

The optimal symbol similarity (OSS) dissimilarity matches, for every action
present in both sequences, as many occurrences as possible (the smaller of
the two counts) so that the total matched cost is minimal.  Each matched
pair costs its positional displacement divided by the longer length; every
unmatched occurrence costs 1; the total is divided by ``L_i + L_j``, so
``0 <= d <= 1``.  With equal counts the optimum pairs the k-th occurrence
with the k-th; otherwise an order-preserving dynamic programme chooses which
occurrences of the more frequent side stay unmatched.  The time-weighted
variant blends in the displacement of normalised timestamps ``t / T``::

    cost(p, q) = (1 - w) |p - q| / max(L_i, L_j) + w |t_p / T_i - t_q / T_j|

and the matching minimises this blended cost.

The pair loop runs in a compiled extension when available and falls back to
numpy otherwise; set ``PROCFLOW_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from types import ModuleType

import numpy as np

from . import _oss_py
from .core import ProcessSet
from .errors import DataError
from .io import format_float

try:
    from . import _oss_c
except ImportError:  # extension not built
    _oss_c = None

MEASURES = ("oss_action", "oss_both")
DENSE_LIMIT = 20_000


def get_backend(name: str | None = None) -> ModuleType:
    """Kernel module: ``"compiled"``, ``"python"`` or ``None`` for the default."""
    if name is None:
        if os.environ.get("PROCFLOW_PURE_PYTHON") or _oss_c is None:
            return _oss_py
        return _oss_c
    if name == "python":
        return _oss_py
    if name == "compiled":
        if _oss_c is None:
            raise ImportError("compiled OSS extension is not available; rebuild with `pip install -e .`")
        return _oss_c
    raise ValueError(f"unknown backend {name!r}")


def backend_name() -> str:
    return "compiled" if get_backend() is _oss_c and _oss_c is not None else "python"


@dataclass(frozen=True)
class Packed:
    offsets: np.ndarray
    sym_offsets: np.ndarray
    syms: np.ndarray
    occ_start: np.ndarray
    occ_count: np.ndarray
    occ_pos: np.ndarray
    tnorm: np.ndarray

    def args(self):
        return (self.offsets, self.sym_offsets, self.syms, self.occ_start, self.occ_count, self.occ_pos, self.tnorm)


def pack(p: ProcessSet, with_time: bool = False) -> Packed:
    """Flatten a set into the contiguous arrays the kernels read."""
    n, N = len(p), len(p.vocab)
    lengths = p.lengths
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    occ_count = np.zeros((n, N), dtype=np.int64)
    occ_start = np.zeros((n, N), dtype=np.int64)
    occ_pos = np.empty(int(offsets[-1]), dtype=np.int64)
    syms_parts, sym_offsets = [], np.zeros(n + 1, dtype=np.int64)
    for i, a in enumerate(p.actions):
        order = np.argsort(a, kind="stable")
        occ_pos[offsets[i] : offsets[i + 1]] = order
        counts = np.bincount(a, minlength=N)
        occ_count[i] = counts
        occ_start[i] = offsets[i] + np.cumsum(counts) - counts
        present = np.flatnonzero(counts)
        syms_parts.append(present)
        sym_offsets[i + 1] = sym_offsets[i] + present.size
    syms = np.concatenate(syms_parts).astype(np.int64) if syms_parts else np.zeros(0, dtype=np.int64)
    if with_time:
        if not p.has_times:
            raise DataError("oss_both requires timestamps")
        parts = []
        for i, t in enumerate(p.times):
            if t[-1] <= 0:
                raise DataError(f"process {p.ids[i]!r} has zero total time")
            parts.append(t / t[-1])
        tnorm = np.ascontiguousarray(np.concatenate(parts))
    else:
        tnorm = np.zeros(int(offsets[-1]))
    return Packed(offsets, sym_offsets, syms, occ_start, occ_count, occ_pos, tnorm)


def _weight(measure: str, w_time: float) -> tuple[bool, float]:
    if measure == "oss_action":
        return False, 0.0
    if measure == "oss_both":
        if not 0.0 <= w_time <= 1.0:
            raise ValueError("w_time must lie in [0, 1]")
        return True, float(w_time)
    raise ValueError(f"unknown measure {measure!r}; choose from {MEASURES}")


def _pair_value(p: ProcessSet, i: int, j: int, measure: str, w_time: float) -> float:
    for k in (i, j):
        if not 0 <= k < len(p):
            raise DataError(f"index {k} out of range")
    sub = ProcessSet(
        [p.ids[i], p.ids[j] + "\x00" if i == j else p.ids[j]],
        p.vocab,
        [p.actions[i], p.actions[j]],
        None if p.times is None else [p.times[i], p.times[j]],
        validate=False,
    )
    with_time, w = _weight(measure, w_time)
    out = np.zeros(1)
    get_backend().eval_pairs(*pack(sub, with_time).args(), w, np.array([[0, 1]], dtype=np.int64), out)
    return float(out[0])


def oss_action(p: ProcessSet, i: int, j: int) -> float:
    return _pair_value(p, i, j, "oss_action", 0.0)


def oss_both(p: ProcessSet, i: int, j: int, w_time: float = 0.5) -> float:
    return _pair_value(p, i, j, "oss_both", w_time)


@dataclass(frozen=True)
class DissimilarityMatrix:
    values: np.ndarray
    measure: str = "external"
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DataError(f"dissimilarity matrix must be square, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("dissimilarity matrix has non-finite entries")
        if np.any(np.diag(v) != 0):
            raise DataError("dissimilarity matrix must have a zero diagonal")
        if not np.array_equal(v, v.T):
            raise DataError("dissimilarity matrix must be symmetric")
        if np.any(v < 0):
            raise DataError("dissimilarity matrix has negative entries")
        if self.ids is not None and len(self.ids) != v.shape[0]:
            raise DataError("id count does not match matrix size")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def sub(self, rows, cols) -> np.ndarray:
        return self.values[np.ix_(rows, cols)]


def dissimilarity_matrix(
    p: ProcessSet,
    measure: str = "oss_action",
    w_time: float = 0.5,
    pairs=None,
    n_jobs: int = 1,
    backend: str | None = None,
):
    """All-pairs :class:`DissimilarityMatrix`, or the values for an ``(P, 2)`` index array ``pairs``.

    With ``n_jobs > 1`` rows are split across threads; each cell is computed
    independently, so the result does not depend on scheduling.
    """
    with_time, w = _weight(measure, w_time)
    kern = get_backend(backend)
    pk = pack(p, with_time)
    n = len(p)
    if pairs is not None:
        pairs = np.ascontiguousarray(np.asarray(pairs, dtype=np.int64).reshape(-1, 2))
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise DataError("pair index out of range")
        out = np.zeros(pairs.shape[0])
        kern.eval_pairs(*pk.args(), w, pairs, out)
        return out
    if n > DENSE_LIMIT:
        raise DataError(f"dense matrices are limited to n <= {DENSE_LIMIT}; request pairs instead")
    D = np.zeros((n, n))
    if n_jobs <= 1 or n < 2:
        kern.fill_rows(*pk.args(), w, 0, n, D)
    else:
        # balance triangle rows: row i costs ~ n - i
        cuts = np.unique(np.round(n - np.sqrt(np.linspace(1, 0, n_jobs + 1)) * n).astype(int))
        with ThreadPoolExecutor(n_jobs) as ex:
            list(ex.map(lambda ab: kern.fill_rows(*pk.args(), w, int(ab[0]), int(ab[1]), D), zip(cuts[:-1], cuts[1:])))
    D = np.triu(D, 1)
    D = D + D.T
    return DissimilarityMatrix(D, measure, p.ids)


def write_matrix(dm: DissimilarityMatrix, path) -> None:
    """Square CSV: header ``id, <ids...>``, then one row per process."""
    ids = dm.ids if dm.ids is not None else tuple(str(i + 1) for i in range(dm.n))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["id", *ids])
        for pid, row in zip(ids, dm.values):
            w.writerow([pid, *(format_float(x) for x in row)])


def read_matrix(path, measure: str = "external") -> DissimilarityMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty matrix file")
    header, body = rows[0], rows[1:]
    ids = tuple(header[1:])
    if len(body) != len(ids) or [r[0] for r in body] != list(ids):
        raise DataError(f"{path}: row ids must match the header ids in order")
    try:
        values = np.array([[float(x) for x in r[1:]] for r in body], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return DissimilarityMatrix(values.reshape(len(ids), len(ids)), measure, ids)
