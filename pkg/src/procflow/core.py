"""Process data model, summaries and sequence manipulation.

A response process is a pair of aligned sequences: the actions a respondent
took and (optionally) the elapsed time at which each action happened.  A
:class:`ProcessSet` holds many such processes keyed by respondent id.  All
sets are immutable; every manipulation returns a new set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

__all__ = [
    "ProcessSet",
    "ProcessSummary",
    "summarize",
    "render",
    "sub_seqs",
    "remove_repeat",
    "remove_action",
    "replace_action",
    "combine_actions",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class ProcessSet:
    """An ordered, immutable collection of response processes.

    Parameters
    ----------
    ids : sequence of str
        Unique respondent identifiers.
    vocab : sequence of str
        Distinct action labels.  Each process stores indices into this table.
    actions : sequence of integer arrays
        ``actions[i][l]`` is the vocabulary index of step ``l`` of process ``i``.
    times : sequence of float arrays, optional
        Nondecreasing timestamps aligned with ``actions``; all or none.

    Use :meth:`from_sequences` to build a set from action labels directly.
    """

    __slots__ = ("ids", "vocab", "actions", "times", "_index")

    def __init__(self, ids, vocab, actions, times=None, *, validate=True):
        self.ids = tuple(str(i) for i in ids)
        self.vocab = tuple(str(v) for v in vocab)
        self.actions = tuple(_frozen(np.asarray(a, dtype=np.int64).copy()) for a in actions)
        if times is None:
            self.times = None
        else:
            self.times = tuple(_frozen(np.asarray(t, dtype=np.float64).copy()) for t in times)
        self._index = {v: k for k, v in enumerate(self.vocab)}
        if validate:
            self.validate()

    @classmethod
    def from_sequences(cls, ids, action_seqs, time_seqs=None) -> "ProcessSet":
        """Build a set from label sequences, with a sorted vocabulary of the actions present."""
        action_seqs = [list(map(str, s)) for s in action_seqs]
        vocab = sorted({a for s in action_seqs for a in s})
        index = {v: k for k, v in enumerate(vocab)}
        actions = [np.array([index[a] for a in s], dtype=np.int64) for s in action_seqs]
        return cls(ids, vocab, actions, time_seqs)

    def validate(self) -> None:
        """Raise :class:`DataError` unless every model invariant holds."""
        n = len(self.ids)
        if len(set(self.ids)) != n:
            seen = set()
            dup = next(i for i in self.ids if i in seen or seen.add(i))
            raise DataError(f"duplicate id {dup!r}")
        if len(self.actions) != n:
            raise DataError(f"{n} ids but {len(self.actions)} action sequences")
        if len(set(self.vocab)) != len(self.vocab):
            raise DataError("vocabulary entries must be distinct")
        n_vocab = len(self.vocab)
        for i, a in enumerate(self.actions):
            if a.ndim != 1 or a.size == 0:
                raise DataError(f"process {self.ids[i]!r} is empty")
            if a.min() < 0 or a.max() >= n_vocab:
                raise DataError(f"process {self.ids[i]!r} has an action index outside the vocabulary")
        if self.times is not None:
            if len(self.times) != n:
                raise DataError(f"{n} ids but {len(self.times)} time sequences")
            for i, (a, t) in enumerate(zip(self.actions, self.times)):
                if t.shape != a.shape:
                    raise DataError(f"process {self.ids[i]!r}: {a.size} actions but {t.size} timestamps")
                if not np.all(np.isfinite(t)):
                    raise DataError(f"process {self.ids[i]!r} has non-finite timestamps")
                if t[0] < 0 or np.any(np.diff(t) < 0):
                    raise DataError(f"process {self.ids[i]!r} has negative or decreasing timestamps")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def has_times(self) -> bool:
        return self.times is not None

    @property
    def lengths(self) -> np.ndarray:
        return np.array([a.size for a in self.actions], dtype=np.int64)

    def action_index(self, label: str) -> int | None:
        return self._index.get(label)

    def labels(self, i: int) -> list[str]:
        """Action labels of process ``i``."""
        return [self.vocab[k] for k in self.actions[i]]

    def action_seqs(self) -> list[list[str]]:
        return [self.labels(i) for i in range(len(self))]

    def time_seqs(self) -> list[list[float]] | None:
        if self.times is None:
            return None
        return [t.tolist() for t in self.times]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProcessSet):
            return NotImplemented
        if self.ids != other.ids or self.action_seqs() != other.action_seqs():
            return False
        if (self.times is None) != (other.times is None):
            return False
        if self.times is not None:
            return all(np.array_equal(a, b) for a, b in zip(self.times, other.times))
        return True

    __hash__ = None

    def __repr__(self) -> str:
        return f"ProcessSet(n={len(self)}, n_action={len(self.vocab)}, times={self.has_times})"

    def __str__(self) -> str:
        return render(self)


def _five_number(x: np.ndarray) -> dict[str, float]:
    q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {
        "Min.": float(q[0]),
        "1st Qu.": float(q[1]),
        "Median": float(q[2]),
        "Mean": float(np.mean(x)),
        "3rd Qu.": float(q[3]),
        "Max.": float(q[4]),
    }


@dataclass(frozen=True)
class ProcessSummary:
    n_seq: int
    n_action: int
    actions: tuple[str, ...]
    seq_length: np.ndarray
    action_freq: np.ndarray
    action_seqfreq: np.ndarray
    trans_count: np.ndarray
    total_time: dict | None = None
    mean_react_time: dict | None = None

    def trans_prob(self) -> np.ndarray:
        """Row-normalised transition matrix; rows without outgoing bigrams stay zero."""
        rows = self.trans_count.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(rows > 0, self.trans_count / np.where(rows > 0, rows, 1), 0.0)
        return out


def summarize(p: ProcessSet) -> ProcessSummary:
    if len(p) == 0:
        raise DataError("empty set")
    n_action = len(p.vocab)
    seq_length = p.lengths
    action_freq = np.zeros(n_action, dtype=np.int64)
    action_seqfreq = np.zeros(n_action, dtype=np.int64)
    trans = np.zeros((n_action, n_action), dtype=np.int64)
    for a in p.actions:
        action_freq += np.bincount(a, minlength=n_action)
        action_seqfreq[np.unique(a)] += 1
        if a.size > 1:
            np.add.at(trans, (a[:-1], a[1:]), 1)
    total_time = mean_react_time = None
    if p.times is not None:
        total = np.array([t[-1] for t in p.times])
        total_time = _five_number(total)
        mean_react_time = _five_number(total / seq_length)
    return ProcessSummary(
        n_seq=len(p),
        n_action=n_action,
        actions=p.vocab,
        seq_length=seq_length,
        action_freq=action_freq,
        action_seqfreq=action_seqfreq,
        trans_count=trans,
        total_time=total_time,
        mean_react_time=mean_react_time,
    )


def _render_one(p: ProcessSet, i: int, width: int) -> list[str]:
    labels = p.labels(i)
    cols = [f"Step {k + 1}" for k in range(len(labels))]
    rows = [("Event", labels, "left")]
    if p.times is not None:
        rows.append(("Time", [f"{t:.1f}" for t in p.times[i]], "right"))
    widths = [max(len(c), *(len(r[1][k]) for r in rows)) for k, c in enumerate(cols)]
    stub = max(len(r[0]) for r in rows)

    lines = [f"{p.ids[i]} "]
    start = 0
    while start < len(cols):
        used, stop = stub, start
        while stop < len(cols) and (stop == start or used + 1 + widths[stop] <= width):
            used += 1 + widths[stop]
            stop += 1
        block = range(start, stop)
        lines.append(" " * stub + "".join(" " + cols[k].ljust(widths[k]) for k in block))
        for name, cells, align in rows:
            just = str.ljust if align == "left" else str.rjust
            lines.append(name.ljust(stub) + "".join(" " + just(cells[k], widths[k]) for k in block))
        start = stop
    return lines


def render(p: ProcessSet, index: int | Iterable[int] | None = None, width: int = 80) -> str:
    """Printable step table of selected processes (default: the first five).

    Indices are 0-based.  One decimal place is shown for timestamps.
    """
    n = len(p)
    lines = [f"'proc' object of  {n}  processes", ""]
    if index is None:
        sel = list(range(min(5, n)))
        lines += [f"First  {len(sel)}  processes:", ""]
    else:
        sel = [index] if isinstance(index, (int, np.integer)) else list(index)
        lines.append("")
    for i in sel:
        if not 0 <= i < n:
            raise DataError(f"index {i} out of range for {n} processes")
    for k, i in enumerate(sel):
        lines += _render_one(p, int(i), width)
        if k + 1 < len(sel):
            lines.append("")
    return "\n".join(lines) + "\n"


def _rebuild(p: ProcessSet, keep_ids, label_seqs, time_seqs) -> ProcessSet:
    return ProcessSet.from_sequences(keep_ids, label_seqs, time_seqs if p.times is not None else None)


def sub_seqs(p: ProcessSet, indices: Sequence[int]) -> ProcessSet:
    """Subset (and reorder) a set by 0-based process indices."""
    idx = [int(i) for i in indices]
    if len(set(idx)) != len(idx):
        raise DataError("duplicate index in selection")
    n = len(p)
    for i in idx:
        if not 0 <= i < n:
            raise DataError(f"index {i} out of range for {n} processes")
    times = [p.times[i] for i in idx] if p.times is not None else None
    return _rebuild(p, [p.ids[i] for i in idx], [p.labels(i) for i in idx], times)


def remove_repeat(p: ProcessSet) -> ProcessSet:
    """Collapse each run of identical consecutive actions to its first occurrence."""
    seqs, times = [], []
    for i, a in enumerate(p.actions):
        keep = np.ones(a.size, dtype=bool)
        keep[1:] = a[1:] != a[:-1]
        seqs.append([p.vocab[k] for k in a[keep]])
        if p.times is not None:
            times.append(p.times[i][keep])
    return _rebuild(p, p.ids, seqs, times)


def remove_action(p: ProcessSet, targets: Iterable[str] | str) -> ProcessSet:
    """Delete every occurrence of ``targets`` with its timestamp.

    Processes left empty are dropped from the set and a warning reports how many.
    """
    if isinstance(targets, str):
        targets = [targets]
    drop = {p.action_index(t) for t in targets} - {None}
    ids, seqs, times = [], [], []
    n_dropped = 0
    for i, a in enumerate(p.actions):
        keep = ~np.isin(a, list(drop)) if drop else np.ones(a.size, dtype=bool)
        if not keep.any():
            n_dropped += 1
            continue
        ids.append(p.ids[i])
        seqs.append([p.vocab[k] for k in a[keep]])
        if p.times is not None:
            times.append(p.times[i][keep])
    if n_dropped:
        warnings.warn(f"remove_action: dropped {n_dropped} empty processes", stacklevel=2)
    return _rebuild(p, ids, seqs, times)


def replace_action(p: ProcessSet, old: str, new: str) -> ProcessSet:
    """Relabel every occurrence of ``old`` as ``new``."""
    seqs = [[new if s == old else s for s in p.labels(i)] for i in range(len(p))]
    return _rebuild(p, p.ids, seqs, list(p.times) if p.times is not None else None)


def combine_actions(p: ProcessSet, pattern: Sequence[str], new: str) -> ProcessSet:
    """Replace each occurrence of a consecutive ``pattern`` by the single action ``new``.

    Matching is left to right and non-overlapping; the combined step keeps the
    timestamp of the pattern's first element.
    """
    pattern = [str(x) for x in pattern]
    if not pattern:
        raise DataError("combine_actions: empty pattern")
    m = len(pattern)
    seqs, times = [], []
    for i in range(len(p)):
        lab = p.labels(i)
        t = p.times[i] if p.times is not None else None
        out, keep_t = [], []
        l = 0
        while l < len(lab):
            if lab[l : l + m] == pattern:
                out.append(new)
                keep_t.append(l)
                l += m
            else:
                out.append(lab[l])
                keep_t.append(l)
                l += 1
        seqs.append(out)
        if t is not None:
            times.append(t[keep_t])
    return _rebuild(p, p.ids, seqs, times)
