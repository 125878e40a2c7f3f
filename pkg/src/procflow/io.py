"""CSV reading and writing of process sets.

Two layouts are supported:

``single``
    one row per respondent; the whole action sequence sits in one cell,
    steps joined by ``step_sep``, and likewise for the time cell.
``multiple``
    one row per event; consecutive rows sharing an id form one process.

Timestamps are written with the shortest decimal that round-trips the
float exactly, so ``read_seqs(write_seqs(p))`` reproduces ``p`` bit for bit.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import ProcessSet
from .errors import DataError

__all__ = ["CsvStyleSpec", "read_seqs", "write_seqs", "format_float"]


@dataclass(frozen=True)
class CsvStyleSpec:
    style: Literal["single", "multiple"] = "multiple"
    id_var: str = "ID"
    action_var: str = "Action"
    time_var: str | None = "Time"
    step_sep: str = ","

    def __post_init__(self):
        if self.style not in ("single", "multiple"):
            raise DataError(f"unknown style {self.style!r}; expected 'single' or 'multiple'")
        names = [self.id_var, self.action_var] + ([self.time_var] if self.time_var else [])
        if len(set(names)) != len(names):
            raise DataError("id_var, action_var and time_var must be distinct")
        if len(self.step_sep) != 1:
            raise DataError("step_sep must be a single character")


def format_float(x: float) -> str:
    """Shortest decimal string that parses back to exactly ``x``."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def _parse_float(cell: str, row: int) -> float:
    try:
        x = float(cell)
    except ValueError:
        raise DataError(f"row {row}: cannot parse timestamp {cell!r}") from None
    if not math.isfinite(x):
        raise DataError(f"row {row}: non-finite timestamp {cell!r}")
    return x


def _check_times(t: list[float], row: int, pid: str) -> None:
    if t and t[0] < 0:
        raise DataError(f"row {row}: negative timestamp in process {pid!r}")
    for a, b in zip(t, t[1:]):
        if b < a:
            raise DataError(f"row {row}: timestamps of process {pid!r} are not nondecreasing")


def read_seqs(path: str | os.PathLike, spec: CsvStyleSpec = CsvStyleSpec()) -> ProcessSet:
    """Read a process set from a CSV file in ``spec.style`` layout."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (header row required)") from None
        col = {name: k for k, name in enumerate(header)}
        for name in (spec.id_var, spec.action_var):
            if name not in col:
                raise DataError(f"{path}: missing column {name!r}")
        i_id, i_act = col[spec.id_var], col[spec.action_var]
        i_time = col.get(spec.time_var) if spec.time_var else None
        need = max(i_id, i_act, -1 if i_time is None else i_time)

        ids: list[str] = []
        acts: list[list[str]] = []
        times: list[list[float]] = []
        seen: set[str] = set()
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) <= need:
                raise DataError(f"row {rowno}: expected at least {need + 1} fields, got {len(row)}")
            pid = row[i_id]
            if spec.style == "single":
                if pid in seen:
                    raise DataError(f"row {rowno}: duplicate id {pid!r}")
                if row[i_act] == "":
                    raise DataError(f"row {rowno}: empty action sequence")
                a = row[i_act].split(spec.step_sep)
                if i_time is not None:
                    t = [_parse_float(c, rowno) for c in row[i_time].split(spec.step_sep)]
                    if len(t) != len(a):
                        raise DataError(f"row {rowno}: {len(a)} actions but {len(t)} timestamps")
                    _check_times(t, rowno, pid)
                    times.append(t)
                seen.add(pid)
                ids.append(pid)
                acts.append(a)
            else:
                if not ids or ids[-1] != pid:
                    if pid in seen:
                        raise DataError(f"row {rowno}: non-contiguous id block for {pid!r}")
                    seen.add(pid)
                    ids.append(pid)
                    acts.append([])
                    if i_time is not None:
                        times.append([])
                acts[-1].append(row[i_act])
                if i_time is not None:
                    t = times[-1]
                    t.append(_parse_float(row[i_time], rowno))
                    _check_times(t[-2:], rowno, pid)
    return ProcessSet.from_sequences(ids, acts, [np.array(t) for t in times] if i_time is not None else None)


def write_seqs(p: ProcessSet, path: str | os.PathLike, spec: CsvStyleSpec = CsvStyleSpec()) -> None:
    """Write ``p`` to ``path``; the time column is omitted when ``p`` has no times."""
    with_time = p.has_times and spec.time_var is not None
    if spec.style == "single":
        bad = [a for a in p.vocab if spec.step_sep in a]
        if bad:
            raise DataError(f"step_sep {spec.step_sep!r} occurs in action label {bad[0]!r}")
    header = [spec.id_var, spec.action_var] + ([spec.time_var] if with_time else [])
    try:
        fh = open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    if any("\x00" in a for a in p.vocab) or any("\x00" in i for i in p.ids):
        fh.close()
        raise DataError("NUL characters cannot be written to CSV")
    with fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for i, pid in enumerate(p.ids):
            labels = p.labels(i)
            if spec.style == "single":
                row = [pid, spec.step_sep.join(labels)]
                if with_time:
                    row.append(spec.step_sep.join(format_float(t) for t in p.times[i]))
                w.writerow(row)
            else:
                for l, a in enumerate(labels):
                    row = [pid, a]
                    if with_time:
                        row.append(format_float(p.times[i][l]))
                    w.writerow(row)
