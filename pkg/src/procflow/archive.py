"""Plain-text, versioned persistence for trained models.

Layout::

    format=procflow-model v1
    kind=<seqae|seqm>
    <field>=<json value>        (architecture, vocabulary, ...)
    param <name> <d1,d2,...> <v1> <v2> ...

Array values use the shortest round-trip decimal form, so a reload is exact
and re-saving is byte-identical.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import DataError
from .io import format_float
from .nn.params import NetParams

MAGIC = "format=procflow-model v1"


def save_archive(path: str | os.PathLike, kind: str, fields: dict, params: NetParams) -> None:
    lines = [MAGIC, f"kind={kind}"]
    for key, value in fields.items():
        if "=" in key or " " in key:
            raise ValueError(f"invalid field name {key!r}")
        lines.append(f"{key}={json.dumps(value, sort_keys=True)}")
    for name, arr in params.items():
        shape = ",".join(str(s) for s in arr.shape)
        values = " ".join(format_float(x) for x in np.asarray(arr, dtype=float).ravel())
        lines.append(f"param {name} {shape} {values}".rstrip())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_archive(path: str | os.PathLike) -> tuple[str, dict, NetParams]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise DataError(f"{path}: not a procflow model archive (expected {MAGIC!r})")
    if len(lines) < 2 or not lines[1].startswith("kind="):
        raise DataError(f"{path}: missing kind line")
    kind = lines[1][5:]
    fields: dict = {}
    params = NetParams()
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        if line.startswith("param "):
            parts = line.split(" ")
            if len(parts) < 3:
                raise DataError(f"{path}:{lineno}: malformed param line")
            name, shape_s = parts[1], parts[2]
            shape = tuple(int(s) for s in shape_s.split(",")) if shape_s else ()
            values = np.array([float(v) for v in parts[3:]], dtype=float)
            if values.size != int(np.prod(shape)):
                raise DataError(f"{path}:{lineno}: {name} has {values.size} values for shape {shape}")
            params[name] = values.reshape(shape)
        else:
            key, sep, value = line.partition("=")
            if not sep:
                raise DataError(f"{path}:{lineno}: expected key=value")
            try:
                fields[key] = json.loads(value)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return kind, fields, params
