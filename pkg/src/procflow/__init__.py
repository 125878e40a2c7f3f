"""Toolkit for response process data (timestamped action sequences from interaction logs)."""

from .core import (
    ProcessSet,
    ProcessSummary,
    combine_actions,
    remove_action,
    remove_repeat,
    render,
    replace_action,
    sub_seqs,
    summarize,
)
from .errors import DataError, NumericError, ProcflowError
from .io import CsvStyleSpec, read_seqs, write_seqs

__version__ = "0.1.0"

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
    "CsvStyleSpec",
    "read_seqs",
    "write_seqs",
    "DataError",
    "NumericError",
    "ProcflowError",
]
