"""Latent feature matrices and the principal-feature rotation."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .io import format_float


def sign_convention(theta: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude in each is positive."""
    theta = np.array(theta, dtype=float)
    if theta.size == 0:
        return theta
    rows = np.argmax(np.abs(theta), axis=0)
    signs = np.sign(theta[rows, np.arange(theta.shape[1])])
    signs[signs == 0] = 1.0
    return theta * signs


def principal_rotation(theta: np.ndarray) -> np.ndarray:
    """Mean-centre ``theta`` and rotate it onto its principal axes.

    A pure rigid motion, so pairwise distances are unchanged.
    """
    Xc = theta - theta.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    return sign_convention(Xc @ Vt.T)


@dataclass(frozen=True)
class FeatureMatrix:
    theta: np.ndarray
    pca_applied: bool = False
    ids: tuple[str, ...] | None = None

    @property
    def columns(self) -> list[str]:
        prefix = "PC" if self.pca_applied else "F"
        return [f"{prefix}{k + 1}" for k in range(self.theta.shape[1])]

    @property
    def shape(self):
        return self.theta.shape

    def rotated(self) -> "FeatureMatrix":
        return FeatureMatrix(principal_rotation(self.theta), True, self.ids)


def make_features(theta, pca: bool, ids=None) -> FeatureMatrix:
    fm = FeatureMatrix(np.asarray(theta, dtype=float), False, None if ids is None else tuple(ids))
    return fm.rotated() if pca else fm


def write_features(fm: FeatureMatrix, path: str | os.PathLike) -> None:
    ids = fm.ids if fm.ids is not None else [str(i + 1) for i in range(fm.theta.shape[0])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["id"] + fm.columns)
        for pid, row in zip(ids, fm.theta):
            w.writerow([pid] + [format_float(x) for x in row])


def read_features(path: str | os.PathLike) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty feature file")
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        theta = np.array([[float(x) for x in r[1:]] for r in body], dtype=float).reshape(len(body), len(header) - 1)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return FeatureMatrix(theta, all(c.startswith("PC") for c in header[1:]), tuple(r[0] for r in body))
