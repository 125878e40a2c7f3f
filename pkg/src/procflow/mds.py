"""Multidimensional scaling features from dissimilarities.

Classical MDS embeds via the top eigenpairs of the double-centred squared
dissimilarities.  For large n a random anchor subset is embedded classically
and every other object is placed by minimising its stress against the
anchors with BFGS (several random starts, best kept).  The same placement
machinery scores held-out objects when choosing K by cross-validation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import ProcessSet
from .dissim import DissimilarityMatrix, dissimilarity_matrix
from .errors import DataError, NumericError
from .features import FeatureMatrix, make_features, sign_convention

AUTO_THRESHOLD = 2000


def double_center(D: np.ndarray) -> np.ndarray:
    """``-1/2 J D^(2) J`` with ``J = I - 11'/n``."""
    D2 = np.asarray(D, dtype=float) ** 2
    row = D2.mean(axis=1, keepdims=True)
    return -0.5 * (D2 - row - row.T + D2.mean())


def _as_matrix(D) -> np.ndarray:
    if isinstance(D, DissimilarityMatrix):
        return D.values
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DataError(f"dissimilarity matrix must be square, got {D.shape}")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise DataError("dissimilarity matrix must be symmetric")
    return D


def _top_eigen(D: np.ndarray, K: int):
    B = double_center(D)
    B = 0.5 * (B + B.T)
    lam, V = np.linalg.eigh(B)
    order = np.argsort(lam)[::-1][:K]
    return lam[order], V[:, order], float(np.abs(lam).max()) if lam.size else 0.0


def mds_classical(D, K: int) -> FeatureMatrix:
    """Classical (Torgerson) MDS coordinates, ``n x K``.

    Columns for nonpositive eigenvalues are zero; a warning is issued when
    any of the top K eigenvalues is materially negative.
    """
    D = _as_matrix(D)
    n = D.shape[0]
    if not 1 <= K < n:
        raise DataError(f"K must satisfy 1 <= K < n (K={K}, n={n})")
    lam, V, scale = _top_eigen(D, K)
    if np.any(lam < -1e-10 * max(scale, 1e-300)):
        warnings.warn(f"{int(np.sum(lam < 0))} of the top {K} eigenvalues are negative; their columns are set to zero", stacklevel=2)
    theta = V * np.sqrt(np.maximum(lam, 0.0))
    return FeatureMatrix(sign_convention(theta), False)


def mds_objective(D, theta) -> float:
    """Raw stress ``sum_{i<j} (d_ij - ||theta_i - theta_j||)^2``."""
    D = _as_matrix(D)
    theta = np.asarray(theta, dtype=float)
    diff = theta[:, None, :] - theta[None, :, :]
    E = np.sqrt((diff * diff).sum(axis=-1))
    iu = np.triu_indices(D.shape[0], 1)
    return float(np.sum((D[iu] - E[iu]) ** 2))


# -- placement against fixed anchors --------------------------------------------

def placement_objective(x, d, anchors):
    """Stress of points ``x`` against ``anchors`` and its gradient.

    ``x`` is ``(K,)`` or ``(P, K)``; ``d`` holds the matching dissimilarities
    to the anchors, ``(m,)`` or ``(P, m)``.  Where a point coincides with an
    anchor the distance is not differentiable and that term contributes the
    zero subgradient.
    """
    single = np.ndim(x) == 1
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Dd = np.atleast_2d(np.asarray(d, dtype=float))
    diff = X[:, None, :] - anchors[None, :, :]
    r = np.sqrt(np.einsum("pmk,pmk->pm", diff, diff))
    resid = Dd - r
    f = np.einsum("pm,pm->p", resid, resid)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(r > 0, -2.0 * resid / r, 0.0)
    g = np.einsum("pm,pmk->pk", coef, diff)
    if single:
        return float(f[0]), g[0]
    return f, g


def bfgs_batch(fg, X0, gtol: float = 1e-8, maxiter: int = 200):
    """Independent BFGS minimisations, one per row of ``X0``.

    ``fg(X, rows)`` returns objective values and gradients for the points ``X``
    belonging to problem indices ``rows``.  Backtracking (Armijo) line search;
    the inverse-Hessian update is skipped when the curvature condition fails.
    Rows are processed with elementwise operations only, so each result is
    independent of which other problems share the batch.
    """
    X = np.array(X0, dtype=float)
    P, K = X.shape
    eye = np.eye(K)
    H = np.broadcast_to(eye, (P, K, K)).copy()
    rows_all = np.arange(P)
    f, g = fg(X, rows_all)
    active = np.linalg.norm(g, axis=1) >= gtol
    first = np.ones(P, dtype=bool)
    n_iter = np.zeros(P, dtype=np.int64)
    for _ in range(maxiter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        n_iter[idx] += 1
        d = -np.einsum("pij,pj->pi", H[idx], g[idx])
        slope = np.einsum("pi,pi->p", g[idx], d)
        bad = slope >= 0
        if bad.any():
            H[idx[bad]] = eye
            d[bad] = -g[idx[bad]]
            slope[bad] = -np.einsum("pi,pi->p", g[idx[bad]], g[idx[bad]])
        t = np.ones(idx.size)
        x_new = np.empty((idx.size, K))
        f_new = np.empty(idx.size)
        g_new = np.empty((idx.size, K))
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(60):
            pi = np.flatnonzero(pending)
            if pi.size == 0:
                break
            xt = X[idx[pi]] + t[pi, None] * d[pi]
            ft, gt = fg(xt, idx[pi])
            ok = ft <= f[idx[pi]] + 1e-4 * t[pi] * slope[pi]
            acc = pi[ok]
            x_new[acc], f_new[acc], g_new[acc] = xt[ok], ft[ok], gt[ok]
            pending[acc] = False
            t[pi[~ok]] *= 0.5
        # line search exhausted: no further progress possible at this precision
        stalled = idx[pending]
        active[stalled] = False
        moved = np.flatnonzero(~pending)
        rows = idx[moved]
        s = x_new[moved] - X[rows]
        y = g_new[moved] - g[rows]
        sy = np.einsum("pi,pi->p", s, y)
        yy = np.einsum("pi,pi->p", y, y)
        upd = sy > 1e-12 * np.linalg.norm(s, axis=1) * np.sqrt(yy)
        scale_rows = upd & first[rows]
        if scale_rows.any():
            H[rows[scale_rows]] = (sy[scale_rows] / yy[scale_rows])[:, None, None] * eye
        first[rows] = False
        if upd.any():
            ur = rows[upd]
            su, yu = s[upd], y[upd]
            rho = 1.0 / sy[upd]
            Hy = np.einsum("pij,pj->pi", H[ur], yu)
            yHy = np.einsum("pi,pi->p", yu, Hy)
            H[ur] = (
                H[ur]
                - rho[:, None, None] * (su[:, :, None] * Hy[:, None, :] + Hy[:, :, None] * su[:, None, :])
                + (rho * rho * yHy + rho)[:, None, None] * (su[:, :, None] * su[:, None, :])
            )
        X[rows], f[rows], g[rows] = x_new[moved], f_new[moved], g_new[moved]
        active[rows] &= np.linalg.norm(g[rows], axis=1) >= gtol
    return X, f, g, n_iter


def place_points(d_rows, anchors, seed=0, n_starts: int = 5, gtol: float = 1e-8, maxiter: int = 200, keys=None, chunk: int = 2_000_000):
    """Place each row of ``d_rows (n, m)`` against ``anchors (m, K)``.

    Each object gets ``n_starts`` random starts drawn from its own stream
    (``SeedSequence([seed, key])``), scattered with the anchors' per-axis
    spread around their centroid; the lowest final stress wins.  Returns
    ``(theta (n, K), stress (n,))``.
    """
    d_rows = np.atleast_2d(np.asarray(d_rows, dtype=float))
    anchors = np.asarray(anchors, dtype=float)
    n, m = d_rows.shape
    K = anchors.shape[1]
    keys = np.arange(n) if keys is None else np.asarray(keys)
    centre = anchors.mean(axis=0)
    spread = anchors.std(axis=0)
    spread = np.where(spread > 0, spread, max(float(spread.max()), 1e-3))
    theta = np.zeros((n, K))
    stress = np.zeros(n)
    per_chunk = max(1, chunk // max(1, m * K * n_starts))
    for s0 in range(0, n, per_chunk):
        block = np.arange(s0, min(n, s0 + per_chunk))
        starts = np.concatenate(
            [centre + spread * np.random.default_rng(np.random.SeedSequence([int(seed), int(keys[i])])).standard_normal((n_starts, K)) for i in block]
        )
        owner = np.repeat(block, n_starts)

        def fg(X, rows):
            return placement_objective(X, d_rows[owner[rows]], anchors)

        X, f, _, _ = bfgs_batch(fg, starts, gtol=gtol, maxiter=maxiter)
        if not np.all(np.isfinite(f)):
            bad = np.flatnonzero(~np.isfinite(f))
            warnings.warn(f"non-finite placement objective for {bad.size} starts; falling back to best finite start", stacklevel=2)
            f = np.where(np.isfinite(f), f, np.inf)
        f = f.reshape(block.size, n_starts)
        best = np.argmin(f, axis=1)
        if not np.all(np.isfinite(f[np.arange(block.size), best])):
            raise NumericError("placement failed: no finite objective for some object")
        X = X.reshape(block.size, n_starts, K)
        theta[block] = X[np.arange(block.size), best]
        stress[block] = f[np.arange(block.size), best]
    return theta, stress


# -- front ends ----------------------------------------------------------------

@dataclass(frozen=True)
class MdsConfig:
    K: int = 2
    method: str = "auto"  # small | large | auto
    m: int = 500
    n_starts: int = 5
    seed: int = 0
    pca: bool = True
    measure: str = "oss_action"
    w_time: float = 0.5
    threshold: int = AUTO_THRESHOLD

    def __post_init__(self):
        if self.method not in ("small", "large", "auto"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.m < self.K + 2:
            raise ValueError("subset size m must be at least K + 2")


@dataclass
class MdsResult:
    theta: FeatureMatrix
    loss: float
    dist_mat: DissimilarityMatrix | None = None
    method: str = "small"
    anchors: np.ndarray | None = None


def _ids_of(x):
    if isinstance(x, ProcessSet):
        return x.ids
    if isinstance(x, DissimilarityMatrix):
        return x.ids
    return None


def mds_large(x, K: int, cfg: MdsConfig = MdsConfig()) -> MdsResult:
    """Anchor-subset MDS.  ``x`` is a ProcessSet (only O(mn) pairs are computed) or a full matrix.

    The loss is the anchor-anchor stress plus every placed object's stress
    against the anchors, i.e. the MDS objective restricted to computed pairs.
    """
    n = len(x) if isinstance(x, ProcessSet) else _as_matrix(x).shape[0]
    m = min(cfg.m, n)
    if m < K + 2 and m < n:
        raise DataError(f"subset size {m} too small for K={K}")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 6]))
    omega = np.sort(rng.choice(n, size=m, replace=False))
    rest = np.setdiff1d(np.arange(n), omega)
    if isinstance(x, ProcessSet):
        ii, jj = np.meshgrid(omega, omega, indexing="ij")
        d_aa = dissimilarity_matrix(x, cfg.measure, cfg.w_time, pairs=np.stack([ii.ravel(), jj.ravel()], 1)).reshape(m, m)
        d_aa = np.triu(d_aa, 1) + np.triu(d_aa, 1).T
        if rest.size:
            ri, rj = np.meshgrid(rest, omega, indexing="ij")
            d_ra = dissimilarity_matrix(x, cfg.measure, cfg.w_time, pairs=np.stack([ri.ravel(), rj.ravel()], 1)).reshape(rest.size, m)
        else:
            d_ra = np.zeros((0, m))
    else:
        D = _as_matrix(x)
        d_aa = D[np.ix_(omega, omega)]
        d_ra = D[np.ix_(rest, omega)]
    anchors = mds_classical(d_aa, K).theta if m > K else np.zeros((m, K))
    theta = np.zeros((n, K))
    theta[omega] = anchors
    loss = mds_objective(d_aa, anchors)
    if rest.size:
        placed, stress = place_points(d_ra, anchors, seed=cfg.seed, n_starts=cfg.n_starts, keys=rest)
        theta[rest] = placed
        loss += float(stress.sum())
    return MdsResult(FeatureMatrix(theta, False, _ids_of(x)), loss, None, "large", omega)


def seq2feature_mds(x, K: int | None = None, cfg: MdsConfig | None = None, return_dist: bool = False, **kw) -> MdsResult:
    """MDS features of a ProcessSet or a precomputed dissimilarity matrix.

    ``method="auto"`` uses classical MDS when ``n <= cfg.threshold``.  With
    ``cfg.pca`` the features are rotated onto their principal axes.
    """
    if cfg is None:
        cfg = MdsConfig(K=K if K is not None else 2, **kw)
    elif K is not None or kw:
        from dataclasses import replace

        cfg = replace(cfg, **({"K": K} if K is not None else {}), **kw)
    K = cfg.K
    n = len(x) if isinstance(x, ProcessSet) else _as_matrix(x).shape[0]
    method = cfg.method if cfg.method != "auto" else ("small" if n <= cfg.threshold else "large")
    dm = None
    if isinstance(x, ProcessSet) and (method == "small" or return_dist):
        dm = dissimilarity_matrix(x, cfg.measure, cfg.w_time)
    elif not isinstance(x, ProcessSet):
        dm = x if isinstance(x, DissimilarityMatrix) else DissimilarityMatrix(_as_matrix(x))
    if method == "small":
        fm = mds_classical(dm, K)
        loss = mds_objective(dm, fm.theta)
        res = MdsResult(FeatureMatrix(fm.theta, False, _ids_of(x)), loss, None, "small")
    else:
        res = mds_large(x if isinstance(x, ProcessSet) else dm, K, cfg)
    res.theta = make_features(res.theta.theta, cfg.pca, _ids_of(x))
    if return_dist:
        res.dist_mat = dm
    return res


def _folds(n: int, n_fold: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(np.random.SeedSequence([seed, 5])).permutation(n)
    return [np.sort(perm[k::n_fold]) for k in range(n_fold)]


def _argmin_tie_small(cv: np.ndarray, scale: float) -> int:
    """Smallest index whose loss ties the minimum (within ``1e-10 * scale`` absolute or 1e-8 relative)."""
    lo = float(np.min(cv))
    tol = max(1e-10 * scale, 1e-8 * abs(lo))
    return int(np.flatnonzero(cv <= lo + tol)[0])


def chooseK_mds(
    x,
    K_cand=range(1, 11),
    n_fold: int = 5,
    seed: int = 0,
    measure: str = "oss_action",
    w_time: float = 0.5,
    return_dist: bool = False,
    n_starts: int = 5,
) -> dict:
    """Select K by k-fold cross-validation.

    For every fold the training objects are embedded classically; each
    held-out object is placed against that embedding and scored by its mean
    squared residual to the training objects.  ``cv_loss`` averages the fold
    losses; ties (up to rounding) go to the smaller K.
    """
    K_cand = [int(k) for k in K_cand]
    if isinstance(x, ProcessSet):
        dm = dissimilarity_matrix(x, measure, w_time)
    else:
        dm = x if isinstance(x, DissimilarityMatrix) else DissimilarityMatrix(_as_matrix(x))
    D = dm.values
    n = D.shape[0]
    if not 2 <= n_fold <= n:
        raise ValueError(f"n_fold must be between 2 and n={n}")
    folds = _folds(n, n_fold, seed)
    min_train = n - max(f.size for f in folds)
    if max(K_cand) >= min_train:
        raise DataError(f"fold too small: K={max(K_cand)} needs more than {min_train} training objects")
    cv = np.zeros(len(K_cand))
    Kmax = max(K_cand)
    for f_i, held in enumerate(folds):
        tr = np.setdiff1d(np.arange(n), held)
        lam, V, _ = _top_eigen(D[np.ix_(tr, tr)], Kmax)
        full = sign_convention(V * np.sqrt(np.maximum(lam, 0.0)))
        d_ht = D[np.ix_(held, tr)]
        for k_i, K in enumerate(K_cand):
            anchors = full[:, :K]
            _, stress = place_points(d_ht, anchors, seed=seed * 1000 + f_i, n_starts=n_starts, keys=held)
            cv[k_i] += stress.sum() / (held.size * tr.size)
    cv /= n_fold
    best = _argmin_tie_small(cv, float(np.mean(D**2)))
    out = {"K": K_cand[best], "K_cand": K_cand, "cv_loss": cv}
    if return_dist:
        out["dist_mat"] = dm
    return out
