"""Graph-based feature ranking (infinite feature selection).

Features are nodes of a fully connected weighted graph.  The edge weight
between features i and j blends a relevance term (the larger of their
normalized standard deviations) with a non-redundancy term (one minus the
absolute Spearman correlation):

    A[i, j] = alpha * max(s_i, s_j) + (1 - alpha) * (1 - |rho_ij|)

Summing path weights over paths of every length, discounted so the sum
converges, gives each feature an importance score:

    S = sum_{l>=1} (r A)^l = (I - r A)^-1 - I,   scores = S @ 1

with ``r = r_factor / spectral_radius(A)`` so the geometric series
converges for any ``r_factor < 1``.  Only ``(I - rA) z = 1`` is ever
solved; the matrix is symmetric positive definite with eigenvalues in
``[1 - r_factor, 1 + r_factor]``, so conjugate gradients converge in a
few dozen iterations even for descriptor dimensions in the thousands.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import (
    ColumnMismatchError,
    DegenerateDataError,
    SingularSystemError,
)


def _check_finite(X):
    if not np.isfinite(X).all():
        raise DegenerateDataError("feature matrix contains NaN or Inf")


# Beyond this width, `IfsSelector.fit` builds the affinity in row blocks:
# the dense expression below holds ~4 D^2 temporaries at its peak, which
# for a ten-region concatenated descriptor does not fit in memory.
_WIDE_MIN_COLUMNS = 4096
_WIDE_BLOCK = 512


def _affinity_inputs(X, alpha):
    """Validate X and return (normalized stds, normalized centered ranks)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateDataError("need at least 2 samples to build affinities")
    _check_finite(X)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")

    std = X.std(axis=0)
    max_std = std.max()
    if max_std == 0.0:
        raise DegenerateDataError("all features are constant")
    rel = std / max_std

    # Spearman as Pearson on average ranks; constant columns would divide
    # by zero, so their centered ranks are left at exactly zero.
    ranks = rankdata(X, axis=0, method="average")
    ranks -= ranks.mean(axis=0)
    norm = np.sqrt((ranks * ranks).sum(axis=0))
    nz = norm > 0.0
    ranks[:, nz] /= norm[nz]
    return rel, ranks


def affinity_matrix(X, alpha=0.5):
    """Pairwise feature affinity for a samples-by-features matrix.

    Standard deviations are normalized by the largest one; Spearman
    correlation uses average ranks for ties, and any pair involving a
    constant feature gets correlation 0.  The diagonal is zero.  Raises
    `DegenerateDataError` when every feature is constant.
    """
    rel, ranks = _affinity_inputs(X, alpha)
    corr = ranks.T @ ranks
    np.clip(np.abs(corr, out=corr), 0.0, 1.0, out=corr)

    A = alpha * np.maximum.outer(rel, rel) + (1.0 - alpha) * (1.0 - corr)
    A = (A + A.T) * 0.5  # BLAS products are not exactly symmetric
    np.fill_diagonal(A, 0.0)
    return A


def _wide_affinity(rel, ranks, alpha, block=_WIDE_BLOCK):
    """Same affinity as `affinity_matrix`, built with one D^2 allocation.

    Rows are filled a block at a time so intermediates stay at block*D;
    symmetrization swaps opposing blocks in place instead of forming
    ``(A + A.T) * 0.5`` out of place.
    """
    d = rel.shape[0]
    A = np.empty((d, d))
    for i0 in range(0, d, block):
        i1 = min(i0 + block, d)
        rows = ranks[:, i0:i1].T @ ranks
        np.clip(np.abs(rows, out=rows), 0.0, 1.0, out=rows)
        rows -= 1.0
        rows *= alpha - 1.0  # == (1 - alpha) * (1 - corr)
        edge = np.maximum.outer(rel[i0:i1], rel)
        edge *= alpha
        rows += edge
        A[i0:i1] = rows
    for i0 in range(0, d, block):
        i1 = min(i0 + block, d)
        for j0 in range(i0, d, block):
            j1 = min(j0 + block, d)
            upper = A[i0:i1, j0:j1]
            mean = upper + A[j0:j1, i0:i1].T
            mean *= 0.5
            upper[...] = mean
            A[j0:j1, i0:i1] = mean.T
    np.fill_diagonal(A, 0.0)
    return A


def spectral_radius(A, max_iter=100, tol=1e-10):
    """Largest eigenvalue magnitude of a symmetric non-negative matrix.

    Power iteration from the all-ones vector with the norm-ratio estimate
    ``|A v| / |v|``; stops when the estimate moves by less than ``tol``
    relative, or after ``max_iter`` products.  Returns 0.0 for the zero
    matrix.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    estimate = 0.0
    for _ in range(max_iter):
        w = A @ v
        new_estimate = float(np.linalg.norm(w))
        if new_estimate == 0.0:
            return 0.0  # a non-negative matrix annihilating 1 is zero
        v = w / new_estimate
        if abs(new_estimate - estimate) <= tol * new_estimate:
            return new_estimate
        estimate = new_estimate
    return estimate


@dataclass
class IfsResult:
    scores: np.ndarray    # (D,) non-negative path-sum scores
    ranking: np.ndarray   # (D,) feature indices, best first
    zero_graph: bool      # True when A had no edges at all


def _validate_square_symmetric(A):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.size and A.min() < 0.0:
        raise ValueError("affinity matrix must be non-negative")
    if not np.array_equal(A, A.T):
        raise ValueError("affinity matrix must be symmetric")


def _solve_cg(matvec, b, tol=1e-12, max_iter=None):
    """Conjugate gradients for an SPD operator given as a closure."""
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n + 100
    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    b_norm = float(np.sqrt(b @ b))
    if b_norm == 0.0:
        return x
    for _ in range(max_iter):
        if np.sqrt(rs) <= tol * b_norm:
            return x
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SingularSystemError("operator is not positive definite")
        step = rs / pAp
        x += step * p
        r -= step * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SingularSystemError("conjugate gradient did not converge")


def ifs_scores(A, r_factor=0.9):
    """Path-sum importance scores for a precomputed affinity matrix.

    Returns an `IfsResult`; the ranking sorts by descending score with
    ties broken by ascending feature index.  An all-zero affinity matrix
    yields zero scores and the identity ranking, flagged by ``zero_graph``.
    """
    A = np.asarray(A, dtype=np.float64)
    _validate_square_symmetric(A)
    if not 0.0 < r_factor < 1.0:
        raise ValueError(f"r_factor must lie in (0, 1), got {r_factor}")
    n = A.shape[0]
    rho = spectral_radius(A)
    if rho == 0.0:
        return IfsResult(scores=np.zeros(n), ranking=np.arange(n),
                         zero_graph=True)
    r = r_factor / rho
    ones = np.ones(n)
    z = _solve_cg(lambda p: p - r * (A @ p), ones)
    scores = np.maximum(z - 1.0, 0.0)  # clamp CG noise; true scores are >= 0
    ranking = np.lexsort((np.arange(n), -scores))
    return IfsResult(scores=scores, ranking=ranking, zero_graph=False)


def select_top(result, count):
    """First ``count`` features of a ranking, as sorted indices."""
    if count < 1 or count > result.ranking.shape[0]:
        raise ValueError(f"cannot keep {count} of {result.ranking.shape[0]} features")
    return np.sort(result.ranking[:count])


class IfsSelector:
    """Fit-once feature selector wrapping the graph ranking.

    Keeps ``max(1, round(keep_fraction * D))`` features.  `transform`
    checks the column count against the fitted width and slices the kept
    columns in ascending index order.
    """

    def __init__(self, alpha=0.5, r_factor=0.9, keep_fraction=0.2):
        if not 0.0 < keep_fraction <= 1.0:
            raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
        self.alpha = alpha
        self.r_factor = r_factor
        self.keep_fraction = keep_fraction
        self.n_features_in_ = None
        self.scores_ = None
        self.ranking_ = None
        self.selected_indices_ = None
        self.zero_graph_ = None

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2 and X.shape[1] >= _WIDE_MIN_COLUMNS:
            rel, ranks = _affinity_inputs(X, self.alpha)
            A = _wide_affinity(rel, ranks, self.alpha)
        else:
            A = affinity_matrix(X, alpha=self.alpha)
        result = ifs_scores(A, r_factor=self.r_factor)
        keep = max(1, int(np.floor(self.keep_fraction * X.shape[1] + 0.5)))
        keep = min(keep, X.shape[1])
        self.n_features_in_ = X.shape[1]
        self.scores_ = result.scores
        self.ranking_ = result.ranking
        self.zero_graph_ = result.zero_graph
        self.selected_indices_ = select_top(result, keep)
        return self

    def transform(self, X):
        if self.selected_indices_ is None:
            raise RuntimeError("selector is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ColumnMismatchError(
                X.shape[1] if X.ndim == 2 else None, self.n_features_in_)
        return X[:, self.selected_indices_]

    def fit_transform(self, X):
        return self.fit(X).transform(X)
