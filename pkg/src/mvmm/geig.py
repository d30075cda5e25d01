"""Smallest generalized eigenvectors of ``(L_un(A_bp(X)), diag(deg))``.

The pencil is never formed explicitly. For a matrix ``X`` with no zero rows
or columns, its generalized eigenpairs are read off the SVD of the smaller
matrix :func:`~mvmm.laplacian.tsym` ``(X)``; zero rows and columns are
dropped first and the basis is padded back with zero rows.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .laplacian import _check_matrix, tsym


@dataclass(frozen=True)
class EigenBasis:
    """Generalized eigenbasis ``u`` of shape (R + C, K).

    ``u.T @ diag(deg) @ u == I`` and column ``j`` has generalized eigenvalue
    ``evals[j]`` (ascending). ``attained_value`` is ``sum_j w_j evals[j]``.
    """

    u: np.ndarray
    evals: np.ndarray
    weights: np.ndarray
    attained_value: float
    n_rows: int

    @property
    def k(self):
        return self.u.shape[1]

    @property
    def u_rows(self):
        return self.u[: self.n_rows]

    @property
    def u_cols(self):
        return self.u[self.n_rows:]


def check_weights(w, k=None):
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if k is not None and w.shape != (k,):
        raise ValueError(f"expected {k} weights, got shape {w.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if np.any(np.diff(w) > 0):
        raise ValueError("weights must be nonincreasing")
    return w


def _fix_signs(cols):
    # make the largest-magnitude entry of every column positive
    idx = np.argmax(np.abs(cols), axis=0)
    signs = np.sign(cols[idx, np.arange(cols.shape[1])])
    signs[signs == 0] = 1.0
    return cols * signs


def _nonzero_support(x):
    return x.sum(axis=1) > 0, x.sum(axis=0) > 0


def _check_k(k, rows, cols):
    n_rows, n_cols = int(rows.sum()), int(cols.sum())
    if k < 1 or k > n_rows + n_cols:
        raise ValueError(
            f"k={k} must be between 1 and the number of nonzero rows ({n_rows}) "
            f"plus nonzero columns ({n_cols})"
        )


def _reduced_evals(s, n_rows, n_cols):
    m = min(n_rows, n_cols)
    return np.concatenate(
        [1.0 - s[:m], np.ones(max(n_rows, n_cols) - m), 1.0 + s[:m][::-1]]
    ).clip(0.0, 2.0)


def smallest_generalized_eigenbasis(x, k, w=None):
    """Global minimizer of ``Tr(U^T L_un U diag(w))`` s.t. ``U^T diag(deg) U = I``.

    Parameters
    ----------
    x : array-like of shape (R, C)
        Nonnegative matrix defining the bipartite graph.
    k : int
        Number of eigenvectors; at most the number of nonzero rows plus the
        number of nonzero columns of ``x``.
    w : array-like of shape (k,), optional
        Nonincreasing nonnegative weights, default all ones.

    Returns
    -------
    EigenBasis
    """
    x = _check_matrix(x)
    R, C = x.shape
    rows, cols = _nonzero_support(x)
    _check_k(k, rows, cols)
    w = np.ones(k) if w is None else check_weights(w, k)

    xt = x[rows][:, cols]
    Rt, Ct = xt.shape
    m = min(Rt, Ct)
    left, s, right_h = linalg.svd(tsym(xt), full_matrices=True)
    right = right_h.T

    # columns of the degree-normalized eigenvectors, ascending eigenvalue
    xi = np.zeros((Rt + Ct, Rt + Ct))
    xi[:Rt, :m] = left[:, :m]
    xi[Rt:, :m] = right[:, :m]
    xi[:, :m] /= np.sqrt(2.0)
    if Rt >= Ct:
        xi[:Rt, m:Rt] = left[:, m:]
    else:
        xi[Rt:, m:Ct] = right[:, m:]
    n_pad = max(Rt, Ct)
    rev = np.arange(m)[::-1]
    xi[:Rt, n_pad:] = left[:, rev] / np.sqrt(2.0)
    xi[Rt:, n_pad:] = -right[:, rev] / np.sqrt(2.0)
    xi = _fix_signs(xi[:, :k])

    deg = np.concatenate([xt.sum(axis=1), xt.sum(axis=0)])
    u_red = xi / np.sqrt(deg)[:, None]
    u = np.zeros((R + C, k))
    u[np.concatenate([rows, cols])] = u_red

    evals = _reduced_evals(s, Rt, Ct)[:k]
    return EigenBasis(
        u=u, evals=evals, weights=w, attained_value=float(w @ evals), n_rows=R
    )


def generalized_eigenvalues_bp(x):
    """All generalized eigenvalues of ``(L_un(A_bp(x)), diag(deg))``, ascending."""
    x = _check_matrix(x)
    rows, cols = _nonzero_support(x)
    xt = x[rows][:, cols]
    if xt.size == 0:
        return np.zeros(0)
    s = linalg.svd(tsym(xt), compute_uv=False)
    return _reduced_evals(s, *xt.shape)


def weighted_eigsum(x, w):
    """``sum_j w_j lambda_(j)`` over the smallest generalized eigenvalues.

    Equals the weighted sum of the smallest eigenvalues of the symmetric
    Laplacian of the bipartite graph of ``x`` whenever ``x`` has at least
    ``len(w)`` nonzero rows plus columns.
    """
    x = _check_matrix(x)
    w = check_weights(w)
    rows, cols = _nonzero_support(x)
    _check_k(len(w), rows, cols)
    return float(w @ generalized_eigenvalues_bp(x)[: len(w)])


def generalized_eigenvalues(a, b, tol=1e-10):
    """Generalized eigenvalues of a symmetric pencil with PSD, possibly singular ``b``.

    Computed as the eigenvalues of ``b^{-1/2} a b^{-1/2}`` restricted to the
    range of ``b``. Requires ``ker(b)`` to be contained in ``ker(a)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s, q = linalg.eigh(b)
    scale = max(float(np.max(np.abs(s))), 1.0)
    pos = s > tol * scale
    ker = q[:, ~pos]
    if ker.size and np.max(np.abs(a @ ker)) > 1e-8 * max(np.max(np.abs(a)), 1.0):
        raise ValueError("kernel of b is not contained in kernel of a")
    p = q[:, pos] / np.sqrt(s[pos])
    return linalg.eigvalsh(p.T @ a @ p)
