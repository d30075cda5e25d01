"""Graph Laplacians of bipartite and multi-partite support graphs.

A nonnegative R x C matrix ``X`` is viewed as the weighted bipartite graph
whose vertices are its rows and columns. Connected components of that graph
with at least two vertices are the blocks of ``X`` up to row/column
permutations, and isolated vertices are its zero rows and columns. The same
construction extends to multi-arrays (one vertex per slice of every axis).
"""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.sparse.csgraph import connected_components

ZERO_EVAL_RTOL = 1e-10


def _check_nonneg(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.size == 0 or min(x.shape) < 1:
        raise ValueError(f"{name} must have positive axis lengths, got shape {x.shape}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite and nonnegative")
    return x


def _check_matrix(x, name="x"):
    x = _check_nonneg(x, name)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got {x.ndim} dimensions")
    return x


def bipartite_adjacency(x):
    """Adjacency matrix ``[[0, X], [X.T, 0]]`` of the bipartite graph of ``x``."""
    x = _check_matrix(x)
    R, C = x.shape
    A = np.zeros((R + C, R + C))
    A[:R, R:] = x
    A[R:, :R] = x.T
    return A


def multiarray_adjacency(x):
    """Adjacency matrix of the V-partite graph of a nonnegative multi-array.

    The vertex for slice ``j`` of axis ``a`` is connected to the vertex for
    slice ``k`` of axis ``b != a`` with weight equal to the sum of ``x`` over
    all entries whose ``a``-th index is ``j`` and ``b``-th index is ``k``.
    Vertices are ordered axis by axis. For a matrix this is
    :func:`bipartite_adjacency`.
    """
    x = _check_nonneg(x)
    if x.ndim < 2:
        raise ValueError("x must have at least 2 axes")
    dims = x.shape
    offsets = np.concatenate([[0], np.cumsum(dims)])
    A = np.zeros((offsets[-1], offsets[-1]))
    for a, b in combinations(range(x.ndim), 2):
        other = tuple(ax for ax in range(x.ndim) if ax not in (a, b))
        block = x.sum(axis=other) if other else x
        A[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]] = block
        A[offsets[b]:offsets[b + 1], offsets[a]:offsets[a + 1]] = block.T
    return A


def degrees(adjacency):
    """Vertex degrees ``A @ 1``."""
    return np.asarray(adjacency, dtype=float).sum(axis=1)


def _inv_sqrt(deg):
    # Moore-Penrose convention: zero degrees map to zero.
    out = np.zeros_like(deg, dtype=float)
    pos = deg > 0
    out[pos] = 1.0 / np.sqrt(deg[pos])
    return out


def unnormalized_laplacian(adjacency):
    """``diag(deg(A)) - A``."""
    A = np.asarray(adjacency, dtype=float)
    return np.diag(degrees(A)) - A


def symmetric_laplacian(adjacency):
    """``I - D^{-1/2} A D^{-1/2}`` with the pseudo-inverse of ``D``.

    The diagonal is identically one, including isolated vertices.
    """
    A = np.asarray(adjacency, dtype=float)
    s = _inv_sqrt(degrees(A))
    L = np.eye(A.shape[0]) - s[:, None] * A * s[None, :]
    return 0.5 * (L + L.T)


def tsym(x):
    """Degree-normalized matrix ``diag(X 1)^{-1/2} X diag(X^T 1)^{-1/2}``.

    The eigenvalues of the symmetric Laplacian of the bipartite graph of
    ``x`` are ``1 +/- s`` for the singular values ``s`` of this matrix, plus
    ``R + C - 2 min(R, C)`` ones.
    """
    x = _check_matrix(x)
    return _inv_sqrt(x.sum(axis=1))[:, None] * x * _inv_sqrt(x.sum(axis=0))[None, :]


@dataclass(frozen=True)
class LaplacianBundle:
    adjacency: np.ndarray
    degrees: np.ndarray
    l_un: np.ndarray
    l_sym: np.ndarray
    t_sym: np.ndarray = None


def laplacian_bundle(x):
    """All Laplacian quantities of a nonnegative matrix or multi-array."""
    x = _check_nonneg(x)
    A = bipartite_adjacency(x) if x.ndim == 2 else multiarray_adjacency(x)
    return LaplacianBundle(
        adjacency=A,
        degrees=degrees(A),
        l_un=unnormalized_laplacian(A),
        l_sym=symmetric_laplacian(A),
        t_sym=tsym(x) if x.ndim == 2 else None,
    )


@dataclass(frozen=True)
class BlockStructure:
    """Maximally block diagonal arrangement of a nonnegative table.

    ``axis_blocks[a][j]`` is the block index of slice ``j`` of axis ``a``,
    or -1 if that slice is identically zero. ``perms[a]`` sorts the slices
    of axis ``a`` by block (zero slices last).
    """

    num_blocks: int
    axis_blocks: list
    perms: list
    degenerate: bool = False
    shape: tuple = field(default=())

    @property
    def row_block(self):
        return self.axis_blocks[0]

    @property
    def col_block(self):
        return self.axis_blocks[1]

    @property
    def row_perm(self):
        return self.perms[0]

    @property
    def col_perm(self):
        return self.perms[1]

    @property
    def zero_slices(self):
        return [np.flatnonzero(b < 0) for b in self.axis_blocks]

    @property
    def zero_rows(self):
        return self.zero_slices[0]

    @property
    def zero_cols(self):
        return self.zero_slices[1]

    def cell_blocks(self):
        """Block index of every cell of the table, -1 for off-block cells."""
        grids = np.meshgrid(*self.axis_blocks, indexing="ij")
        out = grids[0].copy()
        for g in grids[1:]:
            out[g != grids[0]] = -1
        return out

    def to_dict(self):
        return {
            "num_blocks": int(self.num_blocks),
            "degenerate": bool(self.degenerate),
            "shape": [int(s) for s in self.shape],
            "axis_blocks": [b.tolist() for b in self.axis_blocks],
            "perms": [p.tolist() for p in self.perms],
            "zero_slices": [z.tolist() for z in self.zero_slices],
        }


def default_support_tol(x):
    x = np.asarray(x, dtype=float)
    return 1e-8 * float(np.max(np.abs(x))) if x.size else 0.0


def count_blocks(x, support_tol=None):
    """Number of blocks of ``x`` up to permutations, and the arrangement.

    Entries with ``|x| <= support_tol`` are treated as zero (default
    ``1e-8 * max(x)``). Blocks are the connected components with at least
    two vertices of the support graph; an all-zero table has zero blocks
    and is flagged as degenerate.
    """
    x = _check_nonneg(x)
    if x.ndim < 2:
        raise ValueError("x must have at least 2 axes")
    if support_tol is None:
        support_tol = default_support_tol(x)
    support = (np.abs(x) > support_tol).astype(float)
    dims = support.shape
    offsets = np.concatenate([[0], np.cumsum(dims)])

    A = multiarray_adjacency(support)
    _, comp = connected_components(A > 0, directed=False)
    isolated = degrees(A) == 0

    # number blocks by first appearance so labels are deterministic
    block_of_comp = {}
    labels = np.full(offsets[-1], -1)
    for i in range(offsets[-1]):
        if isolated[i]:
            continue
        labels[i] = block_of_comp.setdefault(comp[i], len(block_of_comp))
    num_blocks = len(block_of_comp)

    axis_blocks, perms = [], []
    for a in range(len(dims)):
        b = labels[offsets[a]:offsets[a + 1]]
        key = np.where(b < 0, num_blocks, b)
        axis_blocks.append(b)
        perms.append(np.argsort(key, kind="stable"))
    return BlockStructure(
        num_blocks=num_blocks,
        axis_blocks=axis_blocks,
        perms=perms,
        degenerate=num_blocks == 0,
        shape=tuple(dims),
    )


def count_zero_eigenvalues(evals, rtol=ZERO_EVAL_RTOL):
    evals = np.asarray(evals)
    scale = max(float(np.max(np.abs(evals))) if evals.size else 1.0, 1.0)
    return int(np.sum(np.abs(evals) <= rtol * scale))


@dataclass(frozen=True)
class SpectrumReport:
    sym_evals: np.ndarray
    un_evals: np.ndarray
    sym_zero_count: int
    un_zero_count: int
    blocks: BlockStructure

    def to_dict(self):
        return {
            "sym_evals": self.sym_evals.tolist(),
            "un_evals": self.un_evals.tolist(),
            "sym_zero_count": self.sym_zero_count,
            "un_zero_count": self.un_zero_count,
            "blocks": self.blocks.to_dict(),
        }


def spectrum_report(x, support_tol=None):
    """Sorted spectra of both Laplacians of the bipartite graph of ``x``."""
    A = bipartite_adjacency(x)
    sym = np.linalg.eigvalsh(symmetric_laplacian(A))
    un = np.linalg.eigvalsh(unnormalized_laplacian(A))
    # eigvalsh round-off can dip slightly below zero
    sym = np.clip(sym, 0.0, 2.0)
    un = np.clip(un, 0.0, None)
    return SpectrumReport(
        sym_evals=sym,
        un_evals=un,
        sym_zero_count=count_zero_eigenvalues(sym),
        un_zero_count=count_zero_eigenvalues(un),
        blocks=count_blocks(x, support_tol),
    )
