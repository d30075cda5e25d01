import itertools

import numpy as np
import pytest

from mvmm.block_diag_opt import (
    AlternateError,
    QuadraticOracle,
    SubproblemError,
    alternate,
    build_subproblem,
    constraint_rows,
    coupling_matrix,
    prune_constraints,
    solve_separable,
    vertex_to_table,
)
from mvmm.geig import smallest_generalized_eigenbasis, weighted_eigsum
from mvmm.laplacian import bipartite_adjacency, count_blocks, degrees, unnormalized_laplacian


def block_indicator_basis(x):
    return smallest_generalized_eigenbasis(x, count_blocks(x).num_blocks)


def test_coupling_block_indicators():
    x = np.kron(np.eye(2), np.ones((2, 3)))
    b = block_indicator_basis(x)
    M = coupling_matrix(b)
    # B-orthonormal block indicators have entries 1 / sqrt(vol(block))
    vol = x.sum()  # each block: 6 cells, degree volume 6 + 6
    expected = np.where(x > 0, 0.0, 1 / vol + 1 / vol)
    np.testing.assert_allclose(M, expected, atol=1e-12)


def test_coupling_identical_embeddings_is_zero(rng):
    half = rng.standard_normal((3, 2))
    M = coupling_matrix(np.vstack([half, half]), n_rows=3)
    np.testing.assert_allclose(np.diag(M), 0, atol=1e-12)
    same = np.tile(rng.standard_normal(2), (7, 1))
    np.testing.assert_allclose(coupling_matrix(same, n_rows=3), 0, atol=1e-12)


def test_coupling_brute_force(rng):
    U, w = rng.standard_normal((7, 3)), np.array([2.0, 1.0, 0.5])
    M = coupling_matrix(U, w, n_rows=4)
    for r, c in itertools.product(range(4), range(3)):
        diff = U[r] - U[4 + c]
        assert M[r, c] == pytest.approx(np.sum(w * diff**2))


def test_coupling_reproduces_trace(rng):
    x = rng.random((4, 5))
    b = smallest_generalized_eigenbasis(x, 3, [3.0, 2.0, 1.0])
    L = unnormalized_laplacian(bipartite_adjacency(x))
    y = rng.random((4, 5))
    Ly = unnormalized_laplacian(bipartite_adjacency(y))
    assert np.sum(y * coupling_matrix(b, b.weights)) == pytest.approx(
        np.trace(b.u.T @ Ly @ b.u @ np.diag(b.weights)))
    assert np.sum(x * coupling_matrix(b, b.weights)) == pytest.approx(b.attained_value, abs=1e-10)
    assert np.trace(b.u.T @ L @ b.u @ np.diag(b.weights)) == pytest.approx(b.attained_value)


def test_constraint_rows_single_column(rng):
    x = rng.random((3, 3))
    b = smallest_generalized_eigenbasis(x, 1)
    rows = constraint_rows(b)
    assert rows.c_utri.shape == (6, 0)
    assert np.sum(vertex_to_table(rows.c_diag[:, 0], 3) * x) == pytest.approx(1.0)


def test_constraint_rows_disjoint_blocks_prune_cross_term():
    x = np.kron(np.eye(2), np.ones((2, 2)))
    b = block_indicator_basis(x)
    rows = constraint_rows(b)
    np.testing.assert_allclose(rows.c_utri[:, 0], 0, atol=1e-12)
    spec = build_subproblem(b, alpha=1.0)
    assert "utri0,1" in spec.pruned


def test_constraint_rows_reconstruct_gram(rng):
    x = rng.random((4, 5))
    b = smallest_generalized_eigenbasis(x, 3)
    rows = constraint_rows(b)
    assert rows.c_diag.shape[1] == 3 and rows.c_utri.shape[1] == 3
    d = degrees(bipartite_adjacency(x))
    gram = b.u.T @ (d[:, None] * b.u)
    for j in range(3):
        assert d @ rows.c_diag[:, j] == pytest.approx(gram[j, j], abs=1e-12)
    for p, (l, j) in enumerate(rows.pairs):
        assert d @ rows.c_utri[:, p] == pytest.approx(gram[l, j], abs=1e-12)


def test_solve_separable_kkt_quadratic(rng):
    for _ in range(20):
        n, m = 12, 3
        target = rng.standard_normal(n)
        G = rng.random((m, n))
        h = G @ rng.random(n)
        c = rng.standard_normal(n)
        res = solve_separable(lambda x: 2 * (x - target), lambda x: np.full_like(x, 2.0),
                              c, G, h, np.ones(n))
        assert res.relative_primal < 1e-8 and res.relative_stationarity < 1e-8
        assert np.all(res.x >= 0) and np.all(res.z >= 0)
        assert res.complementarity < 1e-10


def test_alternate_alpha_zero_is_single_solve():
    target = np.array([[1.0, 0.2], [0.3, 2.0]])
    trace = alternate(QuadraticOracle(target), np.ones((2, 2)), k=2, alpha=0.0)
    assert trace.n_iter == 1
    np.testing.assert_allclose(trace.x, target, atol=1e-6)


def test_alternate_block_diagonal_target_is_fixed():
    target = np.kron(np.eye(2), np.array([[1.0, 2.0], [0.5, 1.0]]))
    trace = alternate(QuadraticOracle(target), target, k=2, alpha=5.0)
    np.testing.assert_allclose(trace.x, target, atol=1e-6)
    assert trace.objective[-1] == pytest.approx(0.0, abs=1e-8)


def _best_two_block_support(target):
    """Exhaustive search over 2-block support patterns: least off-block mass."""
    R, C = target.shape
    best, best_mask = np.inf, None
    for rows in itertools.product([0, 1], repeat=R):
        for cols in itertools.product([0, 1], repeat=C):
            if len(set(rows)) < 2 or len(set(cols)) < 2:
                continue
            mask = np.equal.outer(rows, cols)
            loss = np.sum(target[~mask] ** 2)
            if loss < best:
                best, best_mask = loss, mask
    return best_mask


def test_alternate_large_alpha_finds_two_blocks():
    eps = 0.05
    target = np.kron(np.eye(2), np.ones((2, 2))) + eps * (1 - np.kron(np.eye(2), np.ones((2, 2))))
    trace = alternate(QuadraticOracle(target), target, k=2, alpha=50.0)
    assert weighted_eigsum(trace.x, np.ones(2)) < 1e-8
    assert count_blocks(trace.x, support_tol=1e-6).num_blocks == 2
    np.testing.assert_array_equal(trace.x > 1e-6, _best_two_block_support(target))


def test_alternate_monotone_and_fixed_point(rng):
    for _ in range(5):
        target = rng.random((4, 5))
        trace = alternate(QuadraticOracle(target), target, k=2, alpha=1.0, tol=1e-10)
        obj = np.array(trace.objective)
        assert np.all(np.diff(obj) <= 1e-9 * np.maximum(1.0, np.abs(obj[:-1])))
        if trace.converged:
            again = alternate(QuadraticOracle(target), trace.x, k=2, alpha=1.0, max_iter=1)
            assert abs(again.objective[-1] - obj[-1]) <= 1e-6 * max(1.0, abs(obj[-1]))


def test_alternate_degree_check():
    x = np.zeros((3, 3))
    x[0, 0] = 1.0
    with pytest.raises(AlternateError, match="positive degree"):
        alternate(QuadraticOracle(x), x, k=3)


def test_alternate_rejects_negative_alpha():
    with pytest.raises(ValueError, match="alpha"):
        alternate(QuadraticOracle(np.ones((2, 2))), np.ones((2, 2)), k=1, alpha=-1.0)


def test_degree_scaling_consistency(rng):
    x = rng.random((3, 4))
    b = smallest_generalized_eigenbasis(x, 2)
    c = 3.7
    bc = smallest_generalized_eigenbasis(c * x, 2)
    d = degrees(bipartite_adjacency(c * x))
    u = b.u / np.sqrt(c)
    np.testing.assert_allclose(u.T @ (d[:, None] * u), np.eye(2), atol=1e-10)
    assert bc.attained_value == pytest.approx(b.attained_value)
    spec = build_subproblem(b, alpha=1.0)
    # the constraints that are tight at x stay tight at c * x with the rescaled basis
    spec_c = build_subproblem(_Basis(u, 3), alpha=1.0)
    np.testing.assert_allclose(spec_c.matrix() @ (c * x).ravel(), spec_c.eq_rhs, atol=1e-10)
    np.testing.assert_allclose(spec.matrix() @ x.ravel(), spec.eq_rhs, atol=1e-10)


class _Basis:
    def __init__(self, u, n_rows):
        self.u, self.n_rows = u, n_rows


def test_prune_constraints_tolerates_rounding_but_not_conflict():
    G = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 2.0, 1.0]])
    h = np.array([1.0, 2.0, 3.0])
    assert len(prune_constraints(G, h)) == 2
    assert len(prune_constraints(G, h + np.array([0, 0, 1e-8]))) == 2
    with pytest.raises(SubproblemError, match="inconsistent"):
        prune_constraints(G, h + np.array([0, 0, 1e-3]))
