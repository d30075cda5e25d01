"""Alternating minimization of ``f(X) + alpha * sum_j w_j lambda_(j)(L_sym(A_bp(X)))``.

For a fixed eigenbasis ``U`` the eigenvalue penalty becomes the weighted
lasso term ``<X, M(U, w)>`` and the orthonormality constraint
``U^T diag(deg) U = I`` becomes a handful of linear equalities in ``X``.
The X-step is delegated to an objective oracle; :func:`solve_separable`
handles any separable convex ``f`` with a primal-dual barrier method.
"""
import logging
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import linalg

from .geig import check_weights, smallest_generalized_eigenbasis, weighted_eigsum

logger = logging.getLogger(__name__)

PRUNE_RTOL = 1e-10
# dropped rows come from an eigenbasis known only to eigensolver accuracy
CONSISTENCY_TOL = 1e-6
DEGREE_FLOOR = 1e-12


class SubproblemError(RuntimeError):
    """The X-subproblem could not be solved; ``best`` holds the last iterate."""

    def __init__(self, msg, best=None, residuals=None):
        super().__init__(msg)
        self.best = best
        self.residuals = residuals


class AlternateError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


def _as_u(u):
    return (u.u, u.n_rows) if hasattr(u, "u") else (np.asarray(u, dtype=float), None)


def coupling_matrix(u, w=None, n_rows=None):
    """Weighted-lasso weights ``M_rc = ||diag(w)^{1/2} (U_rows[r] - U_cols[c])||^2``.

    ``Tr(U^T L_un(A_bp(X)) U diag(w)) == <X, M>`` for every ``X``.
    """
    U, nr = _as_u(u)
    n_rows = nr if n_rows is None else n_rows
    w = np.ones(U.shape[1]) if w is None else np.asarray(w, dtype=float)
    sw = np.sqrt(w)
    rows, cols = U[:n_rows] * sw, U[n_rows:] * sw
    M = (
        (rows**2).sum(axis=1)[:, None]
        + (cols**2).sum(axis=1)[None, :]
        - 2.0 * rows @ cols.T
    )
    return np.maximum(M, 0.0)


@dataclass(frozen=True)
class ConstraintRows:
    c_diag: np.ndarray
    c_utri: np.ndarray
    pairs: list


def constraint_rows(u):
    """Vertex-space coefficients of ``U^T diag(deg) U = I``.

    ``c_diag[:, j] = U_j * U_j`` (right-hand side 1) and ``c_utri`` holds
    ``U_l * U_j`` for ``l < j`` (right-hand side 0).
    """
    U, _ = _as_u(u)
    pairs = list(combinations(range(U.shape[1]), 2))
    c_utri = np.column_stack([U[:, l] * U[:, j] for l, j in pairs]) if pairs else (
        np.zeros((U.shape[0], 0))
    )
    return ConstraintRows(c_diag=U * U, c_utri=c_utri, pairs=pairs)


def vertex_to_table(c, n_rows):
    """Map a vertex weight vector to the table ``T`` with ``sum_i c_i deg_i(X) = <T, X>``."""
    c = np.asarray(c, dtype=float)
    return c[:n_rows, None] + c[None, n_rows:]


def prune_constraints(G, h, rtol=PRUNE_RTOL, consistency_tol=CONSISTENCY_TOL):
    """Drop linearly dependent rows of ``G x = h``.

    Returns the kept row indices. Raises :class:`SubproblemError` if a
    dropped row is violated by more than ``consistency_tol`` (relative to
    the size of its terms) at the least-squares solution of the kept rows.
    """
    if G.shape[0] == 0:
        return np.arange(0)
    _, r, piv = linalg.qr(G.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > rtol * d[0])) if d.size and d[0] > 0 else 0
    keep = np.sort(piv[:rank])
    if rank < G.shape[0]:
        x_ls = linalg.lstsq(G[keep], h[keep])[0] if rank else np.zeros(G.shape[1])
        # residual relative to the size of the terms in each row
        resid = np.abs(G @ x_ls - h) / (1.0 + np.abs(G) @ np.abs(x_ls))
        if np.max(resid) > consistency_tol:
            raise SubproblemError(
                f"inconsistent equality constraints after pruning (residual {resid.max():.3g})"
            )
    return keep


@dataclass
class SubproblemSpec:
    """Linearized X-subproblem for a fixed eigenbasis.

    Minimize ``f(X) + alpha * <X, coupling>`` subject to ``X >= 0`` and
    ``<eq_tables[i], X> = eq_rhs[i]`` for every kept constraint.
    """

    coupling: np.ndarray
    alpha: float
    eq_tables: np.ndarray
    eq_rhs: np.ndarray
    labels: list = field(default_factory=list)
    pruned: list = field(default_factory=list)
    simplex_rhs: float = None

    @property
    def shape(self):
        return self.coupling.shape

    def matrix(self):
        return self.eq_tables.reshape(len(self.eq_rhs), self.coupling.size)

    def feasibility_residual(self, x):
        if not len(self.eq_rhs):
            return 0.0
        return float(np.max(np.abs(self.matrix() @ np.ravel(x) - self.eq_rhs)))


def build_subproblem(u, alpha, w=None, simplex_rhs=None, prune=True):
    """X-subproblem data for eigenbasis ``u`` (an :class:`EigenBasis`)."""
    U, n_rows = _as_u(u)
    R, C = n_rows, U.shape[0] - n_rows
    w = np.ones(U.shape[1]) if w is None else np.asarray(w, dtype=float)
    coupling = coupling_matrix(U, w, n_rows)

    tables, rhs, labels = [], [], []
    if simplex_rhs is not None:
        tables.append(np.ones((R, C)))
        rhs.append(float(simplex_rhs))
        labels.append("total")
    if alpha > 0:
        rows = constraint_rows(U)
        for j in range(U.shape[1]):
            tables.append(vertex_to_table(rows.c_diag[:, j], R))
            rhs.append(1.0)
            labels.append(f"diag{j}")
        for p, (l, j) in enumerate(rows.pairs):
            tables.append(vertex_to_table(rows.c_utri[:, p], R))
            rhs.append(0.0)
            labels.append(f"utri{l},{j}")
    tables = np.array(tables).reshape(len(rhs), R, C)
    rhs = np.array(rhs, dtype=float)

    pruned = []
    if prune and len(rhs):
        keep = prune_constraints(tables.reshape(len(rhs), -1), rhs)
        pruned = [labels[i] for i in range(len(rhs)) if i not in set(keep)]
        tables, rhs = tables[keep], rhs[keep]
        labels = [labels[i] for i in keep]
    return SubproblemSpec(
        coupling=coupling,
        alpha=float(alpha),
        eq_tables=tables,
        eq_rhs=rhs,
        labels=labels,
        pruned=pruned,
        simplex_rhs=simplex_rhs,
    )


def unpenalized_subproblem(shape, simplex_rhs=None):
    """X-subproblem without eigen constraints (``alpha == 0``)."""
    tables = np.ones((1, *shape)) if simplex_rhs is not None else np.zeros((0, *shape))
    rhs = np.array([simplex_rhs], dtype=float) if simplex_rhs is not None else np.zeros(0)
    return SubproblemSpec(
        coupling=np.zeros(shape),
        alpha=0.0,
        eq_tables=tables,
        eq_rhs=rhs,
        labels=["total"] if simplex_rhs is not None else [],
        simplex_rhs=simplex_rhs,
    )


@dataclass
class BarrierResult:
    x: np.ndarray
    nu: np.ndarray
    z: np.ndarray
    mu: float
    stationarity: float
    primal: float
    complementarity: float
    newton_steps: int
    scale: float = 1.0
    primal_scale: float = 1.0

    @property
    def relative_stationarity(self):
        """Stationarity residual over ``1 + max|c| + max|grad f(x)|``."""
        return self.stationarity / self.scale

    @property
    def relative_primal(self):
        """Equality residual over ``1 + max_i sum_j |G_ij| x_j``."""
        return self.primal / self.primal_scale


def _solve_schur(S, rhs):
    # S loses rank near solutions where the active equalities are dependent;
    # the minimum-norm solution keeps the multipliers bounded
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            return linalg.solve(S, rhs, assume_a="pos")
        except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError):
            pass
    return linalg.lstsq(S, rhs, cond=1e-13)[0]


def solve_separable(grad, hess, c, G, h, x0, mu0=1e-3, mu_min=1e-12,
                    mu_factor=0.2, tol=1e-12, max_newton=200, x_floor=1e-10):
    """Minimize ``f(x) + c @ x`` subject to ``x >= 0`` and ``G x = h``.

    ``f`` is separable and convex, given by its elementwise gradient and
    (positive) Hessian diagonal. Uses an infeasible-start Newton method on
    the log-barrier problem, shrinking the barrier weight ``mu`` by
    ``mu_factor`` until it falls below ``mu_min``. Residuals are measured
    relative to the size of their terms (see :class:`BarrierResult`).

    Returns
    -------
    BarrierResult
        ``z = mu / x`` are the multipliers of ``x >= 0``; the three KKT
        residuals are reported as infinity norms.
    """
    x = np.maximum(np.asarray(x0, dtype=float).ravel(), 0.0)
    x = np.where(x > x_floor, x, x_floor)
    c = np.asarray(c, dtype=float).ravel()
    m = G.shape[0]
    nu = np.zeros(m)
    mu = mu0
    steps = 0

    def residual(x, nu, mu):
        rd = grad(x) + c - mu / x
        if m:
            rd = rd + G.T @ nu
            return rd, G @ x - h
        return rd, np.zeros(0)

    def scale(x):
        return 1.0 + np.max(np.abs(c)) + np.max(np.abs(grad(x)))

    def primal_scale(x):
        return 1.0 + (float(np.max(np.abs(G) @ x)) if m else 0.0)

    while True:
        # intermediate centering problems only need O(mu) accuracy
        round_tol = tol if mu <= mu_min else max(tol, 0.1 * mu)
        for _ in range(max_newton):
            rd, rp = residual(x, nu, mu)
            rnorm = np.sqrt(rd @ rd + rp @ rp)
            if np.max(np.abs(rd)) <= round_tol * scale(x) and (
                not m or np.max(np.abs(rp)) <= round_tol * primal_scale(x)
            ):
                break
            Hinv = 1.0 / (hess(x) + mu / x**2)
            g = rd - (G.T @ nu if m else 0.0)  # gradient of the barrier objective
            if m:
                S = (G * Hinv) @ G.T
                rhs = -(G * Hinv) @ g + rp
                nu_new = _solve_schur(S, rhs)
                dx = -Hinv * (g + G.T @ nu_new)
                dnu = nu_new - nu
            else:
                dx = -Hinv * g
                dnu = nu
            neg = dx < 0
            t = min(1.0, 0.99 * np.min(-x[neg] / dx[neg])) if np.any(neg) else 1.0
            while True:
                xn, nun = x + t * dx, nu + t * dnu
                rdn, rpn = residual(xn, nun, mu)
                if np.sqrt(rdn @ rdn + rpn @ rpn) <= (1 - 0.01 * t) * rnorm or t < 1e-12:
                    break
                t *= 0.5
            x, nu = xn, nun
            steps += 1
            if t < 1e-10:
                # no further progress at this mu (residual left in directions
                # the barrier blocks); move on to the next round
                break
        if mu <= mu_min:
            break
        mu = max(mu * mu_factor, mu_min * 0.999)

    rd, rp = residual(x, nu, mu)
    z = mu / x
    return BarrierResult(
        x=x,
        nu=nu,
        z=z,
        mu=mu,
        stationarity=float(np.max(np.abs(rd))),
        primal=float(np.max(np.abs(rp))) if m else 0.0,
        complementarity=float(np.max(z * x)),
        newton_steps=steps,
        scale=float(scale(x)),
        primal_scale=float(primal_scale(x)),
    )


class ObjectiveOracle:
    """Smooth objective ``f`` with a solver for its linearized X-subproblem.

    Subclasses implement :meth:`evaluate` and :meth:`solve_subproblem`; the
    solver must return a feasible global minimizer of
    ``f(X) + spec.alpha * <X, spec.coupling>`` (or of a surrogate of ``f``
    that majorizes it and touches it at ``x_current``).
    """

    simplex_rhs = None

    def evaluate(self, x):
        raise NotImplementedError

    def solve_subproblem(self, spec, x_current):
        raise NotImplementedError


class SeparableOracle(ObjectiveOracle):
    """Oracle for separable convex ``f`` solved with :func:`solve_separable`."""

    kkt_tol = 1e-8
    mu0 = 1e-3

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def evaluate(self, x):
        return float(np.sum(self.value(np.ravel(x))))

    def solve_subproblem(self, spec, x_current):
        res = solve_separable(
            self.grad,
            self.hess,
            spec.alpha * spec.coupling.ravel(),
            spec.matrix(),
            spec.eq_rhs,
            x_current,
            mu0=self.mu0,
        )
        if res.relative_primal > self.kkt_tol or res.relative_stationarity > self.kkt_tol:
            raise SubproblemError(
                "barrier method did not converge "
                f"(stationarity {res.stationarity:.3g}, primal {res.primal:.3g})",
                best=res.x.reshape(spec.shape),
                residuals=res,
            )
        self.last_result = res
        return res.x.reshape(spec.shape)


class QuadraticOracle(SeparableOracle):
    """``f(X) = ||X - target||_F^2``."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)

    def value(self, x):
        return (x - self.target.ravel()) ** 2

    def grad(self, x):
        return 2.0 * (x - self.target.ravel())

    def hess(self, x):
        return np.full_like(x, 2.0)


@dataclass
class AlternateTrace:
    objective: list
    eigsum: list
    n_iter: int
    converged: bool
    x: np.ndarray
    basis: object = None


def _check_degrees(x, k):
    deg = np.concatenate([x.sum(axis=1), x.sum(axis=0)])
    n_pos = int(np.sum(deg > DEGREE_FLOOR))
    if n_pos < k:
        raise AlternateError(
            f"only {n_pos} rows/columns have positive degree, need at least k={k}"
        )
    if n_pos < deg.size:
        logger.debug("%d rows/columns fell below the degree floor", deg.size - n_pos)


def alternate(oracle, x0, k, w=None, alpha=1.0, tol=1e-8, max_iter=500, slack=1e-9):
    """Alternate eigenbasis updates and oracle X-updates.

    Parameters
    ----------
    oracle : ObjectiveOracle
    x0 : ndarray of shape (R, C)
        Nonnegative starting point with at least ``k`` nonzero rows plus
        columns.
    k : int
        Number of penalized eigenvalues.
    w : array-like of shape (k,), optional
        Nonincreasing positive weights, default all ones.
    alpha : float
        Penalty weight; ``alpha == 0`` performs a single unpenalized solve.
    tol : float
        Stop when the relative objective decrease falls below ``tol``.

    Returns
    -------
    AlternateTrace
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    x = np.asarray(x0, dtype=float)
    if np.any(x < 0):
        raise ValueError("x0 must be nonnegative")
    w = np.ones(k) if w is None else check_weights(w, k)

    def objective(x):
        return oracle.evaluate(x) + alpha * weighted_eigsum(x, w)

    _check_degrees(x, k)
    trace = AlternateTrace(
        objective=[objective(x)], eigsum=[weighted_eigsum(x, w)], n_iter=0,
        converged=False, x=x,
    )
    if alpha == 0:
        spec = unpenalized_subproblem(x.shape, oracle.simplex_rhs)
        trace.x = oracle.solve_subproblem(spec, x)
        trace.objective.append(objective(trace.x))
        trace.eigsum.append(weighted_eigsum(trace.x, w))
        trace.n_iter, trace.converged = 1, True
        return trace

    for it in range(max_iter):
        basis = smallest_generalized_eigenbasis(x, k, w)
        spec = build_subproblem(basis, alpha, w, oracle.simplex_rhs)
        try:
            x_new = oracle.solve_subproblem(spec, x)
        except SubproblemError as err:
            raise AlternateError(f"X-update failed at iteration {it}: {err}", trace) from err
        _check_degrees(x_new, k)
        obj = objective(x_new)
        prev = trace.objective[-1]
        if obj > prev + slack * max(1.0, abs(prev)):
            logger.warning("objective increased from %.12g to %.12g", prev, obj)
        trace.objective.append(obj)
        trace.eigsum.append(weighted_eigsum(x_new, w))
        trace.x, trace.basis, trace.n_iter = x_new, basis, it + 1
        x = x_new
        if abs(prev - obj) <= tol * max(1.0, abs(prev)):
            trace.converged = True
            break
    return trace
