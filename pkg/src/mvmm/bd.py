"""Block diagonally constrained MVMM for two views.

The table is written ``pi = eps + D`` with a small dense floor ``eps`` and
a nonnegative ``D`` whose bipartite graph must have ``B`` connected
components. The block constraint is relaxed into the penalty
``alpha * (sum of the B smallest generalized Laplacian eigenvalues of D)``
and ``alpha`` is doubled until ``D`` has ``B`` blocks. For a fixed
``alpha`` the inner loop alternates an eigenbasis update, an E-step, the
cluster parameter update and a convex ``D`` update.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.utils import check_random_state

from .block_diag_opt import (
    DEGREE_FLOOR,
    SeparableOracle,
    SubproblemError,
    build_subproblem,
    coupling_matrix,
    unpenalized_subproblem,
)
from .geig import smallest_generalized_eigenbasis, weighted_eigsum
from .laplacian import count_blocks, default_support_tol
from .mixtures import reg_floor
from .mvmm import (
    MvmmModel,
    _MvmmBase,
    _check_sizes,
    check_views,
    e_step,
    m_step_views,
    warm_start,
)

logger = logging.getLogger(__name__)

ALPHA_MAX = 1e12
MONOTONE_RTOL = 1e-6
WARM_MU0 = 1e-6
PRIMAL_TOL = 1e-6
# couplings below this are eigensolver round-off (a constant embedding gives 0)
COUPLING_TOL = 1e-10


class BlockDiagError(RuntimeError):
    """``alpha`` grew past its cap without reaching the requested block count."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class BdConfig:
    """Settings for :func:`fit_bd`.

    ``epsilon`` defaults to ``0.01 / (K1 * K2)`` and ``alpha0`` to
    :func:`alpha_heuristic` with constant ``c_heuristic``.
    """

    n_blocks: int
    epsilon: float = None
    alpha0: float = None
    alpha_factor: float = 2.0
    c_heuristic: float = 0.01
    n_init: int = 10
    init_steps: int = 10
    n_starts: int = 1
    max_inner: int = 200
    inner_tol: float = 1e-7
    block_tol: float = 1e-6
    alpha_max: float = ALPHA_MAX
    stall_rounds: int = 8
    stall_rtol: float = 1e-2
    support_tol: float = None

    def resolve_epsilon(self, shape):
        n_cells = int(np.prod(shape))
        eps = 0.01 / n_cells if self.epsilon is None else float(self.epsilon)
        if not 0 < eps < 1.0 / n_cells:
            raise ValueError(f"epsilon must lie in (0, 1/{n_cells}), got {eps}")
        return eps

    def validate(self, shape):
        if len(shape) != 2:
            raise ValueError("block diagonal fitting needs exactly two views")
        if not 1 <= self.n_blocks <= min(shape):
            raise ValueError(
                f"n_blocks={self.n_blocks} must lie between 1 and min(K1, K2)={min(shape)}"
            )
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")
        if self.alpha_factor <= 1:
            raise ValueError("alpha_factor must exceed 1")
        if self.alpha0 is not None and self.alpha0 < 0:
            raise ValueError("alpha0 must be nonnegative")
        return self.resolve_epsilon(shape)


def positive_part_closed_form(a, b, epsilon):
    """Minimizer of ``-a log(x + eps) + b x`` over ``x >= 0``: ``(a/b - eps)_+``."""
    a, b, epsilon = (np.asarray(v, dtype=float) for v in (a, b, epsilon))
    if np.any(a <= 0) or np.any(b <= 0) or np.any(epsilon <= 0):
        raise ValueError("a, b and epsilon must be positive")
    out = np.maximum(a / b - epsilon, 0.0)
    return float(out) if out.ndim == 0 else out


def alpha_heuristic(a, basis, epsilon, c=0.01):
    """Starting penalty ``c * median(a / (eps * M))`` over cells with ``M > 0``.

    Returns
    -------
    alpha : float
    done : bool
        True if every coupling weight is zero (up to round-off), i.e. the basis already
        splits the table into the requested blocks; ``alpha`` is then 0.
    """
    M = coupling_matrix(basis)
    pos = M > COUPLING_TOL
    if not np.any(pos):
        return 0.0, True
    return float(c * np.median(np.asarray(a)[pos] / (epsilon * M[pos]))), False


class LogOracle(SeparableOracle):
    """``f(D) = -sum a * log(eps + D)`` on the slice ``sum D = 1 - K1 K2 eps``."""

    def __init__(self, a, epsilon):
        self.a = np.asarray(a, dtype=float)
        self.epsilon = float(epsilon)
        self.simplex_rhs = 1.0 - self.a.size * self.epsilon

    def value(self, x):
        return -self.a.ravel() * np.log(self.epsilon + x)

    def grad(self, x):
        return -self.a.ravel() / (self.epsilon + x)

    def hess(self, x):
        return self.a.ravel() / (self.epsilon + x) ** 2


def d_step(a, basis, alpha, epsilon, spec=None, x0=None):
    """Update of ``D`` for fixed responsibilities and eigenbasis.

    Minimizes ``-sum a log(eps + D) + alpha <D, M(U)>`` over ``D >= 0``
    with total mass ``1 - K1 K2 eps`` and ``U^T diag(deg(D)) U = I``.

    Parameters
    ----------
    a : ndarray of shape (K1, K2)
        Mean responsibilities.
    basis : EigenBasis or None
        Eigenbasis of the current ``D``; ignored when ``alpha == 0``.
    spec : SubproblemSpec, optional
        Prebuilt subproblem (``alpha`` and ``basis`` are then unused).
    x0 : ndarray, optional
        Starting point, default the uniform table.

    Returns
    -------
    D : ndarray of shape (K1, K2)
    result : BarrierResult
    """
    a = np.asarray(a, dtype=float)
    oracle = LogOracle(a, epsilon)
    if spec is None:
        if alpha > 0:
            spec = build_subproblem(basis, alpha, simplex_rhs=oracle.simplex_rhs)
        else:
            spec = unpenalized_subproblem(a.shape, oracle.simplex_rhs)
    if x0 is None:
        x0 = np.full(a.shape, oracle.simplex_rhs / a.size)
    else:
        # a warm start is close to the new solution; skip the early barrier rounds
        oracle.mu0 = WARM_MU0
    d = oracle.solve_subproblem(spec, x0)
    return d, oracle.last_result


def initial_d(pi, epsilon):
    """``(pi - eps)_+`` rescaled to the mass ``1 - K1 K2 eps``."""
    d = np.maximum(np.asarray(pi, dtype=float) - epsilon, 0.0)
    return d * (1.0 - d.size * epsilon) / d.sum()


@dataclass
class BdTrace:
    """Per-E-step record of the inner loops.

    ``objective[i]`` is ``-loglik / n + alpha[i] * eigsum[i]``, comparable
    across iterations that share the same ``alpha``. ``d_fallbacks`` counts
    inexact D-updates and ``d_rejections`` the D-updates discarded because
    they would have raised the objective.
    """

    objective: list = field(default_factory=list)
    log_lik: list = field(default_factory=list)
    eigsum: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    alpha_history: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    d_fallbacks: int = 0
    d_rejections: int = 0

    def segments(self):
        """Objective values split into runs of constant ``alpha``."""
        out, start = [], 0
        for i in range(1, len(self.alpha) + 1):
            if i == len(self.alpha) or self.alpha[i] != self.alpha[start]:
                out.append(np.array(self.objective[start:i]))
                start = i
        return out


def _inner_loop(views, model, d, alpha, eps, n_blocks, floors, config, trace):
    n = views[0].shape[0]
    w = np.ones(n_blocks)
    prev = None
    for _ in range(config.max_inner):
        model = MvmmModel(model.views, eps + d)
        resp = e_step(model, views)
        eigsum = weighted_eigsum(d, w)
        obj = -resp.log_lik / n + alpha * eigsum
        trace.objective.append(obj)
        trace.log_lik.append(resp.log_lik)
        trace.eigsum.append(eigsum)
        trace.alpha.append(alpha)
        if prev is not None:
            if obj > prev + MONOTONE_RTOL * abs(prev):
                logger.warning("inner objective increased from %.12g to %.12g", prev, obj)
            if prev - obj <= config.inner_tol * max(abs(prev), 1.0):
                break
        prev = obj

        basis = smallest_generalized_eigenbasis(d, n_blocks) if alpha > 0 else None
        views_new = m_step_views(resp, views, floors, model)
        try:
            d_new, _ = d_step(resp.a, basis, alpha, eps, x0=d)
        except SubproblemError as err:
            d_new = _fallback_d(err, resp.a, d, basis, alpha, eps)
            trace.d_fallbacks += 1
        d_new = np.maximum(d_new, 0.0)
        # the surrogate majorizes the objective only when the linearized
        # constraints hold exactly; keep D when rounding makes it worse
        w_one = np.ones(n_blocks)
        if _d_objective(resp.a, d_new, alpha, eps, w_one) > _d_objective(resp.a, d, alpha, eps, w_one):
            trace.d_rejections += 1
        else:
            d = d_new
        model = MvmmModel(views_new, eps + d)
        trace.n_iter += 1
    return model, d


def _d_objective(a, d, alpha, eps, w):
    """D-part of the inner objective for fixed responsibilities."""
    value = -np.sum(a * np.log(eps + d))
    return value + alpha * weighted_eigsum(d, w) if alpha > 0 else value


def _fallback_d(err, a, d, basis, alpha, eps):
    """Best safe D after an inexact solve.

    The previous ``D`` is feasible, so either the solver's iterate improves
    on it while staying feasible, or ``D`` is kept.
    """
    best, res = err.best, err.residuals
    if best is not None and res is not None and res.relative_primal <= PRIMAL_TOL:
        M = coupling_matrix(basis) if alpha > 0 else 0.0

        def value(x):
            return -np.sum(a * np.log(eps + x)) + alpha * np.sum(M * x)

        if value(np.maximum(best, 0.0)) <= value(d):
            logger.debug("using inexact D-update: %s", err)
            return best
    logger.warning("D-update failed, keeping previous D: %s", err)
    return d


def fit_bd(views, n_view_components, config, random_state=None, init=None):
    """Fit the block diagonally constrained two-view MVMM.

    Parameters
    ----------
    views : sequence of two (n, d_v) arrays
    n_view_components : tuple (K1, K2)
    config : BdConfig
    init : MvmmModel, optional
        Starting model; default ``config.init_steps`` plain EM steps from
        the best of ``config.n_init`` seeds. Without ``init``, the fit is
        repeated from ``config.n_starts`` such warm starts and the run
        with the largest final log-likelihood is kept; failed starts are
        skipped unless all fail.

    Returns
    -------
    model : MvmmModel
        Fitted model with ``pi = eps + D``.
    d : ndarray of shape (K1, K2)
    blocks : BlockStructure
        Block structure of the support of ``D``.
    trace : BdTrace

    Raises
    ------
    BlockDiagError
        If ``alpha`` exceeds ``config.alpha_max``, or the sum of the
        ``n_blocks`` smallest eigenvalues falls by less than
        ``config.stall_rtol`` (relative) over ``config.stall_rounds``
        consecutive increases of ``alpha``, before ``D`` has
        ``config.n_blocks`` blocks.
    """
    views = check_views(views)
    shape = tuple(n_view_components)
    _check_sizes(views, shape)
    eps = config.validate(shape)
    if init is not None:
        return _fit_bd_from(views, init, eps, config)

    rs = check_random_state(random_state) if config.n_starts > 1 else random_state
    best, error = None, None
    for start in range(config.n_starts):
        init = warm_start(views, shape, config.init_steps, config.n_init, rs)
        try:
            out = _fit_bd_from(views, init, eps, config)
        except BlockDiagError as err:
            if config.n_starts == 1:
                raise
            logger.info("start %d failed: %s", start, err)
            error = err
            continue
        if best is None or out[3].log_lik[-1] > best[3].log_lik[-1]:
            best = out
    if best is None:
        raise error
    return best


def _fit_bd_from(views, init, eps, config):
    floors = [reg_floor(x) for x in views]
    B = config.n_blocks
    d = initial_d(init.pi, eps)
    model = MvmmModel(init.views, eps + d)

    if config.alpha0 is not None:
        alpha = float(config.alpha0)
    else:
        basis = smallest_generalized_eigenbasis(d, B)
        alpha, _ = alpha_heuristic(e_step(model, views).a, basis, eps, config.c_heuristic)
    trace = BdTrace()
    round_eigsums = []

    while True:
        trace.alpha_history.append(alpha)
        model, d = _inner_loop(views, model, d, alpha, eps, B, floors, config, trace)
        eigsum = weighted_eigsum(d, np.ones(B))
        if _n_positive_degrees(d) >= B and eigsum <= config.block_tol:
            trace.converged = True
            break
        round_eigsums.append(eigsum)
        k = config.stall_rounds
        if k and len(round_eigsums) > k and eigsum > (1 - config.stall_rtol) * round_eigsums[-1 - k]:
            raise BlockDiagError(
                f"eigenvalue sum stalled at {eigsum:.3g} over {k} alpha increases without "
                f"reaching {B} blocks; the requested block count may be unattainable",
                trace,
            )
        # alpha == 0 only when the start was already split into B blocks
        alpha = alpha * config.alpha_factor if alpha > 0 else config.c_heuristic / eps
        if alpha > config.alpha_max:
            raise BlockDiagError(
                f"alpha exceeded {config.alpha_max:g} without reaching {B} blocks; "
                "the requested block count may be unattainable",
                trace,
            )
        logger.debug("raising alpha to %g", alpha)

    tol = default_support_tol(d) if config.support_tol is None else config.support_tol
    blocks = count_blocks(d, support_tol=tol)
    return model, d, blocks, trace


def _n_positive_degrees(d):
    deg = np.concatenate([d.sum(axis=1), d.sum(axis=0)])
    return int(np.sum(deg > DEGREE_FLOOR))


def cell_block_labels(model, cells, views):
    """Block label per observation from a table of cell block indices.

    Responsibilities are summed over the cells of each block and the
    largest block wins; cells labeled -1 are ignored. With no blocks every
    observation gets label 0.
    """
    gamma = e_step(model, views).gamma
    n = gamma.shape[0]
    cells = np.asarray(cells).ravel()
    n_blocks = int(cells.max()) + 1 if cells.size else 0
    if n_blocks <= 0:
        return np.zeros(n, dtype=int)
    flat = gamma.reshape(n, -1)
    scores = np.column_stack([flat[:, cells == b].sum(axis=1) for b in range(n_blocks)])
    return np.argmax(scores, axis=1)


def predict_block_labels(model, blocks, views):
    """Block label per observation for a :class:`BlockStructure` of the table."""
    return cell_block_labels(model, blocks.cell_blocks(), views)


class BlockDiagMVMM(_MvmmBase):
    """Two-view mixture model whose table has a prescribed number of blocks.

    Parameters
    ----------
    n_view_components : tuple of int, default=(2, 2)
    n_blocks : int, default=1
    epsilon : float, optional
        Dense floor of the table, default ``0.01 / (K1 * K2)``.
    alpha0 : float, optional
        Initial penalty weight, default from the data.
    alpha_factor : float, default=2.0
    c_heuristic : float, default=0.01
    n_init : int, default=10
    init_steps : int, default=10
    n_starts : int, default=1
        Independent warm starts; the fit with the largest log-likelihood is kept.
    max_inner : int, default=200
    inner_tol : float, default=1e-7
    block_tol : float, default=1e-6
    alpha_max : float, default=1e12
        Give up (raise :class:`BlockDiagError`) once ``alpha`` exceeds this.
    stall_rounds : int, default=8
        Give up when the eigenvalue sum falls by less than ``stall_rtol``
        (relative) over this many increases of ``alpha``; 0 disables.
    stall_rtol : float, default=1e-2
    random_state : int, RandomState instance or None, default=None
    view_dims : tuple of int, optional

    Attributes
    ----------
    d_ : ndarray of shape (K1, K2)
    epsilon_ : float
    blocks_ : BlockStructure
    alpha_history_ : list of float
    """

    def __init__(self, n_view_components=(2, 2), n_blocks=1, epsilon=None, alpha0=None,
                 alpha_factor=2.0, c_heuristic=0.01, n_init=10, init_steps=10, n_starts=1,
                 max_inner=200, inner_tol=1e-7, block_tol=1e-6, alpha_max=ALPHA_MAX,
                 stall_rounds=8, stall_rtol=1e-2, random_state=None, view_dims=None):
        self.n_view_components = n_view_components
        self.n_blocks = n_blocks
        self.epsilon = epsilon
        self.alpha0 = alpha0
        self.alpha_factor = alpha_factor
        self.c_heuristic = c_heuristic
        self.n_init = n_init
        self.init_steps = init_steps
        self.n_starts = n_starts
        self.max_inner = max_inner
        self.inner_tol = inner_tol
        self.block_tol = block_tol
        self.alpha_max = alpha_max
        self.stall_rounds = stall_rounds
        self.stall_rtol = stall_rtol
        self.random_state = random_state
        self.view_dims = view_dims

    def _config(self):
        return BdConfig(
            n_blocks=self.n_blocks, epsilon=self.epsilon, alpha0=self.alpha0,
            alpha_factor=self.alpha_factor, c_heuristic=self.c_heuristic, n_init=self.n_init,
            init_steps=self.init_steps, n_starts=self.n_starts, max_inner=self.max_inner, inner_tol=self.inner_tol,
            block_tol=self.block_tol, alpha_max=self.alpha_max,
            stall_rounds=self.stall_rounds, stall_rtol=self.stall_rtol,
        )

    def fit(self, X, y=None, init=None):
        config = self._config()
        model, d, blocks, trace = fit_bd(self._views(X), self.n_view_components, config,
                                         random_state=self.random_state, init=init)
        self._set_model(model, trace)
        self.d_ = d
        self.epsilon_ = config.resolve_epsilon(d.shape)
        self.blocks_ = blocks
        self.alpha_history_ = trace.alpha_history
        return self

    def support_size(self):
        """Support of ``D`` (the dense floor is not counted)."""
        return int(np.sum(self.d_ > default_support_tol(self.d_)))

    def block_structure(self):
        return self.blocks_

    def predict_blocks(self, X):
        return predict_block_labels(self.model_, self.blocks_, self._views(X))
