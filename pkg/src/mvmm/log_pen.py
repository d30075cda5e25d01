"""Log-penalized MVMM: sparse probability tables via soft-thresholding EM."""
import logging
from dataclasses import dataclass

import numpy as np

from .mvmm import (
    FitTrace,
    _MvmmBase,
    _check_sizes,
    check_views,
    log_likelihood,
    run_em,
    warm_start,
)
from .mixtures import reg_floor

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 1e-6
MONOTONE_RTOL = 1e-6


@dataclass(frozen=True)
class LogPenConfig:
    pen: float
    delta: float = DEFAULT_DELTA
    n_init: int = 10
    init_steps: int = 10
    max_iter: int = 300
    tol: float = 1e-8

    def validate(self, n_cells):
        if not 0 < self.pen < 1.0 / n_cells:
            raise ValueError(
                f"pen must lie in (0, 1/{n_cells}) for a table with {n_cells} cells, "
                f"got {self.pen}"
            )
        if self.delta <= 0:
            raise ValueError("delta must be positive")


def soft_threshold_simplex(a, pen):
    """``(a - pen)_+`` renormalized to sum to one.

    ``pen`` must be below ``1 / a.size`` so that some entry survives.
    """
    a = np.asarray(a, dtype=float)
    if not 0 <= pen < 1.0 / a.size:
        raise ValueError(f"pen must lie in [0, 1/{a.size}), got {pen}")
    z = np.maximum(a - pen, 0.0)
    total = z.sum()
    if total <= 0:
        raise AssertionError("soft-thresholding removed every entry")
    return z / total


def penalized_objective(model, views, pen, delta=DEFAULT_DELTA):
    """``loglik / n - pen * sum log(delta + pi)`` (to be maximized).

    The log-likelihood is averaged over observations, matching the scale on
    which the soft-thresholding update applies ``pen``.
    """
    n = views[0].shape[0]
    return log_likelihood(model, views) / n - pen * float(np.sum(np.log(delta + model.pi)))


def lambda_grid(n_cells, n_points=20, low=1e-4):
    """Geometric grid of penalty values up to ``0.99 / n_cells``."""
    return np.geomspace(low, 0.99 / n_cells, n_points)


@dataclass
class LogPenTrace(FitTrace):
    violations: int = 0


def fit_log_pen(views, n_view_components, config, random_state=None, init=None):
    """EM for the log-penalized MVMM with soft-thresholded table updates.

    Starts from ``config.init_steps`` unpenalized EM steps (or from
    ``init``). The penalized objective is monitored with ``config.delta``,
    which does not enter the updates.

    Returns
    -------
    model : MvmmModel
    trace : LogPenTrace
        ``objective`` holds the penalized objective; ``violations`` counts
        iterations where it decreased by more than 1e-6 relative.
    """
    views = check_views(views)
    n_view_components = tuple(n_view_components)
    _check_sizes(views, n_view_components)
    config.validate(int(np.prod(n_view_components)))
    if init is None:
        init = warm_start(views, n_view_components, config.init_steps, config.n_init,
                          random_state)

    n = views[0].shape[0]

    def objective(model, ll):
        return ll / n - config.pen * float(np.sum(np.log(config.delta + model.pi)))

    model, trace = run_em(
        views,
        init,
        pi_update=lambda a: soft_threshold_simplex(a / a.sum(), config.pen),
        objective=objective,
        max_iter=config.max_iter,
        tol=config.tol,
        floors=[reg_floor(x) for x in views],
    )
    out = LogPenTrace(**vars(trace))
    obj = np.array(trace.objective)
    drops = obj[:-1] - obj[1:]
    bad = drops > MONOTONE_RTOL * np.abs(obj[:-1])
    out.violations = int(np.sum(bad))
    if out.violations:
        logger.info("penalized objective decreased in %d EM steps", out.violations)
    return model, out


class LogPenMVMM(_MvmmBase):
    """Multi-view mixture model with a sparsity-inducing log penalty on ``pi``.

    Parameters
    ----------
    n_view_components : tuple of int, default=(2, 2)
    pen : float, default=1e-3
        Penalty weight; must be below one over the number of table cells.
    delta : float, default=1e-6
        Offset inside the log penalty, only used to monitor the objective.
    n_init : int, default=10
        Restarts for the unpenalized warm start.
    init_steps : int, default=10
        Unpenalized EM steps before the penalized fit.
    max_iter : int, default=300
    tol : float, default=1e-8
    random_state : int, RandomState instance or None, default=None
    view_dims : tuple of int, optional
    """

    def __init__(self, n_view_components=(2, 2), pen=1e-3, delta=DEFAULT_DELTA, n_init=10,
                 init_steps=10, max_iter=300, tol=1e-8, random_state=None, view_dims=None):
        self.n_view_components = n_view_components
        self.pen = pen
        self.delta = delta
        self.n_init = n_init
        self.init_steps = init_steps
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.view_dims = view_dims

    def _config(self):
        return LogPenConfig(pen=self.pen, delta=self.delta, n_init=self.n_init,
                            init_steps=self.init_steps, max_iter=self.max_iter, tol=self.tol)

    def fit(self, X, y=None, init=None):
        model, trace = fit_log_pen(self._views(X), self.n_view_components, self._config(),
                                   random_state=self.random_state, init=init)
        self._set_model(model, trace)
        return self

    def block_structure(self):
        from .laplacian import count_blocks

        return count_blocks(self.pi_, support_tol=0.0)

    def predict_blocks(self, X):
        from .bd import predict_block_labels

        return predict_block_labels(self.model_, self.block_structure(), self._views(X))
