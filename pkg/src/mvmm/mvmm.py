"""Multi-view mixture model: densities, E-step and the unpenalized EM.

Each of the V views is a mixture of diagonal Gaussians and the views are
conditionally independent given the tuple of view labels, whose joint
distribution is the probability table ``pi`` of shape (K_1, ..., K_V).
Data are passed as a sequence of per-view (n, d_v) arrays, or as one
(n, sum d_v) array together with ``view_dims``.
"""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils import check_array, check_random_state
from sklearn.utils.validation import check_is_fitted

from .mixtures import kmeans_pp_init, log_density_matrix, reg_floor, weighted_mle_update

logger = logging.getLogger(__name__)

PI_ATOL = 1e-10


def check_prob_table(pi, atol=PI_ATOL):
    """Validate a cluster membership probability table.

    Raises if entries are negative or do not sum to one; warns if a view
    marginal has a zero entry.
    """
    pi = np.asarray(pi, dtype=float)
    if np.any(pi < 0):
        raise ValueError("probability table has negative entries")
    if abs(pi.sum() - 1.0) > atol:
        raise ValueError(f"probability table sums to {pi.sum():.12g}, not 1")
    for v in range(pi.ndim):
        if np.any(view_marginal(pi, v) <= 0):
            warnings.warn(f"view {v} has a cluster with zero marginal probability")
    return pi


def view_marginal(pi, v):
    axes = tuple(a for a in range(pi.ndim) if a != v)
    return pi.sum(axis=axes) if axes else pi


def support_size(pi, tol=0.0):
    return int(np.sum(np.asarray(pi) > tol))


def check_views(X, view_dims=None):
    """Split or validate multi-view input into a list of (n, d_v) float arrays."""
    if isinstance(X, (list, tuple)):
        views = [check_array(x, dtype=float) for x in X]
    else:
        X = check_array(X, dtype=float)
        if view_dims is None:
            raise ValueError("view_dims is required when X is a single array")
        if sum(view_dims) != X.shape[1]:
            raise ValueError(f"view_dims {view_dims} do not add up to {X.shape[1]} columns")
        views = np.split(X, np.cumsum(view_dims)[:-1], axis=1)
    if len(views) < 1:
        raise ValueError("need at least one view")
    n = {x.shape[0] for x in views}
    if len(n) != 1:
        raise ValueError(f"views have different numbers of rows: {sorted(n)}")
    return views


@dataclass(frozen=True)
class MvmmModel:
    views: list
    pi: np.ndarray

    def __post_init__(self):
        shape = tuple(v.n_components for v in self.views)
        if self.pi.shape != shape:
            raise ValueError(f"pi has shape {self.pi.shape}, views imply {shape}")

    @property
    def n_view_components(self):
        return self.pi.shape

    @property
    def view_dims(self):
        return [v.dim for v in self.views]


def _log_view_terms(model, views):
    if len(views) != len(model.views):
        raise ValueError(f"expected {len(model.views)} views, got {len(views)}")
    V = len(views)
    out = []
    for v, (vm, x) in enumerate(zip(model.views, views)):
        shape = [x.shape[0]] + [1] * V
        shape[v + 1] = vm.n_components
        out.append(log_density_matrix(vm, x).reshape(shape))
    return out


def log_joint(model, views):
    """(n, K_1, ..., K_V) array of ``log pi + sum_v log phi_v``."""
    with np.errstate(divide="ignore"):
        total = np.log(model.pi)[None]
    for term in _log_view_terms(model, views):
        total = total + term
    return total


def observed_log_density(model, x):
    """Log density of one concatenated observation."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != sum(model.view_dims):
        raise ValueError(f"x has {x.size} entries, model expects {sum(model.view_dims)}")
    views = [p[None] for p in np.split(x, np.cumsum(model.view_dims)[:-1])]
    return float(logsumexp(log_joint(model, views)))


def log_likelihood(model, views):
    """Observed-data log-likelihood of the sample."""
    if np.shape(views[0])[0] == 0:
        return 0.0
    lj = log_joint(model, views)
    return float(logsumexp(lj.reshape(lj.shape[0], -1), axis=1).sum())


@dataclass
class Responsibilities:
    """Posterior label-tuple probabilities ``gamma`` and their mean ``a``."""

    gamma: np.ndarray
    a: np.ndarray
    log_lik: float

    def view_weights(self, v):
        axes = tuple(ax + 1 for ax in range(self.gamma.ndim - 1) if ax != v)
        return self.gamma.sum(axis=axes) if axes else self.gamma


def e_step(model, views):
    lj = log_joint(model, views)
    n = lj.shape[0]
    flat = lj.reshape(n, -1)
    norm = logsumexp(flat, axis=1)
    gamma = np.exp(flat - norm[:, None]).reshape(lj.shape)
    return Responsibilities(gamma=gamma, a=gamma.mean(axis=0), log_lik=float(norm.sum()))


def m_step_views(resp, views, floors, previous):
    return [
        weighted_mle_update(x, resp.view_weights(v), floors[v], previous=previous.views[v])[0]
        for v, x in enumerate(views)
    ]


def init_model(views, n_view_components, random_state):
    """Per-view k-means++ components and a uniform probability table."""
    rs = check_random_state(random_state)
    vms = [kmeans_pp_init(x, k, rs) for x, k in zip(views, n_view_components)]
    pi = np.full(tuple(n_view_components), 1.0 / np.prod(n_view_components))
    return MvmmModel(vms, pi)


@dataclass
class FitTrace:
    """Per-iteration monitored objective (log-likelihood unless penalized)."""

    log_lik: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def run_em(views, model, pi_update=None, objective=None, max_iter=300, tol=1e-8, floors=None):
    """Generic MVMM EM loop.

    ``pi_update(a)`` maps the mean responsibilities to the new table
    (default: ``a`` itself). ``objective(model, log_lik)`` is the monitored
    quantity to maximize (default: the log-likelihood). Stops when its
    relative change drops below ``tol``.
    """
    pi_update = pi_update or (lambda a: a / a.sum())
    objective = objective or (lambda m, ll: ll)
    floors = floors or [reg_floor(x) for x in views]
    trace = FitTrace()
    for it in range(max_iter + 1):
        resp = e_step(model, views)
        obj = objective(model, resp.log_lik)
        trace.log_lik.append(resp.log_lik)
        trace.objective.append(obj)
        if it and abs(obj - trace.objective[-2]) <= tol * (abs(obj) + 1):
            trace.converged = True
            break
        if it == max_iter:
            break
        model = MvmmModel(m_step_views(resp, views, floors, model), pi_update(resp.a))
        trace.n_iter = it + 1
    return model, trace


def _best_of_restarts(views, n_view_components, n_init, random_state, fit_one):
    rs = check_random_state(random_state)
    best = None
    for _ in range(n_init):
        start = init_model(views, n_view_components, rs)
        model, trace = fit_one(start)
        if best is None or trace.objective[-1] > best[1].objective[-1]:
            best = (model, trace)
    return best


def _check_sizes(views, n_view_components):
    if len(n_view_components) != len(views):
        raise ValueError(
            f"got {len(n_view_components)} component counts for {len(views)} views"
        )
    if any(k < 1 for k in n_view_components):
        raise ValueError("every view needs at least one component")
    if views[0].shape[0] < max(n_view_components):
        raise ValueError(
            f"{views[0].shape[0]} samples are fewer than max components {max(n_view_components)}"
        )


def fit_em(views, n_view_components, n_init=10, max_iter=300, tol=1e-8,
           random_state=None, init=None):
    """Fit the unpenalized MVMM by EM.

    Parameters
    ----------
    views : sequence of (n, d_v) arrays
    n_view_components : sequence of int
    n_init : int
        Restarts from per-view k-means++ seeds; the best final
        log-likelihood wins. Ignored if ``init`` is given.
    init : MvmmModel, optional
        Starting model.

    Returns
    -------
    model : MvmmModel
    trace : FitTrace
    """
    views = check_views(views)
    _check_sizes(views, n_view_components)
    floors = [reg_floor(x) for x in views]

    def fit_one(start):
        return run_em(views, start, max_iter=max_iter, tol=tol, floors=floors)

    if init is not None:
        return fit_one(init)
    return _best_of_restarts(views, n_view_components, n_init, random_state, fit_one)


def warm_start(views, n_view_components, n_steps=10, n_init=10, random_state=None):
    """A few unpenalized EM steps from the best of ``n_init`` seeds."""
    return fit_em(views, n_view_components, n_init=n_init, max_iter=n_steps, tol=0.0,
                  random_state=random_state)[0]


@dataclass
class Prediction:
    tuples: np.ndarray
    overall: np.ndarray
    view_labels: list


def predict(model, views):
    """Hard labels: argmax label tuple, its flat index, and per-view labels."""
    resp = e_step(model, views)
    n = resp.gamma.shape[0]
    flat = resp.gamma.reshape(n, -1)
    with np.errstate(divide="ignore"):
        scores = np.where(model.pi.ravel() > 0, flat, -np.inf)
    overall = np.argmax(scores, axis=1)
    tuples = np.column_stack(np.unravel_index(overall, model.pi.shape))
    view_labels = [np.argmax(resp.view_weights(v), axis=1) for v in range(model.pi.ndim)]
    return Prediction(tuples=tuples, overall=overall, view_labels=view_labels)


def dof_diag_gaussian(model):
    """Free cluster parameters: a mean and a variance per feature per component."""
    return int(sum(2 * vm.n_components * vm.dim for vm in model.views))


class _MvmmBase(ClusterMixin, BaseEstimator):
    """Shared prediction/scoring surface of the multi-view estimators."""

    def _views(self, X):
        return check_views(X, self.view_dims)

    @property
    def model_(self):
        check_is_fitted(self, "views_")
        return MvmmModel(self.views_, self.pi_)

    def _set_model(self, model, trace):
        self.views_ = model.views
        self.pi_ = model.pi
        self.trace_ = trace
        self.n_iter_ = trace.n_iter
        self.converged_ = trace.converged

    def predict(self, X):
        """Overall cluster label: flat index of the most probable label tuple."""
        return predict(self.model_, self._views(X)).overall

    def predict_tuples(self, X):
        return predict(self.model_, self._views(X)).tuples

    def predict_view_labels(self, X):
        return predict(self.model_, self._views(X)).view_labels

    def predict_proba(self, X):
        gamma = e_step(self.model_, self._views(X)).gamma
        return gamma.reshape(gamma.shape[0], -1)

    def log_likelihood(self, X):
        return log_likelihood(self.model_, self._views(X))

    def score(self, X, y=None):
        views = self._views(X)
        return log_likelihood(self.model_, views) / views[0].shape[0]

    def dof(self):
        return dof_diag_gaussian(self.model_)

    def support_size(self):
        return support_size(self.pi_)

    def bic(self, X):
        from .selection import bic

        views = self._views(X)
        return bic(log_likelihood(self.model_, views), self.dof(), self.support_size(),
                   views[0].shape[0])


class MVMM(_MvmmBase):
    """Multi-view mixture model with an unconstrained probability table.

    Parameters
    ----------
    n_view_components : tuple of int, default=(2, 2)
        Number of clusters in each view.
    n_init : int, default=10
    max_iter : int, default=300
    tol : float, default=1e-8
    random_state : int, RandomState instance or None, default=None
    view_dims : tuple of int, optional
        Column split used when ``X`` is passed as one concatenated array.

    Attributes
    ----------
    views_ : list of ViewModel
    pi_ : ndarray of shape n_view_components
    trace_ : FitTrace
    """

    def __init__(self, n_view_components=(2, 2), n_init=10, max_iter=300, tol=1e-8,
                 random_state=None, view_dims=None):
        self.n_view_components = n_view_components
        self.n_init = n_init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.view_dims = view_dims

    def fit(self, X, y=None):
        model, trace = fit_em(
            self._views(X), tuple(self.n_view_components), n_init=self.n_init,
            max_iter=self.max_iter, tol=self.tol, random_state=self.random_state,
        )
        self._set_model(model, trace)
        return self
