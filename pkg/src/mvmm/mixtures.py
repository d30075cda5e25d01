"""Diagonal-covariance Gaussian mixtures.

Per-view component densities and weighted M-steps shared by the multi-view
models, plus a plain single-view EM (:class:`DiagGaussianMixture`) used as
the concatenated-data baseline.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.cluster import kmeans_plusplus
from sklearn.utils import check_array, check_random_state
from sklearn.utils.validation import check_is_fitted

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)
REG_FACTOR = 1e-6


@dataclass(frozen=True)
class GaussianDiagComponent:
    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class ViewModel:
    """K diagonal Gaussians in dimension d, stored as (K, d) arrays."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        if self.means.shape != self.variances.shape or self.means.ndim != 2:
            raise ValueError("means and variances must both have shape (K, d)")

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def components(self):
        return [
            GaussianDiagComponent(m, v) for m, v in zip(self.means, self.variances)
        ]

    @classmethod
    def from_components(cls, components):
        return cls(
            np.array([c.mean for c in components], dtype=float),
            np.array([c.variance for c in components], dtype=float),
        )


def log_density(component, x):
    """Log density of a diagonal Gaussian at a single point."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(component.mean, dtype=float)
    var = np.asarray(component.variance, dtype=float)
    if x.shape != mean.shape:
        raise ValueError(f"dimension mismatch: x has shape {x.shape}, mean {mean.shape}")
    return float(np.sum(-0.5 * (LOG_2PI + np.log(var)) - (x - mean) ** 2 / (2 * var)))


def log_density_matrix(view, data):
    """(n, K) matrix of component log densities."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != view.dim:
        raise ValueError(f"data must have shape (n, {view.dim}), got {data.shape}")
    prec = 1.0 / view.variances
    quad = (
        (data**2) @ prec.T
        - 2.0 * data @ (view.means * prec).T
        + np.sum(view.means**2 * prec, axis=1)
    )
    const = -0.5 * (view.dim * LOG_2PI + np.sum(np.log(view.variances), axis=1))
    return const - 0.5 * quad


def reg_floor(data):
    """Variance floor: a small fraction of each feature's variance."""
    var = np.var(np.asarray(data, dtype=float), axis=0)
    return np.maximum(REG_FACTOR * var, 1e-12)


def weighted_mle_update(data, weights, floor, previous=None):
    """Weighted maximum likelihood means and variances.

    Variances are floored at ``floor`` (the constrained maximizer, so EM
    stays monotone). Components whose total weight is zero keep their
    ``previous`` parameters.

    Returns
    -------
    view : ViewModel
    frozen : ndarray of bool, shape (K,)
    """
    data = np.asarray(data, dtype=float)
    weights = np.asarray(weights, dtype=float)
    nk = weights.sum(axis=0)
    frozen = nk <= 10 * np.finfo(float).tiny
    safe = np.where(frozen, 1.0, nk)
    means = (weights.T @ data) / safe[:, None]
    second = (weights.T @ data**2) / safe[:, None]
    variances = np.maximum(second - means**2, floor)
    if np.any(frozen):
        if previous is None:
            raise ValueError("a component has zero total weight and no previous value")
        means[frozen] = previous.means[frozen]
        variances[frozen] = previous.variances[frozen]
        logger.debug("froze %d empty components", int(frozen.sum()))
    return ViewModel(means, variances), frozen


def kmeans_pp_init(data, n_components, random_state, floor=None):
    """k-means++ seeds, one hard assignment to the nearest seed, then an M-step."""
    data = np.asarray(data, dtype=float)
    rs = check_random_state(random_state)
    centers, _ = kmeans_plusplus(data, n_components, random_state=rs)
    d2 = ((data[:, None, :] - centers[None]) ** 2).sum(axis=2)
    resp = np.zeros((data.shape[0], n_components))
    resp[np.arange(data.shape[0]), np.argmin(d2, axis=1)] = 1.0
    floor = reg_floor(data) if floor is None else floor
    fallback = ViewModel(centers, np.tile(np.var(data, axis=0) + floor, (n_components, 1)))
    view, _ = weighted_mle_update(data, resp, floor, previous=fallback)
    return view


@dataclass
class GmmTrace:
    log_lik: list
    n_iter: int
    converged: bool


def _em_gmm(data, view, weights, floor, max_iter, tol):
    n = data.shape[0]
    trace = GmmTrace(log_lik=[], n_iter=0, converged=False)
    for it in range(max_iter):
        log_joint = log_density_matrix(view, data) + np.log(weights)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(log_norm.sum())
        if trace.log_lik and abs(ll - trace.log_lik[-1]) <= tol * (abs(ll) + 1):
            trace.log_lik.append(ll)
            trace.converged = True
            break
        trace.log_lik.append(ll)
        resp = np.exp(log_joint - log_norm[:, None])
        view, _ = weighted_mle_update(data, resp, floor, previous=view)
        weights = resp.sum(axis=0) / n
        trace.n_iter = it + 1
    return view, weights, trace


def fit_gmm(data, n_components, n_init=10, max_iter=300, tol=1e-8, random_state=None):
    """EM for a diagonal Gaussian mixture with k-means++ restarts.

    Returns
    -------
    view : ViewModel
    weights : ndarray of shape (K,)
    trace : GmmTrace
        Observed-data log-likelihood per iteration of the best restart.
    """
    data = check_array(data, dtype=float)
    if n_components < 1:
        raise ValueError("n_components must be at least 1")
    if n_components > data.shape[0]:
        raise ValueError(
            f"n_components={n_components} exceeds the number of samples {data.shape[0]}"
        )
    rs = check_random_state(random_state)
    floor = reg_floor(data)
    best = None
    for _ in range(n_init):
        view = kmeans_pp_init(data, n_components, rs, floor)
        weights = np.full(n_components, 1.0 / n_components)
        result = _em_gmm(data, view, weights, floor, max_iter, tol)
        if best is None or result[2].log_lik[-1] > best[2].log_lik[-1]:
            best = result
    return best


class DiagGaussianMixture(ClusterMixin, BaseEstimator):
    """Single-view Gaussian mixture with diagonal covariances.

    Parameters
    ----------
    n_components : int, default=1
    n_init : int, default=10
        Number of k-means++ restarts; the best final log-likelihood is kept.
    max_iter : int, default=300
    tol : float, default=1e-8
        Relative log-likelihood change used to stop EM.
    random_state : int, RandomState instance or None, default=None

    Attributes
    ----------
    view_ : ViewModel
    weights_ : ndarray of shape (n_components,)
    log_lik_history_ : list of float
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, n_components=1, n_init=10, max_iter=300, tol=1e-8,
                 random_state=None):
        self.n_components = n_components
        self.n_init = n_init
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.view_, self.weights_, trace = fit_gmm(
            X, self.n_components, self.n_init, self.max_iter, self.tol, self.random_state
        )
        self.log_lik_history_ = trace.log_lik
        self.n_iter_ = trace.n_iter
        self.converged_ = trace.converged
        self.n_features_in_ = X.shape[1]
        return self

    def _log_joint(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        return log_density_matrix(self.view_, X) + np.log(self.weights_)

    def predict_proba(self, X):
        lj = self._log_joint(X)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def predict(self, X):
        return np.argmax(self._log_joint(X), axis=1)

    def score_samples(self, X):
        return logsumexp(self._log_joint(X), axis=1)

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def log_likelihood(self, X):
        return float(np.sum(self.score_samples(X)))

    def dof(self):
        return 2 * self.view_.means.size

    def support_size(self):
        return int(np.sum(self.weights_ > 0))
