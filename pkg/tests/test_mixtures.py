import numpy as np
import pytest

from mvmm.mixtures import (
    DiagGaussianMixture,
    GaussianDiagComponent,
    ViewModel,
    fit_gmm,
    log_density,
    log_density_matrix,
    reg_floor,
    weighted_mle_update,
)
from mvmm.selection import ari


def test_log_density_examples():
    c = GaussianDiagComponent(np.zeros(1), np.ones(1))
    assert log_density(c, np.zeros(1)) == pytest.approx(-0.5 * np.log(2 * np.pi))
    c2 = GaussianDiagComponent(np.zeros(2), np.array([1.0, 4.0]))
    expected = -0.5 * np.log(2 * np.pi) - 0.5 - 0.5 * np.log(8 * np.pi) - 0.5
    assert log_density(c2, np.array([1.0, 2.0])) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-3.5310242, abs=1e-7)


def test_log_density_is_maximal_at_mean(rng):
    c = GaussianDiagComponent(rng.standard_normal(3), rng.random(3) + 0.1)
    peak = log_density(c, c.mean)
    for _ in range(20):
        assert log_density(c, c.mean + rng.standard_normal(3)) < peak


def test_log_density_dim_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        log_density(GaussianDiagComponent(np.zeros(2), np.ones(2)), np.zeros(3))


def test_log_density_integrates_to_one(rng):
    c = GaussianDiagComponent(np.array([0.3]), np.array([2.0]))
    # importance sampling from a wider normal
    z = rng.normal(0.0, 3.0, size=200_000)
    q = -0.5 * np.log(2 * np.pi * 9.0) - z**2 / 18.0
    p = np.array([log_density(c, np.array([zi])) for zi in z[:2000]])
    p = np.concatenate([p, log_density_matrix(ViewModel(c.mean[None], c.variance[None]),
                                              z[2000:, None])[:, 0]])
    assert np.mean(np.exp(p - q)) == pytest.approx(1.0, rel=0.01)


def test_log_density_matrix_matches_scalar_loop(rng):
    view = ViewModel(rng.standard_normal((2, 2)), rng.random((2, 2)) + 0.2)
    data = rng.standard_normal((3, 2))
    M = log_density_matrix(view, data)
    for i in range(3):
        for k, comp in enumerate(view.components):
            assert M[i, k] == pytest.approx(log_density(comp, data[i]), abs=1e-12)
    one = log_density_matrix(ViewModel(view.means[:1], view.variances[:1]), data[:1])
    assert one.shape == (1, 1)
    dup = log_density_matrix(view, np.vstack([data[:1], data[:1]]))
    np.testing.assert_array_equal(dup[0], dup[1])


def test_log_density_matrix_dim_mismatch():
    with pytest.raises(ValueError, match="shape"):
        log_density_matrix(ViewModel(np.zeros((1, 2)), np.ones((1, 2))), np.zeros((3, 3)))


def test_weighted_mle_one_hot(rng):
    data = rng.standard_normal((40, 3))
    labels = np.repeat([0, 1], 20)
    w = np.eye(2)[labels]
    floor = reg_floor(data)
    view, frozen = weighted_mle_update(data, w, floor)
    assert not frozen.any()
    for k in range(2):
        np.testing.assert_allclose(view.means[k], data[labels == k].mean(axis=0))
        np.testing.assert_allclose(view.variances[k],
                                   np.maximum(data[labels == k].var(axis=0), floor))


def test_weighted_mle_single_component(rng):
    data = rng.standard_normal((30, 2))
    view, _ = weighted_mle_update(data, np.ones((30, 1)), reg_floor(data))
    np.testing.assert_allclose(view.means[0], data.mean(axis=0))
    np.testing.assert_allclose(view.variances[0], data.var(axis=0))


def test_weighted_mle_random_weights(rng):
    data = rng.standard_normal((25, 2))
    w = rng.random((25, 3))
    view, _ = weighted_mle_update(data, w, np.zeros(2))
    for k in range(3):
        mu = np.sum(w[:, k, None] * data, axis=0) / w[:, k].sum()
        var = np.sum(w[:, k, None] * (data - mu) ** 2, axis=0) / w[:, k].sum()
        np.testing.assert_allclose(view.means[k], mu, atol=1e-10)
        np.testing.assert_allclose(view.variances[k], var, atol=1e-10)


def test_weighted_mle_floor_and_frozen(rng):
    data = np.ones((5, 2))
    prev = ViewModel(np.full((2, 2), 7.0), np.full((2, 2), 3.0))
    w = np.column_stack([np.ones(5), np.zeros(5)])
    view, frozen = weighted_mle_update(data, w, np.array([1e-3, 1e-3]), previous=prev)
    np.testing.assert_array_equal(frozen, [False, True])
    np.testing.assert_allclose(view.variances[0], 1e-3)
    np.testing.assert_array_equal(view.means[1], prev.means[1])
    with pytest.raises(ValueError, match="zero total weight"):
        weighted_mle_update(data, w, np.array([1e-3, 1e-3]))


def test_fit_gmm_single_component(rng):
    data = rng.standard_normal((50, 2))
    view, weights, trace = fit_gmm(data, 1, n_init=1, random_state=0)
    np.testing.assert_allclose(view.means[0], data.mean(axis=0))
    np.testing.assert_allclose(view.variances[0], data.var(axis=0))
    assert trace.n_iter <= 2


def test_fit_gmm_separated_clusters(rng):
    truth = np.repeat([0, 1], 100)
    data = rng.standard_normal((200, 2)) + np.where(truth[:, None] == 0, -10.0, 10.0)
    est = DiagGaussianMixture(2, n_init=3, random_state=1).fit(data)
    assert ari(est.predict(data), truth) == 1.0


def test_fit_gmm_monotone(rng):
    data = rng.standard_normal((150, 3))
    for seed in range(5):
        _, _, trace = fit_gmm(data, 4, n_init=1, random_state=seed, max_iter=100)
        ll = np.array(trace.log_lik)
        assert np.all(np.diff(ll) >= -1e-9 * np.abs(ll[:-1]))


def test_fit_gmm_too_many_components():
    with pytest.raises(ValueError, match="exceeds"):
        fit_gmm(np.zeros((3, 1)), 4)


def test_variances_respect_floor(rng):
    data = np.vstack([np.zeros((10, 2)), rng.standard_normal((10, 2))])
    view, _, _ = fit_gmm(data, 3, n_init=2, random_state=0)
    assert np.all(view.variances >= reg_floor(data) * (1 - 1e-12))
