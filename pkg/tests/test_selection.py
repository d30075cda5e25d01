import json

import numpy as np
import pytest
from scipy import linalg
from scipy.special import comb

from mvmm.mvmm import MVMM
from mvmm.selection import (
    Candidate,
    SelectionReport,
    ari,
    bic,
    bipartite_spectral_coclustering,
    coclustering_cells,
    sweep_and_select,
)


def pair_counting_ari(a, b):
    """ARI from the contingency table, written out from pair counts."""
    a, b = np.asarray(a), np.asarray(b)
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    ct = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(ct, (ia, ib), 1)
    index = comb(ct, 2).sum()
    sa, sb = comb(ct.sum(1), 2).sum(), comb(ct.sum(0), 2).sum()
    expected = sa * sb / comb(len(a), 2)
    top = 0.5 * (sa + sb)
    return 1.0 if top == expected else (index - expected) / (top - expected)


def test_bic_examples():
    assert bic(-100, 10, 4, 100) == pytest.approx(-200 - 13 * np.log(100))
    assert bic(-100, 10, 4, 100) == pytest.approx(-259.86721, abs=1e-5)
    assert bic(-7.5, 0, 1, 50) == -15.0
    assert bic(-10, 3, 2, 20) > bic(-10, 3, 5, 20)
    with pytest.raises(ValueError):
        bic(-1, 1, 1, 0)


def test_ari_examples(rng):
    assert ari([0, 1, 1, 2], [5, 3, 3, 9]) == 1.0
    assert ari(np.zeros(10), rng.integers(0, 3, 10)) == pytest.approx(0.0)
    assert ari([0, 0, 1, 1], [0, 1, 1, 1]) == pytest.approx(pair_counting_ari([0, 0, 1, 1], [0, 1, 1, 1]))
    assert ari([0, 0, 1, 1], [0, 1, 1, 1]) == pytest.approx(0.0)
    with pytest.raises(ValueError, match="length"):
        ari([0, 1], [0, 1, 1])


def test_ari_matches_pair_counting_and_symmetries(rng):
    for _ in range(50):
        n = int(rng.integers(5, 60))
        a, b = rng.integers(0, 4, n), rng.integers(0, 5, n)
        value = ari(a, b)
        assert value == pytest.approx(pair_counting_ari(a, b), abs=1e-12)
        assert value == pytest.approx(ari(b, a), abs=1e-12)
        perm = rng.permutation(4)
        assert value == pytest.approx(ari(perm[a], b), abs=1e-12)


def test_coclustering_exact_blocks(rng):
    x = linalg.block_diag(rng.random((2, 3)) + 0.1, rng.random((3, 2)) + 0.1, rng.random((1, 2)) + 0.1)
    rp, cp = rng.permutation(6), rng.permutation(7)
    truth_r, truth_c = np.repeat([0, 1, 2], [2, 3, 1]), np.repeat([0, 1, 2], [3, 2, 2])
    row, col = bipartite_spectral_coclustering(x[rp][:, cp], 3)
    assert ari(np.r_[row, col], np.r_[truth_r[rp], truth_c[cp]]) == 1.0
    row1, col1 = bipartite_spectral_coclustering(x, 1)
    assert np.all(row1 == 0) and np.all(col1 == 0)
    with pytest.raises(ValueError):
        bipartite_spectral_coclustering(x, 7)


def test_coclustering_near_block_diagonal(rng):
    for _ in range(20):
        blocks = [rng.random((2, 2)) + 0.2 for _ in range(3)]
        x = linalg.block_diag(*blocks) + 1e-3 * rng.random((6, 6))
        row, col = bipartite_spectral_coclustering(x, 3)
        truth = np.repeat([0, 1, 2], 2)
        assert ari(np.r_[row, col], np.r_[truth, truth]) == 1.0


def test_coclustering_zero_rows_marked():
    x = np.array([[1.0, 0, 0], [0, 0, 0], [0, 1.0, 1.0]])
    row, col = bipartite_spectral_coclustering(x, 2)
    assert row[1] == -1
    cells = coclustering_cells(row, col)
    assert np.all(cells[1] == -1)
    assert cells[0, 0] == row[0] and cells[2, 1] == row[2] and cells[0, 1] == -1


class FakeEstimator:
    def __init__(self, ll, dof, support):
        self.ll, self._dof, self.support = ll, dof, support

    def _views(self, X):
        return X

    def log_likelihood(self, views):
        return self.ll

    def dof(self):
        return self._dof

    def support_size(self):
        return self.support


def test_sweep_and_select_examples():
    X = [np.zeros((100, 1))]
    report = sweep_and_select(lambda c, X: FakeEstimator(-50.0, 2, 3), [0.5], X)
    assert report.chosen == 0 and len(report.candidates) == 1
    lls = {1: -300.0, 2: -100.0, 3: -280.0}
    report = sweep_and_select(lambda c, X: FakeEstimator(lls[c], 2, 4), [1, 2, 3], X)
    assert report.best.hyperparam == 2
    manual = [bic(lls[c], 2, 4, 100) for c in (1, 2, 3)]
    np.testing.assert_allclose([c.bic for c in report.candidates], manual)
    with pytest.raises(ValueError, match="no candidates"):
        sweep_and_select(lambda c, X: None, [], X)


def test_sweep_records_skipped_failures():
    X = [np.zeros((100, 1))]

    def fitter(c, X):
        if c > 2:
            raise ArithmeticError(f"cannot fit {c}")
        return FakeEstimator(-100.0 * c, 1, 1)

    report = sweep_and_select(fitter, [1, 2, 3], X, skip_errors=(ArithmeticError,))
    assert report.chosen == 0
    assert report.candidates[2].bic == -np.inf and "cannot fit 3" in report.candidates[2].error
    assert report.models[2] is None
    assert json.loads(report.to_json())["candidates"][2]["bic"] is None
    with pytest.raises(ArithmeticError):
        sweep_and_select(fitter, [3, 4], X, skip_errors=(ArithmeticError,))
    with pytest.raises(ArithmeticError):
        sweep_and_select(fitter, [1, 3], X)


def test_report_serialization_and_closest():
    cands = [Candidate(float(b), -float(b), -1.0, 2, 3, b) for b in (1, 3, 4)]
    report = SelectionReport(cands, 0)
    assert report.closest(2) == 0 and report.closest(4) == 2
    lines = report.to_csv().splitlines()
    assert lines[0].split(",")[-1] == "chosen" and len(lines) == 4
    assert json.loads(report.to_json())["chosen"] == 0


def test_sweep_real_estimator_matches_own_bic(rng):
    X = [rng.standard_normal((80, 2)), rng.standard_normal((80, 1))]
    report = sweep_and_select(
        lambda k, X: MVMM((int(k), 2), n_init=1, random_state=0).fit(X), [1, 2], X)
    for cand, est in zip(report.candidates, report.models):
        assert cand.bic == pytest.approx(est.bic(X))
