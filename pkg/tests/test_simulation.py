import json

import numpy as np
import pytest

from mvmm.laplacian import count_blocks
from mvmm.mvmm import check_prob_table
from mvmm.simulation import (
    DESIGNS,
    SimConfig,
    make_pi,
    overall_labels,
    rep_streams,
    run_experiment,
    sample_dataset,
    sample_model,
)


def test_beads_and_lollipop():
    pi = make_pi("beads")
    assert np.sum(pi > 0) == 20 and np.allclose(pi[pi > 0], 0.05)
    assert count_blocks(pi).num_blocks == 5
    pi = make_pi("lollipop")
    vals = np.sort(pi[pi > 0])
    np.testing.assert_allclose(vals[:25], 1 / 150)
    np.testing.assert_allclose(vals[25:], 1 / 6)
    assert count_blocks(pi).num_blocks == 6


def test_all_designs_valid(rng):
    for design in DESIGNS:
        pi = make_pi(design, rng=rng)
        check_prob_table(pi)
        assert np.all(pi.sum(axis=0) > 0) and np.all(pi.sum(axis=1) > 0)
    assert count_blocks(make_pi("diagonal")).num_blocks == 10
    with pytest.raises(ValueError, match="unknown design"):
        make_pi("stripes")


def test_sample_model_moments(rng):
    pi = np.full((2, 3), 1 / 6)
    m = sample_model(pi, (0.0, 2.0), (4, 5), rng)
    assert np.all(m.views[0].means == 0)
    assert [v.means.shape[0] for v in m.views] == [2, 3]
    big = sample_model(np.full((1000, 1), 1e-3), (3.0, 1.0), (2, 1), rng)
    assert big.views[0].means.var() == pytest.approx(9.0, rel=0.1)
    assert np.all(big.views[0].variances == 1)


def test_sample_dataset_frequencies(rng):
    pi = np.array([[0.5, 0.1], [0.0, 0.4]])
    m = sample_model(pi, (1.0, 1.0), (1, 1), rng)
    n = 100_000
    views, tuples, blocks = sample_dataset(m, n, rng)
    freq = np.zeros((2, 2))
    np.add.at(freq, tuple(tuples.T), 1)
    freq /= n
    band = 3 * np.sqrt(pi * (1 - pi) / n)
    assert np.all(np.abs(freq - pi) <= band + 1e-12)
    # within a cluster tuple the views are independent
    mask = (tuples[:, 0] == 0) & (tuples[:, 1] == 0)
    r = np.corrcoef(views[0][mask, 0], views[1][mask, 0])[0, 1]
    assert abs(r) < 4 / np.sqrt(mask.sum())
    onehot = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.warns(UserWarning, match="zero marginal"):
        one = sample_model(onehot, (1, 1), (1, 1), rng)
    _, t, _ = sample_dataset(one, 50, rng)
    assert np.all(t == [0, 1])
    assert np.all(blocks >= 0)


def test_overall_labels():
    np.testing.assert_array_equal(overall_labels(np.array([[0, 0], [1, 2], [2, 1]]), (3, 3)),
                                  [0, 5, 7])


def test_rep_streams_independent_and_reproducible():
    a = rep_streams(3, 2, 2)
    b = rep_streams(3, 2, 2)
    assert a[1][0].random() == b[1][0].random()
    assert a[0][0].random() != a[0][1].random()


def test_config_load_json_and_toml(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"design": "diagonal", "shape": [3, 3]}))
    cfg = SimConfig.load(tmp_path / "c.json")
    assert cfg.shape == (3, 3) and cfg.design == "diagonal"
    (tmp_path / "c.toml").write_text('design = "beads"\nn_train = [200, 400]\n')
    assert SimConfig.load(tmp_path / "c.toml").n_train == (200, 400)
    (tmp_path / "bad.json").write_text(json.dumps({"colour": 1}))
    with pytest.raises(ValueError, match="unknown config keys"):
        SimConfig.load(tmp_path / "bad.json")
    with pytest.raises(ValueError, match="unknown methods"):
        SimConfig(methods=("kmeans",))


def _small_config(**kw):
    base = dict(design="beads", shape=(4, 4), n_blocks=2, sigma_mean=(4.0, 4.0), dims=(2, 2),
                n_train=(200,), n_test=200, n_reps=1, n_init=2, methods=("mvmm",))
    base.update(kw)
    return SimConfig(**base)


def test_run_experiment_mvmm_only_and_deterministic():
    cfg = _small_config()
    text = run_experiment(cfg).to_csv()
    rows = text.splitlines()
    assert rows[0] == "rep,method,n,hyperparam,metric,value"
    assert {r.split(",")[4] for r in rows[1:]} == {"ari_overall", "ari_block_spectral"}
    assert text == run_experiment(cfg).to_csv()


def test_run_experiment_independent_of_jobs():
    cfg = _small_config(methods=("mvmm", "cat"), n_reps=2)
    assert run_experiment(cfg, n_jobs=1).to_csv() == run_experiment(cfg, n_jobs=2).to_csv()


def test_run_experiment_records_failures():
    cfg = _small_config(methods=("bd",), bd_grid=(9,))
    rows = run_experiment(cfg).to_csv().splitlines()[1:]
    assert len(rows) == 1 and rows[0].split(",")[4] == "error"
