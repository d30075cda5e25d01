"""Synthetic two-view data with structured probability tables and a seeded
Monte-Carlo runner comparing the clustering methods."""
import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .laplacian import count_blocks
from .mixtures import ViewModel
from .mvmm import MvmmModel, check_prob_table

logger = logging.getLogger(__name__)

DESIGNS = ("beads", "lollipop", "sparse_random", "diagonal", "rank_one")
DEFAULT_N_GRID = (200, 500, 1000, 1500, 2000, 2500, 3000, 3500, 4000)


def make_pi(design, shape=(10, 10), n_blocks=5, block_size=2, n_singletons=5,
            big_block=5, nnz=18, rng=None, max_tries=1000):
    """Probability table for one of the simulation designs.

    Parameters
    ----------
    design : {"beads", "lollipop", "sparse_random", "diagonal", "rank_one"}
        ``beads``: ``n_blocks`` square blocks of side ``block_size`` along the
        diagonal, all nonzero entries equal. ``lollipop``: ``n_singletons``
        1x1 blocks then one ``big_block`` square block, every block with the
        same total mass. ``sparse_random``: ``nnz`` uniformly chosen cells of
        equal mass, redrawn until no row or column is empty. ``diagonal``:
        uniform on the diagonal. ``rank_one``: uniform everywhere.
    shape : tuple of int
    rng : numpy Generator, optional
        Only used by ``sparse_random``.
    """
    R, C = shape
    pi = np.zeros(shape)
    if design == "beads":
        if n_blocks * block_size > min(shape):
            raise ValueError(f"{n_blocks} blocks of size {block_size} do not fit in {shape}")
        for b in range(n_blocks):
            s = slice(b * block_size, (b + 1) * block_size)
            pi[s, s] = 1.0
    elif design == "lollipop":
        if n_singletons + big_block > min(shape):
            raise ValueError("lollipop blocks do not fit in the table")
        mass = 1.0 / (n_singletons + 1)
        for b in range(n_singletons):
            pi[b, b] = mass
        s = slice(n_singletons, n_singletons + big_block)
        pi[s, s] = mass / big_block**2
    elif design == "sparse_random":
        if not max(R, C) <= nnz <= R * C:
            raise ValueError(f"nnz={nnz} cannot cover every row and column of {shape}")
        rng = np.random.default_rng(rng)
        for _ in range(max_tries):
            pi = np.zeros(R * C)
            pi[rng.choice(R * C, size=nnz, replace=False)] = 1.0
            pi = pi.reshape(shape)
            if np.all(pi.sum(axis=1) > 0) and np.all(pi.sum(axis=0) > 0):
                break
        else:
            raise ValueError("could not draw a sparse table with positive marginals")
    elif design == "diagonal":
        if R != C:
            raise ValueError("diagonal design needs a square table")
        pi = np.eye(R)
    elif design == "rank_one":
        pi = np.ones(shape)
    else:
        raise ValueError(f"unknown design {design!r}; expected one of {DESIGNS}")
    pi = pi / pi.sum()
    if np.any(pi.sum(axis=1) == 0) or np.any(pi.sum(axis=0) == 0):
        raise ValueError(f"design {design!r} leaves a row or column empty for shape {shape}")
    return pi


def sample_model(pi, sigma_mean, dims, rng):
    """Cluster means drawn from ``N(0, sigma^2 I)`` per view, identity covariances."""
    rng = np.random.default_rng(rng)
    pi = check_prob_table(pi)
    if not len(sigma_mean) == len(dims) == pi.ndim:
        raise ValueError("need one sigma and one dimension per view")
    views = []
    for k, s, d in zip(pi.shape, sigma_mean, dims):
        views.append(ViewModel(rng.normal(0.0, s, size=(k, d)), np.ones((k, d))))
    return MvmmModel(views, pi)


def sample_dataset(model, n, rng):
    """Draw ``n`` observations.

    Returns
    -------
    views : list of (n, d_v) arrays
    tuples : ndarray of shape (n, V)
        True label tuple of each observation.
    blocks : ndarray of shape (n,)
        Block of the true table that the label tuple belongs to.
    """
    rng = np.random.default_rng(rng)
    pi = model.pi
    flat = rng.choice(pi.size, size=n, p=pi.ravel())
    tuples = np.column_stack(np.unravel_index(flat, pi.shape)).astype(int)
    views = []
    for v, vm in enumerate(model.views):
        k = tuples[:, v]
        noise = rng.standard_normal((n, vm.dim))
        views.append(vm.means[k] + np.sqrt(vm.variances[k]) * noise)
    cells = count_blocks(pi).cell_blocks()
    return views, tuples, cells.ravel()[flat]


def overall_labels(tuples, shape):
    """Flat cell index of each label tuple."""
    return np.ravel_multi_index(tuple(np.asarray(tuples).T), shape)


@dataclass
class SimConfig:
    """Monte-Carlo simulation settings (JSON or TOML document)."""

    design: str = "beads"
    shape: tuple = (10, 10)
    n_blocks: int = 5
    block_size: int = 2
    n_singletons: int = 5
    big_block: int = 5
    nnz: int = 18
    sigma_mean: tuple = (1.0, 0.5)
    dims: tuple = (10, 10)
    n_train: tuple = (1000,)
    n_test: int = 2000
    n_reps: int = 5
    seed: int = 0
    methods: tuple = ("mvmm", "log", "bd", "cat")
    log_grid: tuple = ()
    bd_grid: tuple = ()
    n_init: int = 10

    def __post_init__(self):
        for name in ("shape", "sigma_mean", "dims", "n_train", "methods", "log_grid", "bd_grid"):
            value = getattr(self, name)
            setattr(self, name, tuple(value) if not np.isscalar(value) else (value,))
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        unknown = set(self.methods) - {"mvmm", "log", "bd", "cat"}
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            data = json.loads(path.read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def make_pi(self, rng=None):
        return make_pi(self.design, self.shape, n_blocks=self.n_blocks,
                       block_size=self.block_size, n_singletons=self.n_singletons,
                       big_block=self.big_block, nnz=self.nnz, rng=rng)


def rep_streams(seed, n_reps, n_keys):
    """Independent generators per (rep, key) from one seed."""
    root = np.random.SeedSequence(seed)
    return [
        [np.random.default_rng(s) for s in rep.spawn(n_keys)]
        for rep in root.spawn(n_reps)
    ]


RESULT_COLUMNS = ("rep", "method", "n", "hyperparam", "metric", "value")


@dataclass
class ExperimentResults:
    rows: list = field(default_factory=list)

    def add(self, rep, method, n, hyperparam, metric, value):
        self.rows.append((rep, method, n, hyperparam, metric, value))

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in sorted(self.rows, key=lambda r: r[:5]):
            writer.writerow(_fmt(v) for v in row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else "nan"
    return "" if v is None else str(v)


def _fit_cell(method, cfg, views, test_views, test_truth, hyper, rs):
    """Fit one method and return a list of (hyperparam, metric, value)."""
    from .bd import BlockDiagMVMM
    from .log_pen import LogPenMVMM
    from .mixtures import DiagGaussianMixture
    from .mvmm import MVMM
    from .selection import ari, bipartite_spectral_coclustering, coclustering_block_labels

    true_overall, true_blocks, n_true_blocks = test_truth
    out = []
    if method == "cat":
        est = DiagGaussianMixture(int(np.prod(cfg.shape)), n_init=cfg.n_init,
                                  random_state=rs).fit(np.hstack(views))
        out.append((None, "ari_overall", ari(true_overall, est.predict(np.hstack(test_views)))))
        return out
    if method == "mvmm":
        est = MVMM(cfg.shape, n_init=cfg.n_init, random_state=rs).fit(views)
        out.append((None, "ari_overall", ari(true_overall, est.predict(test_views))))
        row, col = bipartite_spectral_coclustering(est.pi_, n_true_blocks)
        pred = coclustering_block_labels(est.model_, row, col, test_views)
        out.append((None, "ari_block_spectral", ari(true_blocks, pred)))
        return out
    if method == "log":
        est = LogPenMVMM(cfg.shape, pen=hyper, n_init=cfg.n_init, random_state=rs)
    else:
        est = BlockDiagMVMM(cfg.shape, n_blocks=int(hyper), n_init=cfg.n_init, random_state=rs)
    est.fit(views)
    out.append((hyper, "ari_overall", ari(true_overall, est.predict(test_views))))
    out.append((hyper, "ari_block", ari(true_blocks, est.predict_blocks(test_views))))
    out.append((hyper, "bic", est.bic(views)))
    out.append((hyper, "n_blocks", float(est.block_structure().num_blocks)))
    return out


def run_experiment(cfg, n_jobs=1):
    """Monte-Carlo comparison of the methods in ``cfg.methods``.

    Each repetition draws new cluster means and a held-out test set; each
    (rep, n, method, hyperparameter) cell is fitted with its own derived
    random stream, so results do not depend on ``n_jobs``. Failures are
    recorded as an ``error`` metric and the run continues.

    Returns
    -------
    ExperimentResults
    """
    from joblib import Parallel, delayed

    methods = list(cfg.methods)
    pi = cfg.make_pi(rng=np.random.default_rng(cfg.seed))
    n_true_blocks = count_blocks(pi).num_blocks
    log_grid = cfg.log_grid or (1e-3,)
    bd_grid = cfg.bd_grid or (n_true_blocks,)

    tasks = []
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_reps)
    for rep, ss in enumerate(seeds):
        data_ss, fit_ss = ss.spawn(2)
        rng = np.random.default_rng(data_ss)
        model = sample_model(pi, cfg.sigma_mean, cfg.dims, rng)
        test_views, test_tuples, test_blocks = sample_dataset(model, cfg.n_test, rng)
        truth = (overall_labels(test_tuples, pi.shape), test_blocks, n_true_blocks)
        train = {n: sample_dataset(model, n, rng)[0] for n in cfg.n_train}
        cells = [
            (n, m, h)
            for n in cfg.n_train
            for m in methods
            for h in ({"log": log_grid, "bd": bd_grid}.get(m, (None,)))
        ]
        for (n, m, h), cell_ss in zip(cells, fit_ss.spawn(len(cells))):
            rs = int(np.random.default_rng(cell_ss).integers(2**31 - 1))
            tasks.append((rep, n, m, h, train[n], test_views, truth, rs))

    def run(rep, n, m, h, views, test_views, truth, rs):
        try:
            return rep, n, m, h, _fit_cell(m, cfg, views, test_views, truth, h, rs), None
        except Exception as err:  # noqa: BLE001 - recorded per cell, run continues
            logger.warning("rep %d, n=%d, %s(%s) failed: %s", rep, n, m, h, err)
            return rep, n, m, h, [], f"{type(err).__name__}: {err}"

    outputs = Parallel(n_jobs=n_jobs)(delayed(run)(*t) for t in tasks)
    results = ExperimentResults()
    for rep, n, m, h, rows, err in outputs:
        for hyper, metric, value in rows:
            results.add(rep, m, n, _hyper(hyper), metric, float(value))
        if err is not None:
            results.add(rep, m, n, _hyper(h), "error", float("nan"))
    return results


def _hyper(h):
    return None if h is None else float(h)
