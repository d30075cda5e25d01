"""Model selection by BIC, clustering agreement, and the spectral
co-clustering baseline for finding blocks in an estimated table."""
import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score
from sklearn.utils import check_random_state

from .io import dumps
from .laplacian import _check_matrix, tsym


def bic(log_lik, dof, support_size, n):
    """``2 * log_lik - (dof + support_size - 1) * log(n)``.

    Larger is better: models are selected by maximizing this value.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    return 2.0 * log_lik - (dof + support_size - 1) * np.log(n)


def ari(labels_a, labels_b):
    """Adjusted Rand index between two labelings of the same points."""
    labels_a, labels_b = np.asarray(labels_a), np.asarray(labels_b)
    if labels_a.shape != labels_b.shape:
        raise ValueError(f"label vectors differ in length: {labels_a.shape} vs {labels_b.shape}")
    return float(adjusted_rand_score(labels_a, labels_b))


def bipartite_spectral_coclustering(pi_hat, n_blocks, n_init=10, random_state=0):
    """Co-cluster the rows and columns of a nonnegative table.

    Rows and columns are embedded with the top ``n_blocks`` singular
    vectors of the degree-normalized table, scaled by inverse square-root
    degrees, and clustered jointly with k-means.

    Returns
    -------
    row_labels : ndarray of shape (R,)
    col_labels : ndarray of shape (C,)
        Block label of every row and column; rows or columns with zero
        mass get -1.
    """
    x = _check_matrix(pi_hat, "pi_hat")
    R, C = x.shape
    if not 1 <= n_blocks <= min(R, C):
        raise ValueError(f"n_blocks={n_blocks} must lie between 1 and {min(R, C)}")
    dr, dc = x.sum(axis=1), x.sum(axis=0)
    rows, cols = dr > 0, dc > 0
    row_labels, col_labels = np.full(R, -1), np.full(C, -1)
    if n_blocks == 1:
        row_labels[rows], col_labels[cols] = 0, 0
        return row_labels, col_labels

    u, _, vh = linalg.svd(tsym(x[rows][:, cols]), full_matrices=False)
    emb = np.vstack([
        u[:, :n_blocks] / np.sqrt(dr[rows])[:, None],
        vh[:n_blocks].T / np.sqrt(dc[cols])[:, None],
    ])
    km = KMeans(n_blocks, n_init=n_init, random_state=check_random_state(random_state))
    labels = km.fit_predict(emb)
    row_labels[rows] = labels[: rows.sum()]
    col_labels[cols] = labels[rows.sum():]
    return row_labels, col_labels


def coclustering_cells(row_labels, col_labels):
    """Cell block table: the shared label where row and column agree, else -1."""
    row_labels, col_labels = np.asarray(row_labels), np.asarray(col_labels)
    cells = np.where(row_labels[:, None] == col_labels[None, :], row_labels[:, None], -1)
    return np.where(row_labels[:, None] < 0, -1, cells)


def coclustering_block_labels(model, row_labels, col_labels, views):
    """Observation block labels from a co-clustering of the table."""
    from .bd import cell_block_labels

    return cell_block_labels(model, coclustering_cells(row_labels, col_labels), views)


@dataclass
class Candidate:
    """BIC record of one fitted candidate; failed fits have ``bic = -inf``."""

    hyperparam: float
    bic: float
    log_lik: float
    dof: int
    support_size: int
    n_blocks: int
    error: str = ""


@dataclass
class SelectionReport:
    """BIC of every candidate; ``chosen`` indexes the largest BIC."""

    candidates: list
    chosen: int
    models: list = field(default_factory=list, repr=False)

    @property
    def best(self):
        return self.candidates[self.chosen]

    @property
    def best_model(self):
        return self.models[self.chosen] if self.models else None

    def closest(self, target, key="n_blocks"):
        """Index of the candidate whose ``key`` is closest to ``target`` (first on ties)."""
        values = np.array([getattr(c, key) for c in self.candidates], dtype=float)
        return int(np.argmin(np.abs(values - target)))

    def to_csv(self, path=None):
        buf = io.StringIO()
        names = list(Candidate.__dataclass_fields__)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names + ["chosen"])
        for i, c in enumerate(self.candidates):
            writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(c).values()]
                            + [int(i == self.chosen)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_dict(self):
        return {"chosen": self.chosen, "candidates": [asdict(c) for c in self.candidates]}

    def to_json(self, path=None):
        text = dumps(self.to_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _n_blocks(est):
    if hasattr(est, "block_structure"):
        return int(est.block_structure().num_blocks)
    return -1


def evaluate_candidate(est, hyperparam, X):
    """BIC record of a fitted multi-view estimator."""
    views = est._views(X)
    ll = est.log_likelihood(views)
    n = views[0].shape[0]
    return Candidate(
        hyperparam=float(hyperparam),
        bic=float(bic(ll, est.dof(), est.support_size(), n)),
        log_lik=float(ll),
        dof=int(est.dof()),
        support_size=int(est.support_size()),
        n_blocks=_n_blocks(est),
    )


def sweep_and_select(fitter, candidates, X, n_jobs=1, keep_models=True, skip_errors=()):
    """Fit every candidate and choose the largest BIC.

    Parameters
    ----------
    fitter : callable
        ``fitter(candidate, X)`` returns a fitted estimator exposing
        ``log_likelihood``, ``dof`` and ``support_size``.
    candidates : sequence of float
        Hyperparameter values (penalty weights or block counts).
    X : multi-view data accepted by the estimators.
    n_jobs : int
        Candidates fitted in parallel with joblib.
    skip_errors : tuple of exception types
        Fits raising one of these are recorded with ``bic = -inf`` and the
        error message instead of aborting the sweep.

    Returns
    -------
    SelectionReport
        ``models[i]`` is None for failed candidates.

    Raises
    ------
    Exception
        The first candidate's error when every candidate failed.
    """
    from joblib import Parallel, delayed

    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidates to select from")

    def run(c):
        try:
            est = fitter(c, X)
        except skip_errors as err:
            record = Candidate(float(c), -np.inf, float("nan"), -1, -1, -1,
                               f"{type(err).__name__}: {err}")
            return err, record
        return est, evaluate_candidate(est, c, X)

    out = Parallel(n_jobs=n_jobs)(delayed(run)(c) for c in candidates)
    records = [r for _, r in out]
    if all(r.error for r in records):
        raise out[0][0]
    models = [None if r.error else m for m, r in out]
    chosen = int(np.argmax([r.bic for r in records]))
    return SelectionReport(records, chosen, models if keep_models else [])
