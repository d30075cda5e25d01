"""Multi-view mixture models with structured cluster membership tables.

Estimators
----------
MVMM
    Unconstrained joint label table.
LogPenMVMM
    Sparse table through a log penalty.
BlockDiagMVMM
    Table with a prescribed number of blocks (two views).
DiagGaussianMixture
    Single-view baseline on concatenated features.
"""
from .bd import BdConfig, BlockDiagError, BlockDiagMVMM, fit_bd, predict_block_labels
from .geig import smallest_generalized_eigenbasis, weighted_eigsum
from .laplacian import BlockStructure, count_blocks, spectrum_report
from .log_pen import LogPenConfig, LogPenMVMM, fit_log_pen, soft_threshold_simplex
from .mixtures import DiagGaussianMixture
from .mvmm import MVMM, MvmmModel, fit_em, log_likelihood
from .selection import ari, bic, bipartite_spectral_coclustering, sweep_and_select
from .simulation import SimConfig, make_pi, run_experiment, sample_dataset, sample_model

__version__ = "0.1.0"

__all__ = [
    "BdConfig",
    "BlockDiagError",
    "BlockDiagMVMM",
    "BlockStructure",
    "DiagGaussianMixture",
    "LogPenConfig",
    "LogPenMVMM",
    "MVMM",
    "MvmmModel",
    "SimConfig",
    "ari",
    "bic",
    "bipartite_spectral_coclustering",
    "count_blocks",
    "fit_bd",
    "fit_em",
    "fit_log_pen",
    "log_likelihood",
    "make_pi",
    "predict_block_labels",
    "run_experiment",
    "sample_dataset",
    "sample_model",
    "smallest_generalized_eigenbasis",
    "soft_threshold_simplex",
    "spectrum_report",
    "sweep_and_select",
    "weighted_eigsum",
]
