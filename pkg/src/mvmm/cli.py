"""Command line interface: ``mvmm {simulate,fit,select,blocks,spectrum,experiment}``.

Exit codes: 0 success, 2 input error, 3 numerical failure. The
``MVMM_SEED`` environment variable overrides ``--seed``.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from scipy import linalg

from .bd import BlockDiagError, BlockDiagMVMM
from .block_diag_opt import AlternateError, SubproblemError
from .io import InputError, dumps, load_model, read_matrix_csv, read_views, save_model, write_matrix_csv
from .laplacian import count_blocks, default_support_tol, spectrum_report
from .log_pen import LogPenMVMM, lambda_grid
from .mixtures import DiagGaussianMixture
from .mvmm import MVMM, MvmmModel
from .selection import sweep_and_select
from .simulation import SimConfig, overall_labels, run_experiment, sample_dataset, sample_model

logger = logging.getLogger("mvmm")

EXIT_INPUT = 2
EXIT_NUMERIC = 3
NUMERIC_ERRORS = (BlockDiagError, SubproblemError, AlternateError, linalg.LinAlgError,
                  FloatingPointError)


def resolve_seed(seed):
    env = os.environ.get("MVMM_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise InputError(f"MVMM_SEED must be an integer, got {env!r}") from None
    return seed


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_simulate(args):
    cfg = SimConfig.load(args.config)
    seed = resolve_seed(args.seed if args.seed is not None else cfg.seed)
    rng = np.random.default_rng(seed)
    pi = cfg.make_pi(rng=rng)
    model = sample_model(pi, cfg.sigma_mean, cfg.dims, rng)
    n = args.n if args.n is not None else cfg.n_train[0]
    views, tuples, blocks = sample_dataset(model, n, rng)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for v, x in enumerate(views):
        path = out / f"view_{v + 1}.csv"
        write_matrix_csv(path, x, names=[f"v{v + 1}_{j}" for j in range(x.shape[1])])
        paths.append(str(path))
    labels = np.column_stack([tuples, overall_labels(tuples, pi.shape), blocks])
    write_matrix_csv(out / "labels.csv", labels,
                     names=[f"view_{v + 1}" for v in range(len(views))] + ["overall", "block"],
                     fmt=str)
    (out / "pi.json").write_text(dumps({"shape": list(pi.shape), "pi": pi,
                                        "num_blocks": count_blocks(pi).num_blocks}))
    save_model(out / "truth_model.json", model, method="truth",
               extra={"config": cfg.to_dict(), "seed": seed})
    logger.info("wrote %d observations to %s", n, out)
    return 0


def _estimator(args, method, seed, **override):
    common = dict(n_init=args.n_init, random_state=seed)
    K = tuple(args.n_view_components)
    if method == "mvmm":
        return MVMM(K, max_iter=args.max_iter, tol=args.tol, **common)
    if method == "log":
        return LogPenMVMM(K, pen=override.get("pen", args.pen), delta=args.delta,
                          init_steps=args.init_steps, max_iter=args.max_iter, tol=args.tol,
                          **common)
    if method == "bd":
        return BlockDiagMVMM(
            K, n_blocks=int(override.get("n_blocks", args.n_blocks)), epsilon=args.epsilon,
            alpha0=args.alpha0, alpha_factor=args.alpha_factor, c_heuristic=args.c_heuristic,
            init_steps=args.init_steps, n_starts=args.n_starts, block_tol=args.block_tol,
            alpha_max=args.alpha_max, stall_rounds=args.stall_rounds,
            **common,
        )
    raise InputError(f"unknown method {method!r}")


def _fit_document(est, method, args, seed):
    extra = {"seed": seed, "params": est.get_params(), "n_iter": est.n_iter_,
             "converged": bool(est.converged_)}
    if method == "bd":
        extra.update(d=est.d_, epsilon=est.epsilon_, alpha_history=est.alpha_history_,
                     blocks=est.blocks_.to_dict())
    elif method == "log":
        extra.update(pen=est.pen, delta=est.delta, blocks=est.block_structure().to_dict())
    return extra


def cmd_fit(args):
    seed = resolve_seed(args.seed)
    views = read_views(args.views)
    if args.method == "cat":
        X = np.hstack(views)
        k = args.n_components or int(np.prod(args.n_view_components))
        est = DiagGaussianMixture(k, n_init=args.n_init, max_iter=args.max_iter, tol=args.tol,
                                  random_state=seed).fit(X)
        model = MvmmModel([est.view_], est.weights_)
        extra = {"seed": seed, "params": est.get_params(), "n_iter": est.n_iter_,
                 "converged": bool(est.converged_)}
    else:
        if len(args.n_view_components) != len(views):
            raise InputError(
                f"--n-view-components has {len(args.n_view_components)} entries "
                f"for {len(views)} views"
            )
        est = _estimator(args, args.method, seed).fit(views)
        model = est.model_
        extra = _fit_document(est, args.method, args, seed)
    save_model(args.out, model, method=args.method, extra=extra)
    return 0


def cmd_select(args):
    seed = resolve_seed(args.seed)
    views = read_views(args.views)
    if args.method not in ("log", "bd"):
        raise InputError("select supports --method log or bd")
    if args.grid:
        grid = list(args.grid)
    elif args.method == "log":
        grid = list(lambda_grid(int(np.prod(args.n_view_components))))
    else:
        grid = list(range(1, min(args.n_view_components) + 1))
    key = "pen" if args.method == "log" else "n_blocks"

    def fitter(value, X):
        return _estimator(args, args.method, seed, **{key: value}).fit(X)

    report = sweep_and_select(fitter, grid, views, n_jobs=args.jobs, skip_errors=NUMERIC_ERRORS)
    report.to_csv(args.out)
    Path(args.out).with_suffix(".json").write_text(report.to_json())
    if args.models_dir:
        mdir = Path(args.models_dir)
        mdir.mkdir(parents=True, exist_ok=True)
        for i, est in enumerate(report.models):
            if est is None:
                continue
            save_model(mdir / f"model_{i}.json", est.model_, method=args.method,
                       extra=_fit_document(est, args.method, args, seed))
    logger.info("chose %s = %s", key, report.best.hyperparam)
    return 0


def cmd_blocks(args):
    model, doc = load_model(args.model)
    extra = doc.get("extra") or {}
    if doc.get("method") == "bd" and extra.get("d") is not None:
        table, source = np.asarray(extra["d"], dtype=float), "d"
    else:
        table, source = model.pi, "pi"
    if table.ndim < 2:
        raise InputError("block structure needs a table with at least two views")
    tol = default_support_tol(table) if args.support_tol is None else args.support_tol
    blocks = count_blocks(table, support_tol=tol)
    _write(dumps({"source": source, "support_tol": tol, **blocks.to_dict()}), args.out)
    return 0


def cmd_spectrum(args):
    x = read_matrix_csv(args.matrix, header=args.header)
    _write(dumps(spectrum_report(x, args.support_tol).to_dict()), args.out)
    return 0


def cmd_experiment(args):
    cfg = SimConfig.load(args.config)
    if args.seed is not None or os.environ.get("MVMM_SEED"):
        cfg.seed = resolve_seed(args.seed if args.seed is not None else cfg.seed)
    results = run_experiment(cfg, n_jobs=args.jobs)
    results.to_csv(args.out)
    return 0


def _add_fit_options(p):
    p.add_argument("views", nargs="+", help="one CSV per view (header row, aligned rows)")
    p.add_argument("--n-view-components", type=int, nargs="+", default=[10, 10],
                   metavar="K", help="clusters per view")
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--init-steps", type=int, default=10,
                   help="plain EM steps before penalized fits")
    p.add_argument("--pen", "--lambda", dest="pen", type=float, default=1e-3,
                   help="log penalty weight (log)")
    p.add_argument("--delta", type=float, default=1e-6, help="log penalty offset (log)")
    p.add_argument("--n-blocks", type=int, default=1, help="number of blocks (bd)")
    p.add_argument("--epsilon", type=float, default=None, help="dense floor of pi (bd)")
    p.add_argument("--alpha0", type=float, default=None, help="initial penalty weight (bd)")
    p.add_argument("--alpha-factor", type=float, default=2.0)
    p.add_argument("--c-heuristic", type=float, default=0.01)
    p.add_argument("--block-tol", type=float, default=1e-6)
    p.add_argument("--n-starts", type=int, default=1,
                   help="independent warm starts, best likelihood kept (bd)")
    p.add_argument("--alpha-max", type=float, default=1e12,
                   help="give up when alpha exceeds this (bd)")
    p.add_argument("--stall-rounds", type=int, default=8,
                   help="give up after this many alpha increases without progress (bd)")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mvmm",
        description="Multi-view mixture models with structured cluster membership tables.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a synthetic multi-view dataset")
    p.add_argument("--config", required=True, help="SimConfig as JSON or TOML")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=None, help="sample size (default: first n_train)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model and write model JSON")
    _add_fit_options(p)
    p.add_argument("--method", choices=["mvmm", "log", "bd", "cat"], default="mvmm")
    p.add_argument("--n-components", type=int, default=None,
                   help="clusters for cat (default: product of --n-view-components)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="BIC sweep over penalties or block counts")
    _add_fit_options(p)
    p.add_argument("--method", choices=["log", "bd"], required=True)
    p.add_argument("--grid", type=float, nargs="+", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--models-dir", default=None, help="also write each fitted model here")
    p.add_argument("--out", required=True, help="report CSV (a .json twin is written too)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("blocks", help="block structure of a fitted model")
    p.add_argument("model")
    p.add_argument("--support-tol", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_blocks)

    p = sub.add_parser("spectrum", help="Laplacian spectra of a nonnegative matrix")
    p.add_argument("matrix", help="matrix CSV")
    p.add_argument("--header", action="store_true", help="the CSV has a header row")
    p.add_argument("--support-tol", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("experiment", help="Monte-Carlo method comparison (long CSV)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NUMERIC_ERRORS as err:
        print(f"error: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
