"""End-to-end training: nominal scores -> levels -> pairs -> ranker -> detector."""

from __future__ import annotations

import logging
import warnings
from contextlib import contextmanager
from dataclasses import asdict, dataclass

from .dataset_io import Dataset
from .detector import Detector, fit_detector
from .knn_stats import NeighborConfig, resampled_nominal_scores
from .errors import RankADError
from .model_selection import DEFAULT_C_GRID, CvGrid, CvReport, cross_validate, default_sigma_grid
from .rank_trainer import (
    DEFAULT_LEVELS,
    DEFAULT_MAX_PASSES,
    DEFAULT_TOL,
    KernelConfig,
    default_pair_cap,
    generate_pairs,
    quantize,
    train_rank_svm,
)

log = logging.getLogger(__name__)


@dataclass
class RankADConfig:
    """Training parameters.  ``C`` or ``sigma`` left as None are chosen by CV."""

    k: int = 20
    m: int = DEFAULT_LEVELS
    rounds: int = 20
    statistic_mode: str = "mean_first_k"
    eps: float | None = None
    C: float | None = None
    sigma: float | None = None
    cap: int | None = None
    tol: float = DEFAULT_TOL
    max_passes: int = DEFAULT_MAX_PASSES
    seed: int = 42
    folds: int = 4
    cv_cap_per_point: int | None = 20
    cv_max_passes: int = 100


@dataclass
class TrainInfo:
    n: int
    n_pairs: int
    n_support: int
    converged: bool
    passes: int
    max_residual: float
    C: float
    sigma: float
    cv: CvReport | None = None

    def as_metadata(self, config: RankADConfig) -> dict:
        meta = {key: value for key, value in asdict(config).items()}
        meta.update(n=self.n, n_pairs=self.n_pairs, C=self.C, sigma=self.sigma)
        return meta


@contextmanager
def stage(name: str):
    """Tag any rankad error raised inside the block with the stage ``name``."""
    try:
        yield
    except RankADError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


def fit_rankad(S: Dataset, config: RankADConfig | None = None) -> tuple[Detector, TrainInfo]:
    """Run the whole training chain on nominal data ``S``.

    Errors carry a ``stage`` attribute naming the step that failed.
    """
    config = config or RankADConfig()
    with stage("nominal scores"):
        nconf = NeighborConfig(k=config.k, statistic_mode=config.statistic_mode, eps=config.eps)
        table = resampled_nominal_scores(S, nconf, rounds=config.rounds, seed=config.seed)

    with stage("preference pairs"):
        ranks = quantize(table, config.m)
        cap = config.cap if config.cap is not None else default_pair_cap(S.n)
        pairs = generate_pairs(ranks, cap=cap, seed=config.seed)

    report = None
    C, sigma = config.C, config.sigma
    if C is None or sigma is None:
        with stage("cross-validation"):
            grid = CvGrid(
                c_values=(C,) if C is not None else DEFAULT_C_GRID,
                sigma_values=(sigma,) if sigma is not None else default_sigma_grid(S, config.k),
                folds=config.folds,
            )
            report = cross_validate(
                S,
                table,
                grid,
                m=config.m,
                seed=config.seed,
                cap_per_point=config.cv_cap_per_point,
                tol=config.tol,
                max_passes=config.cv_max_passes,
            )
        C, sigma = report.best_c, report.best_sigma
        log.info("cross-validation picked C=%g sigma=%g (WPDL %.4f)", C, sigma, report.best_loss)

    with stage("rank-SVM training"), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = train_rank_svm(
            S, pairs, C, KernelConfig(sigma), tol=config.tol, max_passes=config.max_passes, seed=config.seed
        )
    for w in caught:
        log.warning("%s", w.message)
    with stage("detector fit"):
        detector = fit_detector(model, S)
    info = TrainInfo(
        n=S.n,
        n_pairs=len(pairs),
        n_support=model.n_support,
        converged=model.converged,
        passes=model.passes,
        max_residual=model.max_residual,
        C=C,
        sigma=sigma,
        cv=report,
    )
    return detector, info
