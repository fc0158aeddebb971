"""Cross-validated choice of the rank-SVM cost C and RBF bandwidth sigma.

Folds partition the training *points*.  A model is fitted on pairs whose
endpoints both lie in the training folds and judged on pairs whose
endpoints both lie in the held-out fold, by the fraction of held-out pairs
it puts in the wrong order.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dataset_io import Dataset
from .errors import DataError, DegenerateRankingError
from .knn_stats import NeighborConfig, NominalScoreTable, loo_statistics
from .rank_trainer import (
    DEFAULT_LEVELS,
    DEFAULT_TOL,
    NonConvergenceWarning,
    PreferencePairSet,
    QuantizedRanks,
    RankModel,
    decision_values,
    generate_pairs,
    quantize,
    solve_rank_dual,
)

__all__ = [
    "DEFAULT_C_GRID",
    "CONSTANT_RANGE",
    "CvGrid",
    "CvReport",
    "wpdl",
    "default_sigma_grid",
    "fold_assignment",
    "cross_validate",
]

log = logging.getLogger(__name__)

DEFAULT_C_GRID = (0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0)
# decision-value spread below which a fold model counts as constant
CONSTANT_RANGE = 1e-10


@dataclass(frozen=True)
class CvGrid:
    c_values: tuple = DEFAULT_C_GRID
    sigma_values: tuple = ()
    folds: int = 4

    def __post_init__(self):
        object.__setattr__(self, "c_values", tuple(float(c) for c in self.c_values))
        object.__setattr__(self, "sigma_values", tuple(float(s) for s in self.sigma_values))
        if not self.c_values or not self.sigma_values:
            raise DataError("both C and sigma grids must be non-empty")
        if min(self.c_values) <= 0 or min(self.sigma_values) <= 0:
            raise DataError("grid values must be positive")
        if self.folds < 2:
            raise DataError("cross-validation needs at least 2 folds")


@dataclass
class CvReport:
    """Mean held-out WPDL per (C, sigma) cell; NaN marks skipped cells."""

    c_values: tuple
    sigma_values: tuple
    mean_loss: np.ndarray
    fold_loss: np.ndarray
    best_c: float
    best_sigma: float
    skipped: list = field(default_factory=list)

    @property
    def best_loss(self) -> float:
        i = self.c_values.index(self.best_c)
        j = self.sigma_values.index(self.best_sigma)
        return float(self.mean_loss[i, j])

    def to_text(self) -> str:
        lines = [
            f"best_c={self.best_c!r}",
            f"best_sigma={self.best_sigma!r}",
            f"best_loss={self.best_loss!r}",
            "c,sigma,mean_wpdl",
        ]
        for i, c in enumerate(self.c_values):
            for j, s in enumerate(self.sigma_values):
                lines.append(f"{c!r},{s!r},{float(self.mean_loss[i, j])!r}")
        return "\n".join(lines) + "\n"


def _pair_disagreement(g_first, g_second) -> float:
    return float(np.count_nonzero(g_first < g_second)) / len(g_first)


def wpdl(model: RankModel, X, holdout_pairs: PreferencePairSet) -> float:
    """Fraction of pairs ``(i, j)`` with ``g(x_i) < g(x_j)``.

    ``X`` holds the points the pair indices refer to.  Tied values do not
    count as disagreements, so a constant ranker scores 0 here; callers
    that compare models should screen constant rankers out.
    """
    if len(holdout_pairs) == 0:
        raise DataError("cannot evaluate WPDL on an empty pair set")
    X = X.points if isinstance(X, Dataset) else np.asarray(X, dtype=np.float64)
    g = decision_values(model, X)
    return _pair_disagreement(g[holdout_pairs.first], g[holdout_pairs.second])


def default_sigma_grid(S: Dataset, k: int = 20) -> list[float]:
    """Bandwidths ``2**i * D`` for ``i = -10..10``.

    ``D`` is the mean over training points of their leave-one-out average
    distance to the first ``k`` neighbours.
    """
    if S.n <= k:
        raise DataError(f"need more than k={k} points, have {S.n}")
    scale = float(loo_statistics(S, NeighborConfig(k=k, statistic_mode="mean_first_k")).mean())
    if not scale > 0:
        raise DataError("degenerate data: average neighbour distance is zero")
    return [scale * 2.0**i for i in range(-10, 11)]


def fold_assignment(n: int, folds: int, seed) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into near-equal sorted folds."""
    if folds > n:
        raise DataError(f"cannot split {n} points into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _fold_pairs(levels, index, m, cap, seed):
    """Pairs among ``index``, numbered locally, or None when degenerate."""
    try:
        return generate_pairs(QuantizedRanks(levels[index], m), cap=cap, seed=seed)
    except DegenerateRankingError:
        return None


def cross_validate(
    S: Dataset,
    table: NominalScoreTable,
    grid: CvGrid,
    m: int = DEFAULT_LEVELS,
    seed=0,
    cap_per_point: int | None = 20,
    tol: float = DEFAULT_TOL,
    max_passes: int = 100,
) -> CvReport:
    """Grid search over (C, sigma) by ``grid.folds``-fold CV.

    ``cap_per_point`` bounds the training pairs of each fold at that many
    per training point and ``max_passes`` bounds each solver run; both keep
    the full grid affordable.  For every sigma and fold the costs are
    visited in ascending order, each run warm-started from the previous
    cost's multipliers.
    """
    if len(table) != S.n:
        raise DataError("score table and dataset sizes differ")
    levels = quantize(table, m).levels
    parts = fold_assignment(S.n, grid.folds, seed)
    X = S.points

    fold_jobs = []
    for f, held in enumerate(parts):
        train = np.concatenate([p for g, p in enumerate(parts) if g != f])
        cap = None if cap_per_point is None else cap_per_point * len(train)
        train_pairs = _fold_pairs(levels, train, m, cap, seed=(seed, f))
        held_pairs = _fold_pairs(levels, held, m, None, seed=(seed, f))
        if train_pairs is None or held_pairs is None:
            warnings.warn(f"fold {f}: a single quantisation level, fold skipped", RuntimeWarning, stacklevel=2)
            continue
        fold_jobs.append((f, train, held, train_pairs, held_pairs))
    if not fold_jobs:
        raise DegenerateRankingError("every CV fold is degenerate; nothing to cross-validate")

    c_order = np.argsort(grid.c_values, kind="stable")
    nc, ns = len(grid.c_values), len(grid.sigma_values)
    fold_loss = np.full((nc, ns, grid.folds), np.nan)
    skipped = []

    for j, sigma in enumerate(grid.sigma_values):
        K = _kernels.gram_matrix(np.ascontiguousarray(X), sigma)
        for f, train, held, train_pairs, held_pairs in fold_jobs:
            K_train = np.ascontiguousarray(K[np.ix_(train, train)])
            K_cross = K[np.ix_(held, train)]
            warm = None
            prev_c, prev_loss = None, None
            for i in c_order:
                C = grid.c_values[i]
                if C == prev_c:
                    fold_loss[i, j, f] = prev_loss
                    continue
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", NonConvergenceWarning)
                    sol = solve_rank_dual(
                        X[train],
                        train_pairs,
                        C,
                        sigma,
                        tol=tol,
                        max_passes=max_passes,
                        seed=(seed, f),
                        gram=K_train,
                        warm_alpha=warm,
                    )
                warm = sol.alpha
                beta = _kernels.point_coefficients(sol.pairs[:, 0], sol.pairs[:, 1], sol.alpha, len(train))
                g = K_cross @ beta
                if np.ptp(g) < CONSTANT_RANGE:
                    loss = 1.0
                else:
                    loss = _pair_disagreement(g[held_pairs.first], g[held_pairs.second])
                fold_loss[i, j, f] = loss
                prev_c, prev_loss = C, loss
            log.debug("sigma=%g fold=%d done", sigma, f)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean_loss = np.nanmean(fold_loss, axis=2)

    best = None
    for i in range(nc):
        for j in range(ns):
            if np.isnan(mean_loss[i, j]):
                skipped.append((grid.c_values[i], grid.sigma_values[j]))
                continue
            key = (mean_loss[i, j], grid.c_values[i], grid.sigma_values[j])
            if best is None or key < best:
                best = key
    if best is None:
        raise DegenerateRankingError("all grid cells were skipped")
    return CvReport(
        c_values=grid.c_values,
        sigma_values=grid.sigma_values,
        mean_loss=mean_loss,
        fold_loss=fold_loss,
        best_c=best[1],
        best_sigma=best[2],
        skipped=skipped,
    )
