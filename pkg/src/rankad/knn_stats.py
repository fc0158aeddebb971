"""K-NN graph statistics and the nonparametric p-value estimates built on them.

Three neighbourhood statistics are supported:

``kth_distance``
    distance to the k-th nearest neighbour.
``mean_first_k``
    average distance to the first k neighbours (the default; smoother in
    practice than the k-th distance alone).
``eps_count``
    number of reference points inside a closed ball of radius ``eps``.

Distances are Euclidean and computed by exhaustive scan.  Selecting the k
smallest distances does not depend on how equal distances are ordered, so
the statistics are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset_io import Dataset
from .errors import DataError

__all__ = [
    "STATISTIC_MODES",
    "NeighborConfig",
    "NominalScoreTable",
    "k_for_n",
    "knn_statistic",
    "knn_statistics",
    "loo_statistics",
    "pk_scores",
    "score_pk",
    "score_peps",
    "nominal_scores",
    "resampled_nominal_scores",
]

STATISTIC_MODES = ("kth_distance", "mean_first_k", "eps_count")

# rows per distance block; keeps a block around 32 MB for 1000-point references
_BLOCK_ELEMS = 4_000_000


@dataclass(frozen=True)
class NeighborConfig:
    k: int = 20
    statistic_mode: str = "mean_first_k"
    eps: float | None = None

    def __post_init__(self):
        if self.statistic_mode not in STATISTIC_MODES:
            raise DataError(
                f"unknown statistic mode {self.statistic_mode!r}; pick one of {STATISTIC_MODES}"
            )
        if self.statistic_mode == "eps_count":
            if self.eps is None or not self.eps > 0:
                raise DataError("eps_count mode needs eps > 0")
        elif int(self.k) != self.k or self.k < 1:
            raise DataError(f"k must be a positive integer, got {self.k}")

    @property
    def larger_is_denser(self) -> bool:
        return self.statistic_mode == "eps_count"


@dataclass(frozen=True)
class NominalScoreTable:
    """Per-training-point statistic and estimated p-value.

    ``rounds == 0`` marks a plain leave-one-out table computed on the full
    sample; otherwise it is the number of split-half resampling rounds
    averaged into ``p_hat``.
    """

    r_values: np.ndarray
    p_hat: np.ndarray
    rounds: int

    def __post_init__(self):
        if self.r_values.shape != self.p_hat.shape:
            raise DataError("r_values and p_hat must have the same length")
        if np.any((self.p_hat < 0) | (self.p_hat > 1)):
            raise DataError("p_hat values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.p_hat)


def k_for_n(n: int) -> int:
    """Neighbour count ``ceil(n ** (2/5))`` used for consistency runs."""
    if n < 1:
        raise DataError("n must be positive")
    return math.ceil(n ** 0.4)


def _as_points(x, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if dim is None or arr.shape[0] == dim else arr.reshape(-1, 1)
    if dim is not None and arr.shape[1] != dim:
        raise DataError(f"dimension mismatch: expected {dim}, got {arr.shape[1]}")
    return arr


def _reduce(dist: np.ndarray, config: NeighborConfig) -> np.ndarray:
    if config.statistic_mode == "eps_count":
        return np.count_nonzero(dist <= config.eps, axis=1).astype(np.float64)
    k = config.k
    if config.statistic_mode == "kth_distance":
        return np.partition(dist, k - 1, axis=1)[:, k - 1]
    nearest = np.sort(np.partition(dist, k - 1, axis=1)[:, :k], axis=1)
    return nearest.mean(axis=1)


def knn_statistics(
    queries, reference, config: NeighborConfig, leave_one_out: bool = False
) -> np.ndarray:
    """Statistic of every query row against ``reference``.

    With ``leave_one_out`` the queries must be the reference rows themselves
    and query ``i`` ignores reference row ``i``.
    """
    ref = reference.points if isinstance(reference, Dataset) else _as_points(reference)
    q = queries.points if isinstance(queries, Dataset) else _as_points(queries, ref.shape[1])
    if q.shape[1] != ref.shape[1]:
        raise DataError(f"dimension mismatch: queries {q.shape[1]}-D, reference {ref.shape[1]}-D")
    if leave_one_out and q.shape[0] != ref.shape[0]:
        raise DataError("leave-one-out needs the queries to be the reference points")
    available = ref.shape[0] - (1 if leave_one_out else 0)
    if config.statistic_mode != "eps_count" and config.k > available:
        raise DataError(f"k={config.k} exceeds the {available} available reference points")

    out = np.empty(q.shape[0], dtype=np.float64)
    step = max(1, _BLOCK_ELEMS // max(1, ref.shape[0] * ref.shape[1]))
    for start in range(0, q.shape[0], step):
        stop = min(start + step, q.shape[0])
        diff = q[start:stop, None, :] - ref[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        if leave_one_out:
            rows = np.arange(stop - start)
            dist[rows, rows + start] = np.inf
        out[start:stop] = _reduce(dist, config)
    return out


def knn_statistic(query, reference, config: NeighborConfig) -> float:
    """Statistic of a single query against ``reference`` (nothing excluded)."""
    ref = reference.points if isinstance(reference, Dataset) else _as_points(reference)
    q = _as_points(query, ref.shape[1])
    if q.shape[0] != 1:
        raise DataError("knn_statistic takes a single query point")
    return float(knn_statistics(q, ref, config)[0])


def loo_statistics(S: Dataset, config: NeighborConfig) -> np.ndarray:
    """Leave-one-out statistic of each training point against the rest."""
    return knn_statistics(S.points, S.points, config, leave_one_out=True)


def _tail_fraction(eta_stats, ref_stats, larger_is_denser: bool) -> np.ndarray:
    """Fraction of reference statistics that look no denser than each query."""
    ordered = np.sort(ref_stats)
    n = len(ordered)
    if larger_is_denser:
        # count of N(x_i) <= N(eta)
        counts = np.searchsorted(ordered, eta_stats, side="right")
    else:
        # count of R(x_i) >= R(eta)
        counts = n - np.searchsorted(ordered, eta_stats, side="left")
    return counts / n


def pk_scores(etas, S: Dataset, config: NeighborConfig, reference_stats=None) -> np.ndarray:
    """Vectorised p-value estimate for many test points.

    ``reference_stats`` may carry precomputed leave-one-out statistics of
    ``S`` to avoid recomputing them across calls.
    """
    if config.statistic_mode != "eps_count" and S.n < config.k + 1:
        raise DataError(f"need at least k+1={config.k + 1} training points, have {S.n}")
    if reference_stats is None:
        reference_stats = loo_statistics(S, config)
    eta_stats = knn_statistics(_as_points(etas, S.dim), S.points, config)
    return _tail_fraction(eta_stats, reference_stats, config.larger_is_denser)


def score_pk(eta, S: Dataset, config: NeighborConfig) -> float:
    """Estimated p-value of one test point from K-NN statistics of ``S``."""
    q = _as_points(eta, S.dim)
    if q.shape[0] != 1:
        raise DataError("score_pk takes a single point; use pk_scores for batches")
    return float(pk_scores(q, S, config)[0])


def score_peps(eta, S: Dataset, eps: float) -> float:
    """Estimated p-value from eps-ball neighbour counts."""
    if not eps > 0:
        raise DataError(f"eps must be positive, got {eps}")
    return score_pk(eta, S, NeighborConfig(statistic_mode="eps_count", eps=eps))


def nominal_scores(S: Dataset, config: NeighborConfig) -> NominalScoreTable:
    """Leave-one-out table over the full sample, no resampling."""
    stats = loo_statistics(S, config)
    p_hat = _tail_fraction(stats, stats, config.larger_is_denser)
    return NominalScoreTable(r_values=stats, p_hat=p_hat, rounds=0)


def resampled_nominal_scores(
    S: Dataset, config: NeighborConfig, rounds: int = 20, seed=0
) -> NominalScoreTable:
    """Split-half resampled p-value estimates for the training points.

    Each round draws a random equipartition (the first half gets the extra
    point when ``n`` is odd).  Points of one half are measured against the
    other half and ranked among their own half; the roles are then
    swapped.  ``p_hat`` and ``r_values`` are averaged over rounds.
    """
    if rounds < 1:
        raise DataError("rounds must be at least 1")
    n = S.n
    if config.statistic_mode != "eps_count" and n < 2 * (config.k + 1):
        raise DataError(
            f"split-half resampling with k={config.k} needs at least {2 * (config.k + 1)} points, have {n}"
        )
    if n < 2:
        raise DataError("split-half resampling needs at least 2 points")
    rng = np.random.default_rng(seed)
    p_sum = np.zeros(n)
    r_sum = np.zeros(n)
    first = (n + 1) // 2
    X = S.points
    for _ in range(rounds):
        perm = rng.permutation(n)
        halves = (perm[:first], perm[first:])
        for own, other in (halves, halves[::-1]):
            stats = knn_statistics(X[own], X[other], config)
            r_sum[own] += stats
            p_sum[own] += _tail_fraction(stats, stats, config.larger_is_denser)
    return NominalScoreTable(r_values=r_sum / rounds, p_hat=p_sum / rounds, rounds=rounds)
