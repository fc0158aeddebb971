"""Quantised preference pairs and the kernel max-margin ranker.

The ranker is trained to grow with the neighbourhood statistic, so larger
decision values mean "more anomalous".  Preference pair ``(i, j)`` reads
"point i must score above point j", and the generator always puts the
point with the lower estimated p-value first.

The dual of the rank-SVM problem has one multiplier per pair, boxed in
``[0, C]``, with pair kernel

    Q(p, q) = k(x_i, x_k) - k(x_i, x_l) - k(x_j, x_k) + k(x_j, x_l)

for ``p = (i, j)`` and ``q = (k, l)``.  It is solved by coordinate ascent
with the exact single-variable step, keeping the decision values of all
training points up to date after every change.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dataset_io import Dataset
from .errors import DataError, DegenerateRankingError
from .knn_stats import NominalScoreTable

__all__ = [
    "DEFAULT_LEVELS",
    "DEFAULT_TOL",
    "DEFAULT_MAX_PASSES",
    "GRAM_CACHE_LIMIT",
    "PRUNE_THRESHOLD",
    "QuantizedRanks",
    "PreferencePairSet",
    "KernelConfig",
    "RankModel",
    "DualSolution",
    "NonConvergenceWarning",
    "quantize",
    "generate_pairs",
    "default_pair_cap",
    "rbf_kernel",
    "solve_rank_dual",
    "train_rank_svm",
    "decision_values",
    "decision_value",
]

DEFAULT_LEVELS = 3
DEFAULT_TOL = 1e-4
DEFAULT_MAX_PASSES = 1000
GRAM_CACHE_LIMIT = 4000
PRUNE_THRESHOLD = 1e-12
PAIRS_PER_POINT = 200


class NonConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class QuantizedRanks:
    levels: np.ndarray
    m: int

    def __len__(self) -> int:
        return len(self.levels)

    def subset(self, index) -> "QuantizedRanks":
        return QuantizedRanks(self.levels[index], self.m)


@dataclass(frozen=True)
class PreferencePairSet:
    """Rows ``(i, j)`` of point indices with ``i`` to be ranked above ``j``."""

    pairs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "pairs", arr)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def weight(self) -> float:
        return 1.0 / len(self.pairs)

    @property
    def first(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def second(self) -> np.ndarray:
        return self.pairs[:, 1]


@dataclass(frozen=True)
class KernelConfig:
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DataError(f"kernel bandwidth must be positive and finite, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class RankModel:
    """Trained ranker: support pairs with their dual coefficients.

    Evaluation collapses the pairs onto their distinct endpoints, so the
    cost per query is ``O(d * min(2s, n))``.
    """

    sigma: float
    C: float
    support_first: np.ndarray
    support_second: np.ndarray
    alpha: np.ndarray
    training_decision_values: np.ndarray
    converged: bool = True
    passes: int = 0
    max_residual: float = 0.0
    centers: np.ndarray = field(init=False, repr=False)
    beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        first = np.ascontiguousarray(self.support_first, dtype=np.float64)
        second = np.ascontiguousarray(self.support_second, dtype=np.float64)
        alpha = np.ascontiguousarray(self.alpha, dtype=np.float64)
        if first.ndim != 2 or first.shape != second.shape or len(alpha) != len(first):
            raise DataError("support-pair arrays have inconsistent shapes")
        endpoints = np.vstack([first, second])
        centers, inverse = np.unique(endpoints, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        s = len(alpha)
        beta = np.zeros(len(centers))
        np.add.at(beta, inverse[:s], alpha)
        np.subtract.at(beta, inverse[s:], alpha)
        tdv = np.asarray(self.training_decision_values, dtype=np.float64)
        for name, value in (
            ("support_first", first),
            ("support_second", second),
            ("alpha", alpha),
            ("training_decision_values", tdv),
            ("centers", np.ascontiguousarray(centers)),
            ("beta", beta),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dim(self) -> int:
        return self.support_first.shape[1]

    @property
    def n_support(self) -> int:
        return len(self.alpha)

    @property
    def kernel(self) -> KernelConfig:
        return KernelConfig(self.sigma)


@dataclass
class DualSolution:
    """Raw solver output over all (non-dropped) pairs, before pruning."""

    pairs: np.ndarray
    alpha: np.ndarray
    margins: np.ndarray
    max_residual: float
    passes: int
    converged: bool
    dual_objective: float
    primal_objective: float
    dropped: np.ndarray


# -- pairs --------------------------------------------------------------------


def quantize(table, m: int = DEFAULT_LEVELS) -> QuantizedRanks:
    """Bin p-value estimates uniformly on [0, 1] into levels ``1..m``.

    Level 1 holds the smallest p-values; the top bin is closed so a
    p-value of exactly 1 lands in level ``m``.
    """
    if m < 2:
        raise DataError(f"need at least 2 quantisation levels, got {m}")
    p = table.p_hat if isinstance(table, NominalScoreTable) else np.asarray(table, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise DataError("p-value estimates must lie in [0, 1]")
    levels = np.minimum(m, 1 + np.floor(p * m).astype(np.int64))
    return QuantizedRanks(levels=levels, m=m)


def default_pair_cap(n: int) -> int:
    return PAIRS_PER_POINT * n


def _largest_remainder(sizes: np.ndarray, cap: int) -> np.ndarray:
    exact = sizes * (cap / sizes.sum())
    quota = np.floor(exact).astype(np.int64)
    short = cap - quota.sum()
    if short:
        # stable sort keeps block order among equal remainders
        order = np.argsort(-(exact - quota), kind="stable")
        quota[order[:short]] += 1
    return np.minimum(quota, sizes)


def generate_pairs(ranks: QuantizedRanks, cap: int | None = None, seed=0) -> PreferencePairSet:
    """All pairs across distinct levels, lower level first.

    When the full set exceeds ``cap``, each (level a, level b) block keeps
    a share of ``cap`` proportional to its size (largest-remainder
    rounding) and samples that many pairs without replacement.
    """
    levels = np.asarray(ranks.levels)
    present = np.unique(levels)
    if len(present) < 2:
        raise DegenerateRankingError(
            "degenerate ranking: every point falls in a single quantisation level"
        )
    members = [np.flatnonzero(levels == lv) for lv in present]
    blocks = [(a, b) for a in range(len(present)) for b in range(a + 1, len(present))]
    sizes = np.array([len(members[a]) * len(members[b]) for a, b in blocks], dtype=np.int64)
    total = int(sizes.sum())

    if cap is None or total <= cap:
        quota = sizes
        rng = None
    else:
        if cap < 1:
            raise DataError("pair cap must be positive")
        quota = _largest_remainder(sizes, int(cap))
        rng = np.random.default_rng(seed)

    out = []
    for (a, b), size, q in zip(blocks, sizes, quota):
        lo, hi = members[a], members[b]
        if q == size:
            flat = np.arange(size)
        else:
            flat = np.sort(rng.choice(size, size=q, replace=False))
        out.append(np.column_stack([lo[flat // len(hi)], hi[flat % len(hi)]]))
    return PreferencePairSet(np.vstack(out))


# -- kernel -------------------------------------------------------------------


def rbf_kernel(x, y, sigma: float) -> float:
    """exp(-|x - y|^2 / sigma^2)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DataError(f"dimension mismatch: {x.shape} vs {y.shape}")
    KernelConfig(sigma)
    diff = x - y
    return math.exp(-float(diff @ diff) / (sigma * sigma))


# -- solver -------------------------------------------------------------------


def solve_rank_dual(
    X,
    pairs: PreferencePairSet,
    C: float,
    sigma: float,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    seed=0,
    gram: np.ndarray | None = None,
    warm_alpha: np.ndarray | None = None,
) -> DualSolution:
    """Coordinate ascent on the rank-SVM dual.

    Each pass visits the pairs in a fresh seeded random order and applies
    ``alpha_p <- clip(alpha_p + (1 - margin_p) / Q(p, p), 0, C)``.  The run
    stops once every KKT residual, recomputed from scratch, is at most
    ``tol``.  Pairs joining identical points have ``Q(p, p) = 0`` and are
    dropped with a warning.

    ``gram`` may supply a precomputed kernel matrix over ``X``;
    ``warm_alpha`` a feasible starting point.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if not C > 0:
        raise DataError(f"C must be positive, got {C}")
    if not tol > 0:
        raise DataError(f"tol must be positive, got {tol}")
    KernelConfig(sigma)
    P = np.asarray(pairs.pairs if isinstance(pairs, PreferencePairSet) else pairs, dtype=np.int64)
    if len(P) == 0:
        raise DataError("cannot train on an empty pair set")
    n = X.shape[0]
    if P.min() < 0 or P.max() >= n:
        raise DataError("pair indices out of range for the training set")

    use_gram = gram is not None or n <= GRAM_CACHE_LIMIT
    K = None
    if use_gram:
        K = gram if gram is not None else _kernels.gram_matrix(X, sigma)
        k_ij = K[P[:, 0], P[:, 1]]
    else:
        diff = X[P[:, 0]] - X[P[:, 1]]
        k_ij = np.exp(-np.einsum("ij,ij->i", diff, diff) / (sigma * sigma))
    qdiag = 2.0 - 2.0 * k_ij

    bad = qdiag <= 0.0
    if bad.any():
        warnings.warn(
            f"dropping {int(bad.sum())} pair(s) whose endpoints coincide", RuntimeWarning, stacklevel=2
        )
    keep = ~bad
    dropped = P[bad]
    P = P[keep]
    qdiag = qdiag[keep]
    if len(P) == 0:
        raise DegenerateRankingError("every preference pair joins identical points")
    I = np.ascontiguousarray(P[:, 0])
    J = np.ascontiguousarray(P[:, 1])

    if warm_alpha is not None:
        alpha = np.clip(np.asarray(warm_alpha, dtype=np.float64)[keep], 0.0, C)
    else:
        alpha = np.zeros(len(P))

    def exact_g():
        beta = _kernels.point_coefficients(I, J, alpha, n)
        if use_gram:
            return beta, K @ beta
        return beta, _kernels.rbf_expansion(X, beta, sigma, X)

    beta, g = exact_g()
    rng = np.random.default_rng(seed)
    residual = _kernels.max_residual(I, J, alpha, g, C)
    passes = 0
    while residual > tol and passes < max_passes:
        order = rng.permutation(len(P))
        if use_gram:
            sweep = _kernels.cd_pass_gram(K, I, J, alpha, g, C, qdiag, order)
        else:
            sweep = _kernels.cd_pass_stream(X, sigma, I, J, alpha, g, C, qdiag, order)
        passes += 1
        if sweep <= tol or passes == max_passes:
            beta, g = exact_g()
            residual = _kernels.max_residual(I, J, alpha, g, C)
        else:
            residual = sweep

    beta, g = exact_g()
    residual = float(_kernels.max_residual(I, J, alpha, g, C))
    converged = residual <= tol
    if not converged:
        warnings.warn(
            f"rank-SVM dual did not converge in {max_passes} passes; worst KKT residual {residual:.3g}",
            NonConvergenceWarning,
            stacklevel=2,
        )
    margins = g[I] - g[J]
    quad = float(beta @ g)
    dual = float(alpha.sum()) - 0.5 * quad
    primal = 0.5 * quad + C * float(np.maximum(0.0, 1.0 - margins).sum())
    return DualSolution(
        pairs=P,
        alpha=alpha,
        margins=margins,
        max_residual=residual,
        passes=passes,
        converged=converged,
        dual_objective=dual,
        primal_objective=primal,
        dropped=dropped,
    )


def model_from_solution(X, sol: DualSolution, C: float, sigma: float) -> RankModel:
    """Prune zero multipliers and build the evaluable model."""
    X = np.asarray(X, dtype=np.float64)
    support = sol.alpha > PRUNE_THRESHOLD
    if not support.any():
        raise DegenerateRankingError("training produced no support pairs")
    P = sol.pairs[support]
    model = RankModel(
        sigma=sigma,
        C=C,
        support_first=X[P[:, 0]],
        support_second=X[P[:, 1]],
        alpha=sol.alpha[support],
        training_decision_values=np.zeros(0),
        converged=sol.converged,
        passes=sol.passes,
        max_residual=sol.max_residual,
    )
    g = np.sort(decision_values(model, X))
    g.setflags(write=False)
    object.__setattr__(model, "training_decision_values", g)
    return model


def train_rank_svm(
    S: Dataset,
    pairs: PreferencePairSet,
    C: float,
    kernel: KernelConfig,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    seed=0,
) -> RankModel:
    """Fit the kernel ranker on ``S`` under the given preference pairs.

    A run that exhausts ``max_passes`` emits :class:`NonConvergenceWarning`
    and returns a model with ``converged=False``.
    """
    sol = solve_rank_dual(S.points, pairs, C, kernel.sigma, tol=tol, max_passes=max_passes, seed=seed)
    return model_from_solution(S.points, sol, C, kernel.sigma)


def decision_values(model: RankModel, X) -> np.ndarray:
    """Ranker output for each row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.dim:
        raise DataError(f"dimension mismatch: model is {model.dim}-D, input is {X.shape[1]}-D")
    return _kernels.rbf_expansion(model.centers, model.beta, model.sigma, np.ascontiguousarray(X))


def decision_value(model: RankModel, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(decision_values(model, x)[0])
