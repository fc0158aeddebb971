"""Calibrated anomaly detector on top of a trained ranker.

The score of a test point is the fraction of training points whose
decision value is strictly larger than its own.  Under the nominal law it
behaves like a p-value, so flagging ``score <= alpha`` controls the false
alarm rate at ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset_io import Dataset
from .errors import DataError
from .rank_trainer import RankModel, decision_values

__all__ = [
    "Detector",
    "DetectionResult",
    "fit_detector",
    "score",
    "scores",
    "classify",
    "threshold_for_alpha",
]


@dataclass(frozen=True, eq=False)
class Detector:
    model: RankModel
    sorted_g: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.array(self.sorted_g, dtype=np.float64)
        if g.ndim != 1 or len(g) == 0:
            raise DataError("a detector needs at least one reference decision value")
        if np.any(np.diff(g) < 0):
            raise DataError("reference decision values must be sorted ascending")
        g.setflags(write=False)
        object.__setattr__(self, "sorted_g", g)

    @property
    def n(self) -> int:
        return len(self.sorted_g)


@dataclass(frozen=True)
class DetectionResult:
    g_value: float
    score: float
    alpha: float
    anomalous: bool

    @property
    def verdict(self) -> str:
        return "anomalous" if self.anomalous else "nominal"


def fit_detector(model: RankModel, S: Dataset) -> Detector:
    """Evaluate the ranker on the reference set and sort the values."""
    if S is None or S.n == 0:
        raise DataError("cannot fit a detector on an empty reference set")
    g = np.sort(decision_values(model, S.points))
    return Detector(model=model, sorted_g=g)


def scores(detector: Detector, X, g: np.ndarray | None = None) -> np.ndarray:
    """Scores for every row of ``X`` (``g`` may pass precomputed decision values)."""
    if g is None:
        g = decision_values(detector.model, X)
    n = detector.n
    above = n - np.searchsorted(detector.sorted_g, g, side="right")
    return above / n


def score(detector: Detector, eta) -> float:
    """Fraction of reference decision values strictly above that of ``eta``."""
    g = decision_values(detector.model, np.asarray(eta, dtype=np.float64).reshape(1, -1))
    return float(scores(detector, None, g=g)[0])


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must lie strictly between 0 and 1, got {alpha}")


def classify(detector: Detector, eta, alpha: float) -> DetectionResult:
    """Flag ``eta`` as anomalous when its score is at most ``alpha``."""
    _check_alpha(alpha)
    g = decision_values(detector.model, np.asarray(eta, dtype=np.float64).reshape(1, -1))
    s = float(scores(detector, None, g=g)[0])
    return DetectionResult(g_value=float(g[0]), score=s, alpha=alpha, anomalous=s <= alpha)


def threshold_for_alpha(detector: Detector, alpha: float, gamma: float = 0.0) -> float:
    """Order-statistic threshold ``g^(floor(n - alpha*n + 1)) + 2*gamma``.

    Points with decision value at or above the returned threshold fall in
    the anomaly region.  With ``gamma = 0`` this matches :func:`classify`
    except when the threshold value itself is tied among the reference
    values, where the strict comparison inside the score can differ.
    """
    _check_alpha(alpha)
    if gamma < 0:
        raise DataError(f"gamma must be non-negative, got {gamma}")
    n = detector.n
    # guard against alpha * n landing just below an integer
    index = min(n, math.floor(n - alpha * n + 1 + 1e-9))
    if not 1 <= index <= n:
        raise DataError(f"alpha={alpha} puts the order-statistic index {index} outside [1, {n}]")
    return float(detector.sorted_g[index - 1]) + 2.0 * gamma
