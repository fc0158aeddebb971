"""Ranking-based anomaly detection from K-NN p-value estimates."""

from .dataset_io import Dataset, load_csv, load_model, save_model, write_csv
from .detector import Detector, classify, fit_detector, score, scores, threshold_for_alpha
from .errors import DataError, DegenerateRankingError, RankADError
from .knn_stats import NeighborConfig, resampled_nominal_scores, score_pk
from .rank_trainer import (
    KernelConfig,
    RankModel,
    decision_value,
    generate_pairs,
    quantize,
    train_rank_svm,
)

__version__ = "0.1.0"
