import warnings

import numpy as np
import pytest

from rankad.dataset_io import Dataset
from rankad.detector import fit_detector
from rankad.rank_trainer import KernelConfig, generate_pairs, quantize, train_rank_svm
from rankad.knn_stats import NeighborConfig, resampled_nominal_scores


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_detector():
    """A quickly trained 2-D detector on 80 Gaussian points."""
    rng = np.random.default_rng(7)
    S = Dataset(rng.standard_normal((80, 2)))
    table = resampled_nominal_scores(S, NeighborConfig(k=5), rounds=3, seed=1)
    pairs = generate_pairs(quantize(table, 3), cap=2000, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train_rank_svm(S, pairs, C=1.0, kernel=KernelConfig(1.5), max_passes=200, seed=1)
    return S, fit_detector(model, S)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
