"""Experiment protocols shared by ``scripts/`` and the acceptance suite.

Each function runs one self-contained, seeded experiment and returns plain
numbers, so callers decide how to print or assert on them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .dataset_io import ANOMALOUS, NOMINAL, Dataset
from .detector import fit_detector, scores, threshold_for_alpha
from .knn_stats import NeighborConfig, k_for_n, pk_scores
from .pipeline import RankADConfig, TrainInfo, fit_rankad
from .rank_trainer import RankModel, decision_values
from .synth_eval import (
    ANOMALY_BOX,
    GaussianMixtureSpec,
    auc,
    bayes_auc,
    empirical_false_alarm,
    labelled_test_set,
    named_density,
    sample_mixture,
    true_pvalues,
)

STANDARD_GAUSSIAN_2D = GaussianMixtureSpec([1.0], [[0.0, 0.0]], [np.eye(2)])


@dataclass
class AucRun:
    seed: int
    auc: float
    bayes_auc: float
    C: float
    sigma: float
    converged: bool
    seconds: float


def _seeds(seed, count):
    # plain ints so every sampler accepts them
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(count)]


def synthetic_auc_run(
    seed: int,
    config: RankADConfig | None = None,
    density: str = "toy-sec72",
    n_train: int = 600,
    n_nominal: int = 500,
    n_anomalous: int = 1000,
) -> AucRun:
    """Train on ``n_train`` mixture draws and score a labelled test set.

    Anomalies are uniform on the 36 x 36 box around the origin.  ``config``
    defaults to the stock pipeline (k = 20, m = 3, cross-validated C and
    sigma).
    """
    config = config or RankADConfig()
    spec = named_density(density)
    train_seed, test_seed = _seeds(seed, 2)
    start = time.perf_counter()
    S = sample_mixture(spec, n_train, seed=train_seed)
    detector, info = fit_rankad(S, replace(config, seed=seed))
    test = labelled_test_set(spec, ANOMALY_BOX, n_nominal, n_anomalous, seed=test_seed)
    s = scores(detector, test.points)
    value = auc(s[test.labels == NOMINAL], s[test.labels == ANOMALOUS])
    logf = spec.logpdf(test.points)
    bayes = auc(logf[test.labels == NOMINAL], logf[test.labels == ANOMALOUS])
    return AucRun(seed, value, bayes, info.C, info.sigma, info.converged, time.perf_counter() - start)


def parameter_grid_aucs(
    seed: int,
    C: float,
    sigma: float,
    ks=(5, 10, 20, 40),
    ms=(3, 5, 7, 10),
    density: str = "toy-sec72",
    **config,
) -> dict:
    """AUC for every (k, m) at fixed (C, sigma) on one train/test draw."""
    out = {}
    for k in ks:
        for m in ms:
            run = synthetic_auc_run(seed, RankADConfig(k=k, m=m, C=C, sigma=sigma, **config), density=density)
            out[(k, m)] = run.auc
    return out


def bayes_auc_estimate(density: str = "toy-sec72", n_nominal: int = 10**5, n_anomalous: int = 2 * 10**5, seed=0) -> float:
    """Bayes-optimal AUC on a large draw (standard error about 6e-4)."""
    return bayes_auc(named_density(density), ANOMALY_BOX, n_nominal, n_anomalous, seed=seed)


def consistency_errors(
    sizes=(200, 800, 3200),
    n_test: int = 200,
    mc_samples: int = 10**6,
    repeats: int = 1,
    seed: int = 0,
    spec: GaussianMixtureSpec = STANDARD_GAUSSIAN_2D,
    statistic_mode: str = "mean_first_k",
) -> dict:
    """Mean absolute error of the K-NN p-value estimate against the truth.

    Uses ``K = ceil(n**0.4)`` at each training size.  Test points are
    nominal draws; the reference p-values come from one Monte-Carlo sample
    shared across sizes.
    """
    seq = _seeds(seed, 2 + repeats * len(sizes))
    etas = sample_mixture(spec, n_test, seed=seq[0]).points
    truth = true_pvalues(spec, etas, mc_samples=mc_samples, seed=seq[1])
    out = {}
    for i, n in enumerate(sizes):
        errs = []
        for r in range(repeats):
            S = sample_mixture(spec, n, seed=seq[2 + i * repeats + r])
            est = pk_scores(etas, S, NeighborConfig(k=k_for_n(n), statistic_mode=statistic_mode))
            errs.append(float(np.mean(np.abs(est - truth))))
        out[n] = float(np.mean(errs))
    return out


@dataclass
class CalibrationRun:
    ks_statistic: float
    ks_pvalue: float
    false_alarm: dict
    region_false_alarm: float
    gamma: float
    info: TrainInfo


def calibration_run(
    seed: int,
    config: RankADConfig,
    density: str = "toy-sec72",
    n_train: int = 2000,
    n_test: int = 10**4,
    alphas=(0.05, 0.1, 0.2),
    region_alpha: float = 0.05,
    gamma_fraction: float = 0.01,
) -> CalibrationRun:
    """Score held-out nominal draws with a detector trained on ``n_train``.

    Reports the KS distance of the scores from U[0, 1], the flagged
    fraction at each ``alpha`` and the flagged fraction of the inflated
    order-statistic region at ``region_alpha`` with
    ``gamma = gamma_fraction * range(sorted_g)``.
    """
    from scipy import stats

    spec = named_density(density)
    train_seed, test_seed = _seeds(seed, 2)
    S = sample_mixture(spec, n_train, seed=train_seed)
    detector, info = fit_rankad(S, replace(config, seed=seed))
    test = sample_mixture(spec, n_test, seed=test_seed)
    g = decision_values(detector.model, test.points)
    s = scores(detector, test.points, g=g)
    ks = stats.kstest(s, "uniform")
    rates = empirical_false_alarm(detector, test, alphas)
    gamma = gamma_fraction * float(np.ptp(detector.sorted_g))
    t = threshold_for_alpha(detector, region_alpha, gamma=gamma)
    region_rate = float(np.mean(g >= t))
    return CalibrationRun(float(ks.statistic), float(ks.pvalue), rates, region_rate, gamma, info)


def random_model(n_support: int, dim: int = 2, seed=0, n_reference: int = 100):
    """A random detector for timing: ``n_support`` pairs over distinct points."""
    rng = np.random.default_rng(seed)
    first = rng.standard_normal((n_support, dim))
    second = rng.standard_normal((n_support, dim))
    model = RankModel(
        sigma=1.0,
        C=1.0,
        support_first=first,
        support_second=second,
        alpha=rng.uniform(0.1, 1.0, n_support),
        training_decision_values=np.zeros(1),
    )
    ref = Dataset(rng.standard_normal((n_reference, dim)))
    return fit_detector(model, ref)


def scoring_time(detector, n_points: int = 300, repeats: int = 3, seed=0) -> float:
    """Best-of-``repeats`` mean seconds per single-point score call."""
    from .synth_eval import time_scoring

    X = np.random.default_rng(seed).standard_normal((n_points, detector.model.dim))
    time_scoring(detector, X[:5])  # warm the compiled kernels
    return min(time_scoring(detector, X) for _ in range(repeats))
