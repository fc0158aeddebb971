import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rankad.dataset_io import Dataset
from rankad.detector import Detector
from rankad.errors import DataError
from rankad.synth_eval import (
    ANOMALY_BOX,
    BoxSpec,
    GaussianMixtureSpec,
    MetricReport,
    auc,
    bayes_auc,
    empirical_false_alarm,
    labelled_test_set,
    named_density,
    sample_mixture,
    sample_uniform_box,
    time_scoring,
    true_pvalue,
    true_pvalues,
    uniformity_ks,
)

STD_NORMAL_1D = GaussianMixtureSpec([1.0], [[0.0]], [[[1.0]]])
STD_NORMAL_2D = GaussianMixtureSpec([1.0], [[0.0, 0.0]], [np.eye(2)])


def pairwise_auc(sn, sa):
    total = sum((a < b) + 0.5 * (a == b) for a in sa for b in sn)
    return total / (len(sa) * len(sn))


class TestSamplers:
    def test_mixture_means(self):
        for name in ("toy-sec72", "toy-sec72-cov"):
            x = sample_mixture(named_density(name), 10**5, seed=0).points
            np.testing.assert_allclose(x.mean(axis=0), [-3.0, 0.0], atol=0.1)

    def test_single_draw_is_mean_plus_lz(self):
        spec = GaussianMixtureSpec([1.0], [[1.0, -2.0]], [np.diag([4.0, 9.0])])
        x = sample_mixture(spec, 1, seed=5).points[0]
        rng = np.random.default_rng(5)
        rng.choice(1, size=1, p=[1.0])
        z = rng.standard_normal((1, 2))[0]
        np.testing.assert_allclose(x, [1.0 + 2 * z[0], -2.0 + 3 * z[1]], rtol=1e-15)

    def test_sole_component(self):
        spec = GaussianMixtureSpec([1.0], [[100.0]], [[[1e-4]]])
        assert np.all(np.abs(sample_mixture(spec, 200, seed=0).points - 100) < 0.1)

    def test_mixture_validation(self):
        with pytest.raises(DataError):
            GaussianMixtureSpec([0.5, 0.4], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
        with pytest.raises(DataError, match="positive definite"):
            GaussianMixtureSpec([1.0], [[0.0, 0.0]], [np.diag([1.0, -1.0])])

    def test_box(self):
        x = sample_uniform_box(ANOMALY_BOX, 10**5, seed=1).points
        assert np.all((x >= -18) & (x <= 18))
        np.testing.assert_allclose(x.mean(axis=0), [0.0, 0.0], atol=0.2)
        unit = BoxSpec(((0, 1), (0, 1)))
        assert sample_uniform_box(unit, 1, seed=3).points.tobytes() == sample_uniform_box(unit, 1, seed=3).points.tobytes()
        with pytest.raises(DataError):
            BoxSpec(((1, 1),))

    def test_labelled_set(self):
        d = labelled_test_set(named_density("toy-fig1"), ANOMALY_BOX, 5, 7, seed=0)
        np.testing.assert_array_equal(d.labels, [0] * 5 + [1] * 7)

    def test_unknown_density(self):
        with pytest.raises(DataError, match="unknown density"):
            named_density("nope")

    def test_logpdf_matches_scipy(self):
        spec = named_density("toy-sec72")
        pts = np.array([[0.0, 0.0], [18.0, 18.0], [5.0, 1.0]])
        want = np.log(sum(
            w * stats.multivariate_normal(m, c).pdf(pts)
            for w, m, c in zip(spec.weights, spec.means, spec.covariances)
        ))
        np.testing.assert_allclose(spec.logpdf(pts), want, rtol=1e-12)


class TestTruePvalue:
    def test_mode(self):
        assert true_pvalue(STD_NORMAL_2D, [0.0, 0.0], 10**4) == 1.0
        assert true_pvalue(STD_NORMAL_1D, [0.0], 10**4) == 1.0

    def test_two_sided_tail(self):
        assert abs(true_pvalue(STD_NORMAL_1D, [1.959964], 10**5, seed=1) - 0.05) <= 3 * 0.5 / np.sqrt(1e5)

    def test_chi2_closed_form(self):
        # for a 2-D standard normal p(eta) = exp(-|eta|^2 / 2)
        etas = np.random.default_rng(0).standard_normal((50, 2))
        got = true_pvalues(STD_NORMAL_2D, etas, 10**5, seed=2)
        np.testing.assert_allclose(got, np.exp(-(etas**2).sum(1) / 2), atol=0.006)

    def test_monotone_along_ray(self):
        radii = np.linspace(0, 3, 10)
        p = true_pvalues(STD_NORMAL_2D, np.c_[radii, 0 * radii], 10**4, seed=0)
        assert np.all(np.diff(p) <= 0)

    def test_too_few_samples(self):
        with pytest.raises(DataError):
            true_pvalue(STD_NORMAL_1D, [0.0], 100)


class TestAuc:
    def test_separated(self):
        assert auc([0.9, 0.8], [0.1, 0.0]) == 1.0

    def test_all_ties(self):
        assert auc([0.3, 0.3, 0.3], [0.3, 0.3]) == 0.5

    def test_matches_pairwise(self):
        rng = np.random.default_rng(0)
        sn = rng.integers(0, 20, 50) / 20
        sa = rng.integers(0, 20, 50) / 20
        assert auc(sn, sa) == pytest.approx(pairwise_auc(sn, sa), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.lists(st.floats(0, 1), min_size=1, max_size=20))
    def test_antisymmetric(self, a, b):
        if set(a) & set(b):
            return
        assert auc(a, b) + auc(b, a) == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(DataError):
            auc([], [0.1])


class TestBayesAuc:
    def test_two_component_mixture(self):
        # large draw keeps MC error well under the band
        assert bayes_auc(named_density("toy-sec72"), ANOMALY_BOX, 10**5, 2 * 10**5, seed=0) == pytest.approx(0.929, abs=0.01)

    def test_disjoint(self):
        spec = GaussianMixtureSpec([1.0], [[0.0, 0.0]], [0.01 * np.eye(2)])
        far = BoxSpec(((50, 60), (50, 60)))
        assert bayes_auc(spec, far, 200, 200, seed=0) == 1.0

    def test_exchangeable(self):
        # both classes drawn from the nominal law: density cannot separate them
        spec = GaussianMixtureSpec([1.0], [[0.0, 0.0]], [1e-4 * np.eye(2)])
        same = sample_mixture(spec, 4000, seed=9).points
        s = spec.logpdf(same)
        assert auc(s[:2000], s[2000:]) == pytest.approx(0.5, abs=0.03)


def grid_detector(n):
    from test_detector import toy_model

    return Detector(model=toy_model(), sorted_g=np.arange(n, dtype=float))


class TestFalseAlarm:
    def test_uniform_scores(self):
        # g(x) on the line ranges over (-1, 1); spread the reference over it
        from test_detector import toy_model

        model = toy_model()
        ref = np.sort(np.linspace(-0.6, 0.6, 200))
        det = Detector(model=model, sorted_g=ref)
        xs = np.random.default_rng(0).uniform(-0.3, 1.3, (20000, 1))
        from rankad.rank_trainer import decision_values

        g = decision_values(model, xs)
        inside = (g > -0.6) & (g < 0.6)
        rates = empirical_false_alarm(det, Dataset(xs[inside]), [0.1, 0.5, 0.9])
        assert list(rates) == [0.1, 0.5, 0.9]
        assert rates[0.1] <= rates[0.5] <= rates[0.9]

    def test_all_scores_one(self):
        det = grid_detector(10)
        # g(x) is a hair below 0 out at x = 5, so every reference value is above it
        rates = empirical_false_alarm(det, Dataset([[5.0], [6.0]]), [0.05, 0.5, 0.99])
        assert set(rates.values()) == {0.0}

    def test_calibrated_half(self, small_detector):
        from rankad.detector import fit_detector

        _, trained = small_detector
        # reference values from an independent draw make the score exactly conformal
        det = fit_detector(trained.model, Dataset(np.random.default_rng(76).standard_normal((500, 2))))
        test = Dataset(np.random.default_rng(77).standard_normal((4000, 2)))
        rate = empirical_false_alarm(det, test, [0.5])[0.5]
        assert abs(rate - 0.5) <= 0.05

    def test_errors(self, small_detector):
        with pytest.raises(DataError):
            empirical_false_alarm(small_detector[1], Dataset([[0.0, 0.0]]), [1.0])


class TestKs:
    def test_grid(self):
        N = 999
        assert uniformity_ks(np.arange(1, N + 1) / (N + 1)) == pytest.approx(1 / (N + 1), abs=1e-12)

    def test_point_mass(self):
        assert uniformity_ks([0.5] * 10) == 0.5

    def test_uniform_draws(self):
        assert uniformity_ks(np.random.default_rng(0).uniform(size=10**4)) < 0.02

    def test_range(self):
        with pytest.raises(DataError):
            uniformity_ks([0.5, 1.2])


def test_time_scoring_positive(small_detector):
    _, det = small_detector
    assert time_scoring(det, np.zeros((5, 2))) > 0


def test_metric_report_round_trip():
    rep = MetricReport(0.91234, {0.05: 0.048, 0.1: 0.1003}, 0.0123, 1.5e-5, extra={"n": 600.0, "density": "toy-sec72"})
    back = MetricReport.from_text(rep.to_text())
    assert back == rep
    assert "false_alarm@0.05=0.048" in rep.to_text()
    with pytest.raises(DataError):
        MetricReport(1.2, {}, 0.0, 0.0)
