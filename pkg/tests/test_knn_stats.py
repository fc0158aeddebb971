import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rankad.dataset_io import Dataset
from rankad.errors import DataError
from rankad.knn_stats import (
    NeighborConfig,
    k_for_n,
    knn_statistic,
    nominal_scores,
    pk_scores,
    resampled_nominal_scores,
    score_peps,
    score_pk,
)

KTH1 = NeighborConfig(k=1, statistic_mode="kth_distance")


def brute_statistic(q, ref, k, mode):
    dists = sorted(float(np.linalg.norm(np.asarray(q) - np.asarray(r))) for r in ref)
    if mode == "kth_distance":
        return dists[k - 1]
    return sum(dists[:k]) / k


def brute_pk(eta, pts, k, mode):
    n = len(pts)
    r_eta = brute_statistic(eta, pts, k, mode)
    count = 0
    for i in range(n):
        rest = [pts[j] for j in range(n) if j != i]
        if r_eta <= brute_statistic(pts[i], rest, k, mode):
            count += 1
    return count / n


def brute_peps(eta, pts, eps):
    def ball(q, ref):
        return sum(np.linalg.norm(np.asarray(q) - np.asarray(r)) <= eps for r in ref)

    n = len(pts)
    n_eta = ball(eta, pts)
    loo = [ball(pts[i], [pts[j] for j in range(n) if j != i]) for i in range(n)]
    return sum(n_eta >= c for c in loo) / n


class TestKnnStatistic:
    def test_line_kth(self):
        assert knn_statistic([0.0], [[1.0], [3.0]], KTH1) == 1.0

    def test_line_mean(self):
        assert knn_statistic([0.0], [[1.0], [3.0]], NeighborConfig(k=2)) == 2.0

    def test_eps_count_is_closed_ball(self):
        cfg = NeighborConfig(statistic_mode="eps_count", eps=1.0)
        assert knn_statistic([0.0], [[1.0], [1.5], [-0.5]], cfg) == 2.0

    @pytest.mark.parametrize("mode", ["kth_distance", "mean_first_k"])
    def test_matches_full_sort(self, rng, mode):
        ref = rng.standard_normal((50, 2))
        got = knn_statistic([0.0, 0.0], ref, NeighborConfig(k=7, statistic_mode=mode))
        assert got == pytest.approx(brute_statistic([0, 0], ref, 7, mode), rel=1e-12)

    def test_k_too_large(self):
        with pytest.raises(DataError):
            knn_statistic([0.0], [[1.0], [3.0]], NeighborConfig(k=3))

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            knn_statistic([0.0, 1.0, 2.0], np.zeros((5, 2)), KTH1)

    def test_bad_config(self):
        with pytest.raises(DataError):
            NeighborConfig(k=0)
        with pytest.raises(DataError):
            NeighborConfig(statistic_mode="eps_count", eps=0.0)
        with pytest.raises(DataError):
            NeighborConfig(statistic_mode="median")


class TestScorePk:
    S = Dataset([[0.0], [1.0], [3.0]])

    def test_inside(self):
        assert score_pk([0.5], self.S, KTH1) == 1.0

    def test_tail(self):
        assert score_pk([10.0], self.S, KTH1) == 0.0

    def test_gaussian_mode_is_typical(self):
        # a single 200-point draw is too noisy for a tight bound at k=5
        # (400-draw Monte Carlo: mean 0.818, 5% quantile 0.545), so check
        # the mean over 40 draws instead
        cfg = NeighborConfig(k=5, statistic_mode="kth_distance")
        vals = [
            score_pk([0.0, 0.0], Dataset(np.random.default_rng(s).standard_normal((200, 2))), cfg)
            for s in range(40)
        ]
        assert np.mean(vals) >= 0.75
        assert min(vals) >= 0.3

    @pytest.mark.parametrize("mode", ["kth_distance", "mean_first_k"])
    def test_matches_brute_force(self, rng, mode):
        pts = rng.standard_normal((30, 2))
        S = Dataset(pts)
        etas = rng.standard_normal((10, 2)) * 1.5
        cfg = NeighborConfig(k=4, statistic_mode=mode)
        got = pk_scores(etas, S, cfg)
        want = [brute_pk(e, list(pts), 4, mode) for e in etas]
        np.testing.assert_array_equal(got, want)

    def test_values_on_grid(self, rng):
        S = Dataset(rng.standard_normal((40, 3)))
        s = pk_scores(rng.standard_normal((25, 3)) * 2, S, NeighborConfig(k=3))
        np.testing.assert_allclose(s * 40, np.round(s * 40), atol=1e-9)

    def test_too_few_points(self):
        with pytest.raises(DataError):
            score_pk([0.0], Dataset([[0.0], [1.0]]), NeighborConfig(k=2))


class TestScorePeps:
    S = Dataset([[0.0], [0.1], [5.0]])

    def test_dense_point(self):
        assert score_peps([0.05], self.S, 0.5) == 1.0

    def test_isolated_point_ties(self):
        assert score_peps([10.0], self.S, 0.5) == pytest.approx(1 / 3)

    def test_matches_double_loop(self, rng):
        pts = rng.uniform(-1, 1, (100, 2))
        S = Dataset(pts)
        for eta in rng.uniform(-1.2, 1.2, (5, 2)):
            assert score_peps(eta, S, 0.3) == pytest.approx(brute_peps(eta, list(pts), 0.3))

    def test_bad_eps(self):
        with pytest.raises(DataError):
            score_peps([0.0], self.S, 0.0)


class TestNominalTables:
    def test_loo_table_grid_and_monotone(self, rng):
        S = Dataset(rng.standard_normal((60, 2)))
        t = nominal_scores(S, NeighborConfig(k=5, statistic_mode="kth_distance"))
        assert t.rounds == 0
        np.testing.assert_allclose(t.p_hat * 60, np.round(t.p_hat * 60), atol=1e-9)
        order = np.argsort(t.r_values)
        assert np.all(np.diff(t.p_hat[order]) <= 0)

    def test_resampled_deterministic(self, rng):
        S = Dataset(rng.standard_normal((40, 2)))
        cfg = NeighborConfig(k=5)
        a = resampled_nominal_scores(S, cfg, rounds=1, seed=3)
        b = resampled_nominal_scores(S, cfg, rounds=1, seed=3)
        assert a.p_hat.tobytes() == b.p_hat.tobytes()
        assert a.r_values.tobytes() == b.r_values.tobytes()

    def test_resampled_odd_size(self, rng):
        S = Dataset(rng.standard_normal((41, 2)))
        t = resampled_nominal_scores(S, NeighborConfig(k=5), rounds=2, seed=0)
        assert len(t) == 41
        assert np.all((t.p_hat > 0) & (t.p_hat <= 1))

    def test_resampled_split_oracle(self, rng):
        # one round, recomputed by hand from the same permutation
        S = Dataset(rng.standard_normal((30, 2)))
        cfg = NeighborConfig(k=3, statistic_mode="kth_distance")
        t = resampled_nominal_scores(S, cfg, rounds=1, seed=9)
        perm = np.random.default_rng(9).permutation(30)
        halves = (perm[:15], perm[15:])
        for own, other in (halves, halves[::-1]):
            ref = S.points[other]
            stats = [brute_statistic(S.points[i], ref, 3, "kth_distance") for i in own]
            for a, i in enumerate(own):
                want = sum(stats[a] <= s for s in stats) / len(own)
                assert t.p_hat[i] == pytest.approx(want)

    def test_resampled_near_uniform(self):
        S = Dataset(np.random.default_rng(0).standard_normal((500, 2)))
        t = resampled_nominal_scores(S, NeighborConfig(k=20), rounds=20, seed=1)
        assert np.all((t.p_hat >= 0) & (t.p_hat <= 1))
        assert 0.4 <= t.p_hat.mean() <= 0.6

    def test_resampled_errors(self, rng):
        S = Dataset(rng.standard_normal((10, 2)))
        with pytest.raises(DataError):
            resampled_nominal_scores(S, NeighborConfig(k=5), rounds=1)
        with pytest.raises(DataError):
            resampled_nominal_scores(Dataset(rng.standard_normal((40, 2))), NeighborConfig(k=5), rounds=0)


def test_k_for_n():
    assert k_for_n(200) == 9
    assert k_for_n(800) == 15
    assert k_for_n(3200) == 26
    assert k_for_n(1) == 1


coords = arrays(np.int64, st.tuples(st.integers(12, 25), st.just(2)), elements=st.integers(-20, 20))


@settings(max_examples=40, deadline=None)
@given(
    pts=coords,
    eta=arrays(np.int64, 2, elements=st.integers(-25, 25)),
    log_scale=st.integers(-3, 3),
    shift=arrays(np.int64, 2, elements=st.integers(-50, 50)),
    mode=st.sampled_from(["kth_distance", "mean_first_k"]),
)
def test_translation_and_scaling_invariance(pts, eta, log_scale, shift, mode):
    # integer coordinates and power-of-two scales keep every distance exact
    cfg = NeighborConfig(k=3, statistic_mode=mode)
    a = 2.0**log_scale
    S = Dataset(pts.astype(float))
    S2 = Dataset(a * pts + shift)
    assert score_pk(eta.astype(float), S, cfg) == score_pk(a * eta + shift, S2, cfg)
    np.testing.assert_array_equal(nominal_scores(S, cfg).p_hat, nominal_scores(S2, cfg).p_hat)
    np.testing.assert_array_equal(
        resampled_nominal_scores(S, cfg, rounds=2, seed=4).p_hat,
        resampled_nominal_scores(S2, cfg, rounds=2, seed=4).p_hat,
    )


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_monotone_in_statistic(seed):
    rng = np.random.default_rng(seed)
    S = Dataset(rng.standard_normal((25, 2)))
    cfg = NeighborConfig(k=4)
    etas = rng.standard_normal((6, 2)) * 2
    from rankad.knn_stats import knn_statistics

    r = knn_statistics(etas, S.points, cfg)
    p = pk_scores(etas, S, cfg)
    order = np.argsort(r, kind="stable")
    assert np.all(np.diff(p[order]) <= 0)
