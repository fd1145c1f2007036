import numpy as np
import pytest

from laat import metrics
from laat.exceptions import InvalidArgumentError, SchemaError
from laat.geometry import PointCloud
from laat.metrics import (
    average_hausdorff, calibrate_threshold, convergence_curve, evaluate_threshold, hausdorff,
    precision_recall_at_count, precision_recall_curve, sample_subcube, threshold_sweep,
)


def _brute_directed(X, Y):
    d = np.sqrt(((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=2))
    return d.min(axis=1)


@pytest.fixture
def labeled_cloud(rng):
    """60 scattered points, the first 20 of them labeled manifold"""
    points = rng.random((60, 3))
    labels = np.r_[np.ones(20, dtype=int), np.zeros(40, dtype=int)]
    return PointCloud(points=points, labels=labels)


class TestHausdorff:
    def test_hand_example(self):
        X = [[0.0, 0.0]]
        Y = [[1.0, 0.0], [3.0, 0.0]]
        assert hausdorff(X, Y) == pytest.approx(3.0)
        assert average_hausdorff(X, Y) == pytest.approx(1.5)

    def test_identical_sets(self, rng):
        X = rng.random((30, 3))
        assert hausdorff(X, X) == 0.0
        assert average_hausdorff(X, X) == 0.0

    def test_brute_force_oracle(self, rng):
        X, Y = rng.random((40, 3)), rng.random((25, 3)) + 0.3
        xy, yx = _brute_directed(X, Y), _brute_directed(Y, X)
        assert hausdorff(X, Y) == pytest.approx(max(xy.max(), yx.max()), abs=1e-12)
        assert average_hausdorff(X, Y) == pytest.approx(xy.mean() / 2 + yx.mean() / 2, abs=1e-12)

    @pytest.mark.parametrize("backend", ["kdtree", "brute"])
    def test_symmetric_and_ordered(self, rng, backend):
        X, Y = rng.random((50, 2)), rng.random((20, 2)) * 2
        assert average_hausdorff(X, Y, backend) == pytest.approx(average_hausdorff(Y, X, backend), abs=1e-12)
        assert hausdorff(X, Y, backend) >= average_hausdorff(X, Y, backend)

    def test_rigid_motion(self, rng):
        X, Y = rng.random((30, 3)), rng.random((30, 3))
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        shift = np.array([5.0, -2.0, 1.0])
        assert average_hausdorff(X @ q.T + shift, Y @ q.T + shift) == pytest.approx(average_hausdorff(X, Y), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            hausdorff(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_empty_set(self):
        with pytest.raises(InvalidArgumentError):
            average_hausdorff(np.zeros((0, 3)), np.zeros((3, 3)))


class TestThresholdSweep:
    def test_indicator_scores_recover_the_truth(self, labeled_cloud):
        scores = labeled_cloud.labels.astype(float)
        report = threshold_sweep(scores, labeled_cloud.ground_truth(), labeled_cloud)
        assert report.best_ahd == 0.0
        assert report.best_count == 20
        assert report.best_threshold == 1.0

    def test_reversed_scores_are_worse(self, labeled_cloud):
        scores = labeled_cloud.labels.astype(float)
        truth = labeled_cloud.ground_truth()
        good = threshold_sweep(scores, truth, labeled_cloud)
        bad = threshold_sweep(-scores, truth, labeled_cloud)
        assert bad.best_ahd > good.best_ahd

    def test_matches_per_threshold_oracle(self, labeled_cloud, rng):
        scores = rng.integers(0, 15, size=labeled_cloud.n).astype(float)
        truth = labeled_cloud.ground_truth()
        report = threshold_sweep(scores, truth, labeled_cloud)
        assert np.all(np.diff(report.counts) >= 0)
        assert np.all(np.diff(report.thresholds) < 0)
        for t, k, ahd in report.entries():
            survivors = labeled_cloud.points[scores >= t]
            assert len(survivors) == k
            assert ahd == pytest.approx(average_hausdorff(survivors, truth), abs=1e-12)

    def test_tree_fallback_agrees(self, labeled_cloud, rng, monkeypatch):
        scores = rng.random(labeled_cloud.n)
        truth = labeled_cloud.ground_truth()
        dense = threshold_sweep(scores, truth, labeled_cloud)
        monkeypatch.setattr(metrics, "MAX_DENSE_PAIRS", 0)
        fallback = threshold_sweep(scores, truth, labeled_cloud)
        np.testing.assert_allclose(fallback.ahd, dense.ahd, atol=1e-12)

    def test_quantile_thresholds(self, labeled_cloud, rng, monkeypatch):
        monkeypatch.setattr(metrics, "MAX_DISTINCT_THRESHOLDS", 10)
        monkeypatch.setattr(metrics, "N_QUANTILES", 7)
        scores = rng.random(labeled_cloud.n)
        report = threshold_sweep(scores, labeled_cloud.ground_truth(), labeled_cloud)
        assert len(report.thresholds) == 7
        assert report.thresholds[0] == scores.max()
        assert report.counts[-1] == labeled_cloud.n

    def test_explicit_thresholds_above_maximum_are_dropped(self, labeled_cloud):
        scores = np.linspace(0.0, 1.0, labeled_cloud.n)
        report = threshold_sweep(scores, labeled_cloud.ground_truth(), labeled_cloud, thresholds=[2.0, 0.5, 0.0])
        np.testing.assert_array_equal(report.thresholds, [0.5, 0.0])

    def test_misaligned_scores(self, labeled_cloud):
        with pytest.raises(SchemaError):
            threshold_sweep(np.ones(5), labeled_cloud.ground_truth(), labeled_cloud)

    def test_report_frame(self, labeled_cloud):
        report = threshold_sweep(labeled_cloud.labels.astype(float), labeled_cloud.ground_truth(), labeled_cloud)
        frame = report.to_frame()
        assert list(frame.columns) == ['threshold', 'survivors', 'ahd']
        assert len(frame) == 2


class TestCalibration:
    def test_calibrated_threshold(self, labeled_cloud):
        threshold = calibrate_threshold(lambda cloud: cloud.labels * 3.0 + 1.0, labeled_cloud)
        assert threshold == 4.0

    def test_evaluate_fixed_threshold(self, labeled_cloud):
        ahd, count = evaluate_threshold(labeled_cloud.labels.astype(float), 0.5, labeled_cloud)
        assert (ahd, count) == (0.0, 20)

    def test_nothing_survives(self, labeled_cloud):
        ahd, count = evaluate_threshold(np.zeros(labeled_cloud.n), 1.0, labeled_cloud)
        assert np.isnan(ahd) and count == 0


class TestPrecisionRecall:
    def test_perfect_ranking(self):
        positives = np.r_[np.ones(10, dtype=bool), np.zeros(30, dtype=bool)]
        scores = positives.astype(float)
        assert precision_recall_at_count(scores, positives, 10) == (1.0, 1.0)
        precision, recall = precision_recall_at_count(scores, positives, 40)
        assert precision == pytest.approx(0.25) and recall == 1.0

    def test_recall_nondecreasing(self, rng):
        positives = rng.random(200) < 0.3
        curve = precision_recall_curve(rng.random(200), positives, range(1, 201))
        assert np.all(np.diff(curve.recall) >= 0)
        assert curve.recall[-1] == 1.0

    def test_ties_break_by_point_id(self):
        positives = np.array([True, True, False, False])
        assert precision_recall_at_count(np.ones(4), positives, 2) == (1.0, 1.0)
        assert precision_recall_at_count(np.ones(4), positives[::-1], 2) == (0.0, 0.0)

    @pytest.mark.parametrize("count", [0, 5])
    def test_count_out_of_range(self, count):
        with pytest.raises(InvalidArgumentError):
            precision_recall_at_count(np.ones(4), np.ones(4, dtype=bool), count)

    def test_curve_frame(self):
        curve = precision_recall_curve(np.arange(4.0), np.array([0, 0, 1, 1], dtype=bool), [1, 2, 4])
        assert curve.entries() == [(1, 1.0, 0.5), (2, 1.0, 1.0), (4, 0.5, 1.0)]
        assert list(curve.to_frame().columns) == ['survivors', 'precision', 'recall']


class TestConvergence:
    def test_constant_snapshots_give_flat_curve(self, labeled_cloud, rng):
        snapshot = rng.random(labeled_cloud.n)
        curve = convergence_curve([snapshot] * 3, labeled_cloud)
        assert [epoch for epoch, _ in curve] == [1, 2, 3]
        assert len({ahd for _, ahd in curve}) == 1

    def test_calibrated_curve(self, labeled_cloud):
        snapshots = [labeled_cloud.labels.astype(float)] * 2
        curve = convergence_curve(snapshots, labeled_cloud, snapshots, labeled_cloud)
        assert curve == [(1, 0.0), (2, 0.0)]

    def test_history_length_mismatch(self, labeled_cloud):
        snapshot = np.ones(labeled_cloud.n)
        with pytest.raises(InvalidArgumentError):
            convergence_curve([snapshot] * 2, labeled_cloud, [snapshot], labeled_cloud)


class TestSampleSubcube:
    def test_volume_fraction(self):
        cloud = PointCloud(points=np.random.default_rng(0).random((20_000, 3)))
        mask = sample_subcube(cloud, fraction=0.1, seed=3)
        assert mask.mean() == pytest.approx(0.1, abs=0.02)

    def test_full_box(self, labeled_cloud):
        assert sample_subcube(labeled_cloud, fraction=1.0).all()

    def test_seeded(self, labeled_cloud):
        np.testing.assert_array_equal(sample_subcube(labeled_cloud, 0.3, seed=5),
                                      sample_subcube(labeled_cloud, 0.3, seed=5))

    def test_bad_fraction(self, labeled_cloud):
        with pytest.raises(InvalidArgumentError):
            sample_subcube(labeled_cloud, fraction=0.0)
