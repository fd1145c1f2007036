from dataclasses import replace

import numpy as np
import pytest

from laat.exceptions import ConvergenceError, InvalidArgumentError, MultiComponentError
from laat.geometry import PointCloud, build_index
from laat.markov import (
    TransitionKernel, alignment_kernel, distance_kernel, distance_preference, softmax,
    stationary_by_component, stationary_vector, threshold_by_visitation,
)


def _dense_stationary(matrix):
    vals, vecs = np.linalg.eig(np.asarray(matrix).T)
    pi = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return pi / pi.sum()


def _random_kernel(rng, n):
    mask = rng.random((n, n)) < 0.3
    mask |= np.eye(n, dtype=bool)
    mask[np.arange(n), (np.arange(n) + 1) % n] = True
    matrix = np.where(mask, rng.random((n, n)) + 0.01, 0.0)
    return matrix / matrix.sum(axis=1, keepdims=True)


class TestKernels:
    def test_alignment_row(self):
        cloud = PointCloud(points=[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]])
        index = build_index(cloud, radius=0.2)
        preference = index.preference.copy()
        preference[index.row(0)] = [0.7, 0.3]
        kernel = alignment_kernel(replace(index, preference=preference), beta=10.0)
        _, probs = kernel.row(0)
        np.testing.assert_allclose(probs, [0.98201379, 0.01798621], atol=1e-8)

    def test_rows_are_stochastic(self, plane_cloud):
        index = build_index(plane_cloud, radius=0.15)
        for kernel in (alignment_kernel(index, 10.0), distance_kernel(index, 10.0)):
            sums = np.add.reduceat(kernel.data, kernel.indptr[:-1][index.sizes > 0])
            np.testing.assert_allclose(sums, 1.0, atol=1e-12)
            assert np.all(kernel.data >= 0)

    def test_distance_preference(self):
        cloud = PointCloud(points=[[0.0, 0.0], [0.05, 0.0], [-0.15, 0.0]])
        index = build_index(cloud, radius=0.2, min_neighbors=1)
        np.testing.assert_allclose(distance_preference(index)[index.row(0)], [0.75, 0.25], atol=1e-12)

    def test_neighbors_on_the_sphere_are_uniform(self):
        cloud = PointCloud(points=[[0.0, 0.0], [0.2, 0.0], [-0.2, 0.0], [0.0, 0.2]])
        index = build_index(cloud, radius=0.2, min_neighbors=1)
        assert index.sizes[0] == 3
        np.testing.assert_allclose(distance_preference(index)[index.row(0)], 1 / 3, atol=1e-15)

    def test_softmax_shift_invariance(self):
        values = np.array([0.2, 0.5, 0.1])
        np.testing.assert_allclose(softmax(values, 10.0), softmax(values + 100.0, 10.0), atol=1e-15)

    def test_nonpositive_beta(self, plane_cloud):
        index = build_index(plane_cloud, radius=0.15)
        with pytest.raises(InvalidArgumentError):
            alignment_kernel(index, beta=0.0)
        with pytest.raises(InvalidArgumentError):
            distance_kernel(index, beta=-1.0)

    @pytest.mark.parametrize("matrix", [
        [[0.5, 0.5]],
        [[1.2, -0.2], [0.5, 0.5]],
        [[0.5, 0.4], [0.5, 0.5]],
    ])
    def test_from_dense_rejects(self, matrix):
        with pytest.raises(InvalidArgumentError):
            TransitionKernel.from_dense(matrix)


class TestStationaryVector:
    def test_symmetric_two_state_chain(self):
        result = stationary_vector(TransitionKernel.from_dense([[0.1, 0.9], [0.9, 0.1]]))
        np.testing.assert_allclose(result.pi, [0.5, 0.5], atol=1e-10)

    def test_periodic_chain(self):
        result = stationary_vector(TransitionKernel.from_dense([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(result.pi, [0.5, 0.5], atol=1e-12)

    def test_matches_dense_eigenvector(self, rng):
        matrix = rng.random((8, 8))
        matrix /= matrix.sum(axis=1, keepdims=True)
        result = stationary_vector(TransitionKernel.from_dense(matrix))
        np.testing.assert_allclose(result.pi, _dense_stationary(matrix), atol=1e-8)

    def test_random_kernels_match_dense_solve(self, rng):
        for _ in range(200):
            matrix = _random_kernel(rng, int(rng.integers(2, 13)))
            result = stationary_vector(TransitionKernel.from_dense(matrix))
            assert result.pi.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(result.pi >= 0)
            assert np.abs(result.pi @ matrix - result.pi).sum() <= 1e-10
            assert np.max(np.abs(result.pi - _dense_stationary(matrix))) <= 1e-8

    def test_chain_of_five(self, chain_cloud):
        index = build_index(chain_cloud, radius=0.15, min_neighbors=1)
        result = stationary_vector(alignment_kernel(index, beta=10.0))
        np.testing.assert_allclose(result.pi, np.array([1, 2, 2, 2, 1]) / 8, atol=1e-8)

    def test_iteration_budget(self):
        kernel = TransitionKernel.from_dense([[0.99, 0.01], [0.02, 0.98]])
        with pytest.raises(ConvergenceError) as err:
            stationary_vector(kernel, max_iter=1, refine=False)
        assert err.value.exit_code == 4

    def test_refinement_after_exhausted_budget(self):
        kernel = TransitionKernel.from_dense([[0.99, 0.01], [0.02, 0.98]])
        result = stationary_vector(kernel, max_iter=1)
        np.testing.assert_allclose(result.pi, [2 / 3, 1 / 3], atol=1e-10)
        assert result.residual <= 1e-10

    @pytest.fixture
    def lazy_path(self):
        n = 600
        matrix = 0.5 * np.eye(n)
        matrix[np.arange(n - 1), np.arange(1, n)] += 0.25
        matrix[np.arange(1, n), np.arange(n - 1)] += 0.25
        matrix[0, 1] += 0.25
        matrix[-1, -2] += 0.25
        degree = np.full(n, 2.0)
        degree[[0, -1]] = 1.0
        return TransitionKernel.from_dense(matrix), degree / degree.sum()

    def test_slow_mixing_chain_is_refined(self, lazy_path):
        kernel, expected = lazy_path
        result = stationary_vector(kernel)
        assert result.residual <= 1e-10
        assert result.iterations < 100_000
        np.testing.assert_allclose(result.pi, expected, atol=1e-10)

    def test_slow_mixing_chain_without_refinement(self, lazy_path):
        kernel, _ = lazy_path
        with pytest.raises(ConvergenceError) as err:
            stationary_vector(kernel, max_iter=5000, refine=False)
        assert err.value.residual > 1e-10


class TestComponents:
    @pytest.fixture
    def two_blocks(self):
        matrix = np.zeros((5, 5))
        matrix[:2, :2] = [[0.3, 0.7], [0.6, 0.4]]
        matrix[2:, 2:] = [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]
        return TransitionKernel.from_dense(matrix)

    def test_single_component_solver_refuses(self, two_blocks):
        with pytest.raises(MultiComponentError):
            stationary_vector(two_blocks)

    @pytest.mark.parametrize("workers", [1, 2])
    def test_each_component_sums_to_one(self, two_blocks, workers):
        result = stationary_by_component(two_blocks, workers=workers)
        assert result.n_components == 2
        for c in range(2):
            assert result.pi[result.components == c].sum() == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(result.pi[2:], 1 / 3, atol=1e-10)

    def test_points_without_rows_score_zero(self, plane_cloud):
        index = build_index(plane_cloud, radius=0.15)
        result = stationary_by_component(alignment_kernel(index, beta=10.0))
        assert np.all(result.pi[~index.active] == 0)
        assert np.all(result.components[~index.active] == -1)
        assert result.pi.sum() == pytest.approx(result.n_components, abs=1e-8)


class TestThresholdByVisitation:
    def test_nested_survivor_sets(self, rng):
        scores = rng.random(100)
        loose = set(threshold_by_visitation(scores, 0.3).tolist())
        tight = set(threshold_by_visitation(scores, 0.6).tolist())
        assert tight <= loose

    def test_exact_count(self, rng):
        scores = rng.random(100)
        t = np.sort(scores)[::-1][24]
        assert len(threshold_by_visitation(scores, t)) == 25
