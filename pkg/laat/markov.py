"""
Fixed-kernel Markov chain baseline

With the pheromone term switched off the ant walk is a time-homogeneous
Markov chain on the neighborhood graph; its stationary vector ranks points
the same way visit counts do. Kernels are stored as CSR arrays aligned with
the NeighborhoodIndex; stationary vectors come from the power method,
refined by shifted backward iteration (one sparse LU) when it stalls on
slowly mixing chains.

Usage:
    from laat.markov import alignment_kernel, stationary_by_component

    kernel = alignment_kernel(index, beta=10.0)
    result = stationary_by_component(kernel)
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import factorized

from .exceptions import ConvergenceError, DataError, InvalidArgumentError, MultiComponentError
from .geometry import NeighborhoodIndex, segment_sum

logger = logging.getLogger(__name__)


def softmax(values: np.ndarray, beta: float) -> np.ndarray:
    """exp(beta * v) / sum exp(beta * v), shifted by the maximum"""
    z = beta * np.asarray(values, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic P(j | i) on the sparsity pattern of the neighborhood graph"""
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    flavor: str
    beta: float

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    def row(self, i: int):
        """(neighbor ids, probabilities) of row i"""
        sl = slice(int(self.indptr[i]), int(self.indptr[i + 1]))
        return self.indices[sl], self.data[sl]

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    @classmethod
    def from_dense(cls, matrix: np.ndarray, flavor: str = 'dense') -> 'TransitionKernel':
        """Wrap an explicit row-stochastic matrix"""
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidArgumentError("transition matrix must be square", detail=f"shape {matrix.shape}")
        if np.any(matrix < 0) or not np.allclose(matrix.sum(axis=1), 1.0, atol=1e-12):
            raise InvalidArgumentError("transition matrix must be nonnegative with unit row sums")
        csr = sp.csr_matrix(matrix)
        csr.sort_indices()
        return cls(indptr=csr.indptr.astype(np.int64), indices=csr.indices.astype(np.int64),
                   data=csr.data, flavor=flavor, beta=float('nan'))


@dataclass(frozen=True)
class StationaryVector:
    """
    Power-method result.

    pi sums to 1 over every analysed component; components labels each
    point with its component id (-1 for points outside every chain).
    """
    pi: np.ndarray
    residual: float
    iterations: int
    components: np.ndarray
    n_components: int = 1


# ---------------- Kernels ---------------- #
def _softmax_rows(indptr: np.ndarray, preference: np.ndarray, beta: float) -> np.ndarray:
    data = np.zeros_like(preference)
    for i in np.flatnonzero(np.diff(indptr) > 0):
        lo, hi = indptr[i], indptr[i + 1]
        data[lo:hi] = softmax(preference[lo:hi], beta)
    return data


def alignment_kernel(index: NeighborhoodIndex, beta: float) -> TransitionKernel:
    """P(j | i) = softmax over the neighborhood of beta * E_bar(i, j)"""
    if not beta > 0:
        raise InvalidArgumentError("beta must be positive", detail=f"got {beta}")
    data = _softmax_rows(index.indptr, index.preference, beta)
    return TransitionKernel(indptr=index.indptr, indices=index.indices, data=data,
                            flavor='alignment', beta=float(beta))


def distance_preference(index: NeighborhoodIndex) -> np.ndarray:
    """
    Normalized linear proximity s / sum(s) with s = 1 - |x_j - x_i| / r per CSR entry.

    Neighborhoods where every neighbor sits exactly on the sphere get a uniform row.
    """
    rows = np.repeat(np.arange(index.n), index.sizes)
    distances = np.linalg.norm(index.points[index.indices] - index.points[rows], axis=1)
    s = np.clip(1.0 - distances / index.radius, 0.0, None)
    total = segment_sum(s, index.indptr)[rows]
    uniform = 1.0 / np.maximum(index.sizes[rows], 1)
    return np.where(total > 0, s / np.where(total > 0, total, 1.0), uniform)


def distance_kernel(index: NeighborhoodIndex, beta: float) -> TransitionKernel:
    """Same softmax as alignment_kernel, closer neighbors preferred"""
    if not beta > 0:
        raise InvalidArgumentError("beta must be positive", detail=f"got {beta}")
    data = _softmax_rows(index.indptr, distance_preference(index), beta)
    return TransitionKernel(indptr=index.indptr, indices=index.indices, data=data,
                            flavor='distance', beta=float(beta))


# ---------------- Stationary vectors ---------------- #
# power iterations between stall checks; a check that finds less than a
# halving of the residual hands over to backward iteration
STALL_WINDOW = 1000
BACKWARD_SHIFT = 1e-12
BACKWARD_MAX_ITER = 20


def _fixed_point_residual(transposed: sp.csr_matrix, pi: np.ndarray) -> float:
    return float(np.abs(transposed @ pi - pi).sum())


def _power_iteration(transposed: sp.csr_matrix, tol: float, max_iter: int, stall_window: Optional[int]):
    """
    Left power iteration x <- x P from the uniform vector.

    The average y of two consecutive iterates is tested; y P - y equals half
    the difference of the iterates two steps apart, so each iteration costs
    one sparse product. Returns (y, residual, iterations, converged); with a
    stall_window the loop gives up early once the residual stops halving.
    """
    n = transposed.shape[0]
    x_prev = np.full(n, 1.0 / n)
    x = transposed @ x_prev
    residual = checkpoint = np.inf
    iteration = 0
    for iteration in range(1, max_iter + 1):
        x_next = transposed @ x
        residual = 0.5 * np.abs(x_next - x_prev).sum()
        if residual <= tol:
            break
        if stall_window and iteration % stall_window == 0:
            if residual > 0.5 * checkpoint:
                break
            checkpoint = residual
        x_prev, x = x, x_next
    y = 0.5 * (x_prev + x)
    return y / y.sum(), float(residual), iteration, residual <= tol


def _backward_iteration(transposed: sp.csr_matrix, x0: np.ndarray, tol: float):
    """
    Inverse iteration on P^T - mu I with mu just below 1.

    One sparse LU factorization, then a few solves; the dominant left
    eigenvector of an irreducible chain separates after one or two steps.
    """
    n = transposed.shape[0]
    shifted = (transposed - (1.0 - BACKWARD_SHIFT) * sp.identity(n, format='csr')).tocsc()
    try:
        solve = factorized(shifted)
    except RuntimeError as e:
        logger.warning(f"Backward iteration: factorization failed ({e})")
        return x0, _fixed_point_residual(transposed, x0)
    y = x0 / np.linalg.norm(x0)
    pi, residual = x0, _fixed_point_residual(transposed, x0)
    for step in range(1, BACKWARD_MAX_ITER + 1):
        z = solve(y)
        norm = np.linalg.norm(z)
        if not np.isfinite(norm) or norm == 0:
            break
        y = z / norm
        candidate = np.clip(y * np.sign(y.sum()), 0.0, None)
        if candidate.sum() <= 0:
            break
        candidate /= candidate.sum()
        candidate_residual = _fixed_point_residual(transposed, candidate)
        if candidate_residual < residual:
            pi, residual = candidate, candidate_residual
        if residual <= tol:
            logger.debug(f"Backward iteration converged after {step} solve(s)")
            break
    return pi, residual


def _solve_block(block: sp.csr_matrix, tol: float, max_iter: int, refine: bool):
    """(pi, residual, iterations) of one irreducible block; raises ConvergenceError"""
    transposed = block.T.tocsr()
    pi, residual, iterations, converged = _power_iteration(
        transposed, tol, max_iter, STALL_WINDOW if refine else None)
    if converged:
        return pi, residual, iterations
    if refine:
        logger.info(f"Power method stalled at residual {residual:.2e} after {iterations} iterations; "
                    f"refining {block.shape[0]} states by backward iteration")
        pi, residual = _backward_iteration(transposed, pi, tol)
        if residual <= tol:
            return pi, residual, iterations
    raise ConvergenceError(residual, iterations, tol)


def _components(kernel: TransitionKernel):
    support = np.flatnonzero(np.diff(kernel.indptr) > 0)
    if not len(support):
        raise DataError("transition kernel has no rows to analyse")
    sub = kernel.to_csr()[support][:, support]
    n_components, labels = connected_components(sub, directed=True, connection='weak')
    return support, sub, n_components, labels


def stationary_vector(kernel: TransitionKernel, tol: float = 1e-10, max_iter: int = 100_000,
                      refine: bool = True) -> StationaryVector:
    """
    Stationary vector of a single-component chain; raises MultiComponentError otherwise.

    With refine=False only the power method runs and ConvergenceError follows
    whenever max_iter iterations do not reach tol.
    """
    support, sub, n_components, labels = _components(kernel)
    if n_components > 1:
        raise MultiComponentError(n_components)
    pi_sub, residual, iterations = _solve_block(sub, tol, max_iter, refine)
    pi = np.zeros(kernel.n)
    pi[support] = pi_sub
    components = np.full(kernel.n, -1, dtype=np.int64)
    components[support] = 0
    logger.info(f"Power method ({kernel.flavor}): {iterations} iterations, residual {residual:.2e}")
    return StationaryVector(pi=pi, residual=residual, iterations=iterations, components=components)


def stationary_by_component(kernel: TransitionKernel, tol: float = 1e-10, max_iter: int = 100_000,
                            workers: int = 1, refine: bool = True) -> StationaryVector:
    """Run the power method on every connected component, each normalized to 1"""
    support, sub, n_components, labels = _components(kernel)
    members = [np.flatnonzero(labels == c) for c in range(n_components)]

    def solve(idx):
        if len(idx) == 1:
            return np.ones(1), 0.0, 0
        return _solve_block(sub[idx][:, idx], tol, max_iter, refine)

    if workers > 1 and n_components > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(solve, members))
    else:
        results = [solve(idx) for idx in members]

    pi = np.zeros(kernel.n)
    for idx, (pi_block, _, _) in zip(members, results):
        pi[support[idx]] = pi_block
    components = np.full(kernel.n, -1, dtype=np.int64)
    components[support] = labels
    residual = float(max(r for _, r, _ in results))
    iterations = int(max(it for _, _, it in results))
    logger.info(f"Power method ({kernel.flavor}): {n_components} components, "
                f"max {iterations} iterations, max residual {residual:.2e}")
    return StationaryVector(pi=pi, residual=residual, iterations=iterations,
                            components=components, n_components=int(n_components))


def score_values(scores: Union[StationaryVector, np.ndarray, object]) -> np.ndarray:
    """Per-point score array of a stationary vector, pheromone field or plain array"""
    for attr in ('pi', 'values'):
        if hasattr(scores, attr):
            return np.asarray(getattr(scores, attr), dtype=np.float64)
    return np.asarray(scores, dtype=np.float64)


def threshold_by_visitation(scores, threshold: float) -> np.ndarray:
    """Ids of the points scoring at least threshold"""
    return np.flatnonzero(score_values(scores) >= threshold)
