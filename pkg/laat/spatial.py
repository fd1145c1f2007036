"""
Exact radius and nearest-neighbor search backends.

All backends return *exact* Euclidean results: the kd-tree and faiss
backends only produce candidates, and every candidate pair is re-checked
in float64 with the same squared-distance test, so the three backends
agree entry for entry. Nearest-neighbor ties may resolve to different ids.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

BACKENDS = ('kdtree', 'faiss', 'brute')

_CANDIDATE_SLACK = 1e-6


# ---------------- Backends ---------------- #
class KDTreeBackend:
    """scipy cKDTree over float64 coordinates"""

    def __init__(self, points: np.ndarray, workers: int = 1):
        self.points = points
        self.workers = workers
        self.tree = cKDTree(points)

    def radius_candidates(self, radius: float) -> List[np.ndarray]:
        lists = self.tree.query_ball_point(
            self.points, r=radius * (1.0 + _CANDIDATE_SLACK), workers=self.workers
        )
        return [np.asarray(c, dtype=np.int64) for c in lists]

    def nearest(self, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        dist, idx = self.tree.query(queries, k=1, workers=self.workers)
        return np.asarray(dist, dtype=np.float64), np.asarray(idx, dtype=np.int64)


class FaissFlatBackend:
    """
    Exact flat L2 index (faiss) used as a candidate generator.

    faiss works in float32, so the squared radius is widened by a margin
    that covers float32 rounding of the centered coordinates; candidates
    are then filtered exactly in float64.
    """

    def __init__(self, points: np.ndarray, chunk_size: int = 4096, n_candidates: int = 8):
        try:
            import faiss
        except ImportError as e:  # pragma: no cover - depends on the install
            raise InvalidArgumentError("faiss backend requested but faiss is not installed") from e
        self._faiss = faiss
        self.points = points
        self.chunk_size = chunk_size
        self.n_candidates = n_candidates
        self.center = points.mean(axis=0)
        centered = (points - self.center).astype(np.float32)
        self.max_sq_norm = float(np.max(np.einsum('ij,ij->i', centered, centered))) if len(points) else 0.0
        self.index = faiss.IndexFlatL2(points.shape[1])
        self.index.add(np.ascontiguousarray(centered))

    def _margin(self, extra_sq_norm=0.0):
        eps32 = float(np.finfo(np.float32).eps)
        return 16.0 * eps32 * (self.max_sq_norm + extra_sq_norm + 1.0)

    def radius_candidates(self, radius: float) -> List[np.ndarray]:
        thresh = radius * radius * (1.0 + _CANDIDATE_SLACK) + self._margin()
        queries = (self.points - self.center).astype(np.float32)
        out: List[np.ndarray] = []
        for start in range(0, len(queries), self.chunk_size):
            chunk = np.ascontiguousarray(queries[start:start + self.chunk_size])
            lims, _, labels = self.index.range_search(chunk, float(thresh))
            for q in range(chunk.shape[0]):
                out.append(np.asarray(labels[lims[q]:lims[q + 1]], dtype=np.int64))
        return out

    def nearest(self, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Top-k float32 candidates, re-ranked in float64.

        A query is settled when its k-th candidate lies beyond the best exact
        distance plus the float32 margin; otherwise a range search at that
        bound collects every point that could still be closer.
        """
        n = len(self.points)
        k = min(self.n_candidates, n)
        q32 = np.ascontiguousarray((queries - self.center).astype(np.float32))
        sq32, labels = self.index.search(q32, k)
        labels = np.asarray(labels, dtype=np.int64)
        diff = self.points[labels] - queries[:, None, :]
        dist = np.sqrt(np.einsum('qkd,qkd->qk', diff, diff))
        best = np.argmin(dist, axis=1)
        rows = np.arange(len(queries))
        best_dist, best_idx = dist[rows, best], labels[rows, best]
        if k == n:
            return best_dist, best_idx

        q_sq = np.einsum('qd,qd->q', q32, q32).astype(np.float64)
        bound = best_dist * best_dist + self._margin(q_sq)
        unsettled = np.flatnonzero(np.asarray(sq32[:, -1], dtype=np.float64) <= bound)
        for q in unsettled:
            lims, _, found = self.index.range_search(q32[q:q + 1], float(bound[q]))
            found = np.asarray(found[lims[0]:lims[1]], dtype=np.int64)
            if not len(found):
                continue
            d = np.linalg.norm(self.points[found] - queries[q], axis=1)
            j = int(np.argmin(d))
            if d[j] < best_dist[q]:
                best_dist[q], best_idx[q] = d[j], found[j]
        if len(unsettled):
            logger.debug(f"faiss nearest: {len(unsettled)} of {len(queries)} queries refined by range search")
        return best_dist, best_idx


class BruteForceBackend:
    """O(n^2) reference path, chunked to bound memory"""

    def __init__(self, points: np.ndarray, chunk_size: int = 256):
        self.points = points
        self.chunk_size = chunk_size

    def radius_candidates(self, radius: float) -> List[np.ndarray]:
        limit = radius * radius * (1.0 + _CANDIDATE_SLACK) ** 2
        out: List[np.ndarray] = []
        for start in range(0, len(self.points), self.chunk_size):
            block = self.points[start:start + self.chunk_size]
            diff = block[:, None, :] - self.points[None, :, :]
            sq = np.einsum('ijd,ijd->ij', diff, diff)
            for row in sq:
                out.append(np.flatnonzero(row <= limit).astype(np.int64))
        return out

    def nearest(self, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        dist = np.empty(len(queries))
        idx = np.empty(len(queries), dtype=np.int64)
        for start in range(0, len(queries), self.chunk_size):
            block = queries[start:start + self.chunk_size]
            diff = block[:, None, :] - self.points[None, :, :]
            d = np.sqrt(np.einsum('ijd,ijd->ij', diff, diff))
            j = np.argmin(d, axis=1)
            idx[start:start + len(block)] = j
            dist[start:start + len(block)] = d[np.arange(len(block)), j]
        return dist, idx


def make_backend(name: str, points: np.ndarray, workers: int = 1):
    """Backend factory"""
    name = (name or 'kdtree').lower()
    if name == 'kdtree':
        return KDTreeBackend(points, workers=workers)
    if name == 'faiss':
        return FaissFlatBackend(points)
    if name == 'brute':
        return BruteForceBackend(points)
    raise InvalidArgumentError(f"unknown spatial backend '{name}'", detail=f"choose one of {BACKENDS}")


# ---------------- Exact queries ---------------- #
def exact_radius_graph(points: np.ndarray, candidates: List[np.ndarray],
                       radius: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Filter candidate lists to the exact relation ||x_j - x_i|| <= r, j != i.

    Returns CSR arrays (indptr, indices) with indices sorted inside each row.
    """
    n = len(points)
    lengths = np.fromiter((len(c) for c in candidates), dtype=np.int64, count=n)
    if lengths.sum() == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    rows = np.repeat(np.arange(n, dtype=np.int64), lengths)
    cols = np.concatenate(candidates).astype(np.int64)
    diff = points[cols] - points[rows]
    sq = np.einsum('ij,ij->i', diff, diff)
    keep = (sq <= radius * radius) & (cols != rows)
    rows, cols = rows[keep], cols[keep]
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols


def radius_neighbors(points: np.ndarray, radius: float, backend: str = 'kdtree',
                     workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Exact radius neighborhoods of every point (self excluded) as CSR arrays"""
    points = np.ascontiguousarray(points, dtype=np.float64)
    searcher = make_backend(backend, points, workers=workers)
    candidates = searcher.radius_candidates(radius)
    indptr, indices = exact_radius_graph(points, candidates, radius)
    logger.debug(f"radius graph: n={len(points)} r={radius} backend={backend} edges={len(indices)}")
    return indptr, indices


def nearest_distances(queries: np.ndarray, reference: np.ndarray, backend: str = 'kdtree',
                      workers: int = 1, searcher: Optional[object] = None) -> np.ndarray:
    """Distance from each query to its nearest reference point"""
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if searcher is None:
        searcher = make_backend(backend, np.ascontiguousarray(reference, dtype=np.float64), workers=workers)
    dist, _ = searcher.nearest(queries)
    return dist
