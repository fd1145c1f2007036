"""
Point clouds, radius neighborhoods and local PCA.

The NeighborhoodIndex is computed once per (cloud, radius) and then shared
read-only by every walker and kernel: neighbor lists are stored as CSR
arrays, and the normalized alignment preference of every (i, j) jump is
cached next to them.

Usage:
    from laat.geometry import PointCloud, build_index

    cloud = PointCloud(points=xyz, labels=labels)
    index = build_index(cloud, radius=0.2)
    prefs = alignment_preference(index, 17)
"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import (
    DataError, DegenerateJumpError, DegenerateNeighborhoodError,
    EmptyAfterFilterError, InvalidArgumentError,
)
from .spatial import radius_neighbors
from .validators import validate_radius

logger = logging.getLogger(__name__)

NOISE_LABEL = 0


class PointCloud(BaseModel):
    """n points in D >= 2 dimensions, optional attribute channels and labels"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray = Field(..., description="(n, D) coordinates")
    attributes: Dict[str, np.ndarray] = Field(default_factory=dict, description="Named per-point channels")
    labels: Optional[np.ndarray] = Field(None, description="Per-point ground truth, 0 = noise")

    @field_validator('points', mode='before')
    @classmethod
    def _check_points(cls, value):
        arr = np.ascontiguousarray(value, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 2:
            raise DataError("point cloud must be an (n, D) array with n >= 1 and D >= 2",
                            detail=f"shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("point cloud has non-finite coordinates")
        return arr

    @model_validator(mode='after')
    def _check_channels(self):
        n = self.points.shape[0]
        channels = {}
        for name, channel in self.attributes.items():
            arr = np.ascontiguousarray(channel, dtype=np.float64).ravel()
            if arr.shape[0] != n:
                raise DataError(f"attribute '{name}' has {arr.shape[0]} entries for {n} points")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"attribute '{name}' has non-finite values")
            channels[name] = arr
        self.attributes = channels
        if self.labels is not None:
            labels = np.asarray(self.labels).ravel()
            if labels.shape[0] != n:
                raise DataError(f"labels have {labels.shape[0]} entries for {n} points")
            self.labels = labels.astype(np.int64)
        return self

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def manifold_mask(self) -> np.ndarray:
        """True for every point whose label is not noise"""
        if self.labels is None:
            raise DataError("point cloud has no ground-truth labels")
        return self.labels != NOISE_LABEL

    def ground_truth(self) -> np.ndarray:
        """Coordinates of the labeled manifold points"""
        return self.points[self.manifold_mask()]

    def subset(self, keep: np.ndarray) -> 'PointCloud':
        """New cloud restricted to a boolean mask or index array"""
        return PointCloud(
            points=self.points[keep],
            attributes={k: v[keep] for k, v in self.attributes.items()},
            labels=None if self.labels is None else self.labels[keep],
        )


@dataclass(frozen=True)
class NeighborhoodIndex:
    """
    Radius neighborhoods, local PCA and cached alignment preferences.

    neighbors of point i are indices[indptr[i]:indptr[i+1]]; preference holds
    the normalized alignment preference of each of those jumps. eigenvectors
    store v_1..v_D as columns, ordered by nonincreasing eigenvalue.
    """
    points: np.ndarray
    radius: float
    indptr: np.ndarray
    indices: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    active: np.ndarray
    size_median: float
    preference: np.ndarray
    min_neighbors: int

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def max_size(self) -> int:
        """Largest neighborhood, the Delta of the cost bound"""
        return int(self.sizes.max()) if self.n else 0

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def row(self, i: int) -> slice:
        return slice(int(self.indptr[i]), int(self.indptr[i + 1]))


# ---------------- Segment helpers ---------------- #
def segment_sum(values: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    """Per-row sums of CSR-aligned values; empty rows sum to 0"""
    n = len(indptr) - 1
    out = np.zeros((n,) + values.shape[1:], dtype=np.float64)
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    if len(nonempty):
        out[nonempty] = np.add.reduceat(values, indptr[nonempty], axis=0)
    return out


def _restrict(indptr: np.ndarray, indices: np.ndarray, active: np.ndarray):
    """Drop inactive points from every neighbor list and empty their rows"""
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    keep = active[rows] & active[indices]
    new_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows[keep], minlength=n), out=new_indptr[1:])
    return new_indptr, indices[keep]


def _local_pca(points: np.ndarray, indptr: np.ndarray, indices: np.ndarray,
               chunk_rows: int = 8192):
    """Eigen-decomposition of the mean-centered covariance of {x_i} U N(i)"""
    n, dim = points.shape
    sizes = np.diff(indptr)
    eigenvalues = np.zeros((n, dim))
    eigenvectors = np.tile(np.eye(dim), (n, 1, 1))
    for a in range(0, n, chunk_rows):
        b = min(n, a + chunk_rows)
        block = np.arange(a, b)
        nonempty = block[sizes[a:b] > 0]
        if not len(nonempty):
            continue
        lo, hi = indptr[a], indptr[b]
        rows = np.repeat(block, sizes[a:b])
        # offsets from the center point; x_i itself contributes a zero offset
        diff = points[indices[lo:hi]] - points[rows]
        starts = indptr[nonempty] - lo
        s1 = np.add.reduceat(diff, starts, axis=0)
        s2 = np.add.reduceat(diff[:, :, None] * diff[:, None, :], starts, axis=0)
        m = (sizes[nonempty] + 1).astype(np.float64)
        mean = s1 / m[:, None]
        cov = s2 / m[:, None, None] - mean[:, :, None] * mean[:, None, :]
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
        vals, vecs = np.linalg.eigh(cov)
        eigenvalues[nonempty] = np.clip(vals[:, ::-1], 0.0, None)
        eigenvectors[nonempty] = vecs[:, :, ::-1]
    return eigenvalues, eigenvectors


def alignment_entries(points: np.ndarray, indptr: np.ndarray, indices: np.ndarray,
                      eigenvalues: np.ndarray, eigenvectors: np.ndarray,
                      strict: bool = False, chunk_entries: int = 1 << 18) -> np.ndarray:
    """
    Normalized alignment preference for every CSR entry (i, j).

    w_d = |cos a_d| / sum |cos a_d'|; the jump length cancels, so the
    projections onto the eigenvectors are normalized directly. Zero-length
    jumps get preference 0 (or raise in strict mode); a row whose raw
    preferences all vanish falls back to uniform.
    """
    n = len(indptr) - 1
    sizes = np.diff(indptr)
    rows = np.repeat(np.arange(n), sizes)
    total = eigenvalues.sum(axis=1)
    lam_bar = np.divide(eigenvalues, total[:, None], out=np.zeros_like(eigenvalues),
                        where=total[:, None] > 0)
    if strict:
        bad_rows = np.flatnonzero((sizes > 0) & (total <= 0))
        if len(bad_rows):
            raise DegenerateNeighborhoodError(int(bad_rows[0]))

    raw = np.zeros(len(indices))
    for lo in range(0, len(indices), chunk_entries):
        hi = min(len(indices), lo + chunk_entries)
        r = rows[lo:hi]
        jumps = points[indices[lo:hi]] - points[r]
        proj = np.abs(np.einsum('ed,edk->ek', jumps, eigenvectors[r]))
        norm = proj.sum(axis=1)
        degenerate = norm <= 0
        if degenerate.any():
            first = lo + int(np.flatnonzero(degenerate)[0])
            if strict:
                raise DegenerateJumpError(int(rows[first]), int(indices[first]))
            logger.warning(f"{int(degenerate.sum())} coincident neighbor pairs excluded from alignment preference")
        w = np.divide(proj, norm[:, None], out=np.zeros_like(proj), where=~degenerate[:, None])
        raw[lo:hi] = np.einsum('ed,ed->e', w, lam_bar[r])

    row_total = segment_sum(raw, indptr)
    denom = row_total[rows]
    uniform = 1.0 / np.maximum(sizes[rows], 1)
    return np.where(denom > 0, raw / np.where(denom > 0, denom, 1.0), uniform)


# ---------------- Operations ---------------- #
def build_index(cloud: PointCloud, radius: float, backend: str = 'kdtree',
                min_neighbors: Optional[int] = None, strict: bool = False,
                workers: int = 1) -> NeighborhoodIndex:
    """
    Exact radius neighborhoods, degeneracy filter and cached local PCA.

    Points with fewer than min_neighbors (default D) neighbors are marked
    inactive and removed from every list; removal repeats until no active
    point falls below the threshold.
    """
    radius = validate_radius(radius)
    points = cloud.points
    n, dim = points.shape
    min_neighbors = dim if min_neighbors is None else int(min_neighbors)
    if min_neighbors < 1:
        raise InvalidArgumentError("min_neighbors must be at least 1", detail=f"got {min_neighbors}")

    start = time.time()
    indptr, indices = radius_neighbors(points, radius, backend=backend, workers=workers)

    active = np.ones(n, dtype=bool)
    while True:
        failing = active & (np.diff(indptr) < min_neighbors)
        if not failing.any():
            break
        active &= ~failing
        indptr, indices = _restrict(indptr, indices, active)

    if not active.any():
        raise EmptyAfterFilterError(n, min_neighbors, radius)

    eigenvalues, eigenvectors = _local_pca(points, indptr, indices)
    preference = alignment_entries(points, indptr, indices, eigenvalues, eigenvectors, strict=strict)
    sizes = np.diff(indptr)
    size_median = float(np.median(sizes[active]))

    logger.info(
        f"Neighborhood index built: n={n} D={dim} r={radius} active={int(active.sum())} "
        f"median size={size_median:g} max size={int(sizes.max())} ({time.time() - start:.2f}s)"
    )
    return NeighborhoodIndex(
        points=points, radius=radius, indptr=indptr, indices=indices,
        eigenvalues=eigenvalues, eigenvectors=eigenvectors, active=active,
        size_median=size_median, preference=preference, min_neighbors=min_neighbors,
    )


def _require_active(index: NeighborhoodIndex, i: int):
    if not 0 <= i < index.n:
        raise InvalidArgumentError("point id out of range", detail=f"{i} not in [0, {index.n})")
    if not index.active[i]:
        raise InvalidArgumentError("point was removed by the degeneracy filter", detail=f"point {i}")


def jump_alignment_weights(index: NeighborhoodIndex, i: int, j: int) -> np.ndarray:
    """Normalized |cos| between the jump x_j - x_i and each local eigenvector of i"""
    _require_active(index, i)
    if j not in set(index.neighbors(i).tolist()):
        raise InvalidArgumentError("j is not a neighbor of i", detail=f"i={i} j={j}")
    jump = index.points[j] - index.points[i]
    if not np.any(jump):
        raise DegenerateJumpError(i, j)
    cosines = np.abs(index.eigenvectors[i].T @ jump) / np.linalg.norm(jump)
    return cosines / cosines.sum()


def normalized_eigenvalues(index: NeighborhoodIndex, i: int) -> np.ndarray:
    """lambda_d / sum(lambda) of the local covariance at point i"""
    _require_active(index, i)
    vals = index.eigenvalues[i]
    total = vals.sum()
    if total <= 0:
        raise DegenerateNeighborhoodError(i)
    return vals / total


def alignment_preference(index: NeighborhoodIndex, i: int, strict: bool = False) -> np.ndarray:
    """Relative preference E-bar(i, j) for every neighbor j of i, summing to 1"""
    _require_active(index, i)
    neighbors = index.neighbors(i)
    if not len(neighbors):
        raise InvalidArgumentError("point has no neighbors", detail=f"point {i}")
    if strict:
        normalized_eigenvalues(index, i)
        for j in neighbors:
            if not np.any(index.points[j] - index.points[i]):
                raise DegenerateJumpError(i, int(j))
    return index.preference[index.row(i)].copy()
