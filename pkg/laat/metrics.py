"""
Ground-truth evaluation: Hausdorff distances, threshold sweeps, calibration,
precision/recall and convergence curves.

Every score vector is a per-point array aligned with the cloud (pheromone
field, stationary vector or any plain ranking); higher means "more likely
on a manifold".
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from .exceptions import InvalidArgumentError
from .geometry import PointCloud
from .markov import score_values
from .spatial import nearest_distances
from .validators import validate_aligned, validate_point_set, validate_target_count

logger = logging.getLogger(__name__)

MAX_DISTINCT_THRESHOLDS = 50_000
N_QUANTILES = 2000
# above this many point pairs the sweep rebuilds a tree per threshold instead of a dense prefix minimum
MAX_DENSE_PAIRS = 2_000_000_000
_CHUNK_ELEMENTS = 1 << 22


def _pair(X, Y) -> Tuple[np.ndarray, np.ndarray]:
    X = validate_point_set(X, "X")
    Y = validate_point_set(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise InvalidArgumentError("point sets differ in dimension", detail=f"{X.shape[1]} vs {Y.shape[1]}")
    return X, Y


def hausdorff(X, Y, backend: str = 'kdtree') -> float:
    """max(sup_x inf_y |x - y|, sup_y inf_x |x - y|)"""
    X, Y = _pair(X, Y)
    return float(max(nearest_distances(X, Y, backend).max(), nearest_distances(Y, X, backend).max()))


def average_hausdorff(X, Y, backend: str = 'kdtree') -> float:
    """Mean nearest distances in both directions, each halved"""
    X, Y = _pair(X, Y)
    return float(nearest_distances(Y, X, backend).mean() / 2.0 + nearest_distances(X, Y, backend).mean() / 2.0)


@dataclass
class AhdReport:
    """AHD between survivors and ground truth at every swept threshold"""
    thresholds: np.ndarray
    counts: np.ndarray
    ahd: np.ndarray

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.ahd))

    @property
    def best_threshold(self) -> float:
        return float(self.thresholds[self.best_index])

    @property
    def best_ahd(self) -> float:
        return float(self.ahd[self.best_index])

    @property
    def best_count(self) -> int:
        return int(self.counts[self.best_index])

    def entries(self) -> List[Tuple[float, int, float]]:
        return list(zip(self.thresholds.tolist(), self.counts.tolist(), self.ahd.tolist()))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'threshold': self.thresholds, 'survivors': self.counts, 'ahd': self.ahd})


def sweep_thresholds(scores: np.ndarray) -> np.ndarray:
    """Distinct scores (descending) for small clouds, evenly spaced quantiles otherwise"""
    if scores.shape[0] <= MAX_DISTINCT_THRESHOLDS:
        return np.unique(scores)[::-1]
    quantiles = np.quantile(scores, np.linspace(1.0, 0.0, N_QUANTILES))
    return np.unique(quantiles)[::-1]


def _gt_to_prefix(ground_truth: np.ndarray, ordered: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """sum_g min over the first k ordered points of |g - p|, for each k in counts"""
    totals = np.zeros(len(counts))
    chunk = max(1, _CHUNK_ELEMENTS // ordered.shape[0])
    for start in range(0, ground_truth.shape[0], chunk):
        dist = cdist(ground_truth[start:start + chunk], ordered)
        np.minimum.accumulate(dist, axis=1, out=dist)
        totals += dist[:, counts - 1].sum(axis=0)
    return totals


def threshold_sweep(scores, ground_truth: np.ndarray, cloud: PointCloud,
                    thresholds: Optional[np.ndarray] = None, backend: str = 'kdtree') -> AhdReport:
    """
    AHD between {i : score_i >= t} and the ground truth, for t from the
    maximum score down to the minimum.
    """
    values = validate_aligned(score_values(scores), cloud.n)
    ground_truth = validate_point_set(ground_truth, "ground truth")
    if thresholds is None:
        thresholds = sweep_thresholds(values)
    thresholds = np.sort(np.asarray(thresholds, dtype=np.float64))[::-1]

    order = np.argsort(-values, kind='stable')
    ordered = cloud.points[order]
    counts = np.searchsorted(-values[order], -thresholds, side='right')
    keep = counts > 0
    if not keep.all():
        logger.debug(f"{int((~keep).sum())} thresholds above the maximum score skipped")
    thresholds, counts = thresholds[keep], counts[keep]
    if not len(counts):
        raise InvalidArgumentError("no threshold leaves any survivor")

    to_truth = np.cumsum(nearest_distances(ordered, ground_truth, backend))
    survivor_term = to_truth[counts - 1] / (2.0 * counts)

    if ground_truth.shape[0] * ordered.shape[0] <= MAX_DENSE_PAIRS:
        truth_term = _gt_to_prefix(ground_truth, ordered, counts) / (2.0 * ground_truth.shape[0])
    else:
        logger.info(f"Large sweep: rebuilding a search tree for each of {len(counts)} thresholds")
        truth_term = np.array([
            nearest_distances(ground_truth, ordered[:k], backend).mean() / 2.0 for k in counts
        ])

    report = AhdReport(thresholds=thresholds, counts=counts, ahd=truth_term + survivor_term)
    logger.info(f"Sweep: {len(counts)} thresholds, best AHD {report.best_ahd:.4e} "
                f"at t={report.best_threshold:.6g} ({report.best_count} survivors)")
    return report


def calibrate_threshold(runner: Callable[[PointCloud], object], calibration_cloud: PointCloud,
                        backend: str = 'kdtree') -> float:
    """Run the method on a labeled twin cloud and return its AHD-minimizing threshold"""
    scores = runner(calibration_cloud)
    report = threshold_sweep(scores, calibration_cloud.ground_truth(), calibration_cloud, backend=backend)
    return report.best_threshold


def evaluate_threshold(scores, threshold: float, cloud: PointCloud,
                       ground_truth: Optional[np.ndarray] = None,
                       backend: str = 'kdtree') -> Tuple[float, int]:
    """(AHD, survivor count) for a fixed threshold; AHD is NaN when nothing survives"""
    values = validate_aligned(score_values(scores), cloud.n)
    truth = cloud.ground_truth() if ground_truth is None else ground_truth
    survivors = values >= threshold
    count = int(survivors.sum())
    if count == 0:
        logger.warning(f"No point scores above the threshold {threshold:.6g}")
        return float('nan'), 0
    return average_hausdorff(cloud.points[survivors], truth, backend), count


# ---------------- Precision / recall ---------------- #
@dataclass
class PrCurve:
    counts: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    def entries(self) -> List[Tuple[int, float, float]]:
        return list(zip(self.counts.tolist(), self.precision.tolist(), self.recall.tolist()))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'survivors': self.counts, 'precision': self.precision, 'recall': self.recall})


def _ranked_hits(scores, positives) -> Tuple[np.ndarray, int]:
    values = score_values(scores)
    positives = validate_aligned(np.asarray(positives, dtype=bool), values.shape[0], "labels").astype(bool)
    # highest score first, equal scores by ascending point id
    order = np.lexsort((np.arange(values.shape[0]), -values))
    return np.cumsum(positives[order]), int(positives.sum())


def precision_recall_curve(scores, positives, counts: Sequence[int]) -> PrCurve:
    """Precision and recall of the top-k points for every k in counts"""
    hits, n_pos = _ranked_hits(scores, positives)
    counts = np.array([validate_target_count(k, hits.shape[0]) for k in counts], dtype=np.int64)
    tp = hits[counts - 1].astype(np.float64)
    recall = tp / n_pos if n_pos else np.zeros_like(tp)
    return PrCurve(counts=counts, precision=tp / counts, recall=recall)


def precision_recall_at_count(scores, positives, target_count: int) -> Tuple[float, float]:
    curve = precision_recall_curve(scores, positives, [target_count])
    return float(curve.precision[0]), float(curve.recall[0])


# ---------------- Convergence ---------------- #
def convergence_curve(snapshots: Sequence[np.ndarray], cloud: PointCloud,
                      calibration_snapshots: Optional[Sequence[np.ndarray]] = None,
                      calibration_cloud: Optional[PointCloud] = None,
                      backend: str = 'kdtree') -> List[Tuple[int, float]]:
    """
    (epoch, AHD) for every recorded epoch.

    With calibration snapshots the per-epoch threshold comes from the twin
    run and is applied to the evaluation snapshot; otherwise each snapshot
    is scored at its own best threshold.
    """
    if calibration_snapshots is not None:
        if calibration_cloud is None:
            raise InvalidArgumentError("calibration snapshots need their calibration cloud")
        if len(calibration_snapshots) != len(snapshots):
            raise InvalidArgumentError("snapshot histories differ in length",
                                       detail=f"{len(snapshots)} vs {len(calibration_snapshots)}")
    truth = cloud.ground_truth()
    curve = []
    for epoch, snapshot in enumerate(snapshots, start=1):
        if calibration_snapshots is None:
            ahd = threshold_sweep(snapshot, truth, cloud, backend=backend).best_ahd
        else:
            report = threshold_sweep(calibration_snapshots[epoch - 1], calibration_cloud.ground_truth(),
                                     calibration_cloud, backend=backend)
            ahd, _ = evaluate_threshold(snapshot, report.best_threshold, cloud, truth, backend)
        curve.append((epoch, ahd))
    return curve


def sample_subcube(cloud: PointCloud, fraction: float = 0.1, seed: int = 0) -> np.ndarray:
    """
    Boolean mask of the points inside a random axis-aligned box holding the
    given fraction of the bounding-box volume, with the box's aspect ratio.
    """
    if not 0 < fraction <= 1:
        raise InvalidArgumentError("fraction must be in (0, 1]", detail=f"got {fraction}")
    rng = np.random.default_rng(seed)
    lo = cloud.points.min(axis=0)
    span = cloud.points.max(axis=0) - lo
    edge = span * fraction ** (1.0 / cloud.dim)
    corner = lo + rng.random(cloud.dim) * (span - edge)
    return np.all((cloud.points >= corner) & (cloud.points <= corner + edge), axis=1)
