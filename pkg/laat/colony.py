"""
Ant colony engine - pheromone-reinforced, alignment-biased walks

Each epoch places a batch of ants on well-populated points, lets every ant
take N_steps jumps across the radius-neighborhood graph, deposits
pheromone on every visit and finally evaporates the whole field once.

Jump preference of i -> j:
    V = w_F * F_bar(j) + w_E * E_bar(i, j) + sum_c sign_c * w_c * A_bar_c(i, j)
and P(j | i) is the softmax of beta * V over the neighborhood of i.

Usage:
    from laat.colony import run_laat
    from laat.models import LaatConfig

    field = run_laat(cloud, LaatConfig(epochs=20))
    scores = field.values
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import List, Mapping, Optional, Sequence

import numpy as np
from numba import njit

from .exceptions import InvalidArgumentError, PlacementError, StuckAntError
from .geometry import NeighborhoodIndex, PointCloud, build_index, segment_sum
from .markov import softmax
from .models import LaatConfig, RewardTerm

logger = logging.getLogger(__name__)


@dataclass
class PheromoneField:
    """Per-point pheromone F plus optional per-epoch snapshots"""
    values: np.ndarray
    history: List[np.ndarray] = dc_field(default_factory=list)
    ants_per_epoch: List[int] = dc_field(default_factory=list)

    @classmethod
    def initial(cls, n: int) -> 'PheromoneField':
        return cls(values=np.ones(n, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def total(self) -> float:
        return float(self.values.sum())

    def frozen(self) -> 'PheromoneField':
        """Read-only copy used by batched walkers"""
        values = self.values.copy()
        values.setflags(write=False)
        return PheromoneField(values=values)


@dataclass(frozen=True)
class AntRoute:
    """Points visited by one ant, in order; the start is not counted"""
    start: int
    path: np.ndarray

    @property
    def steps(self) -> int:
        return self.path.shape[0]

    def counts(self, n: int) -> np.ndarray:
        """Multiplicity of every point in the route"""
        return np.bincount(self.path, minlength=n)


# ---------------- Preferences ---------------- #
def reward_preference(index: NeighborhoodIndex, values: np.ndarray) -> np.ndarray:
    """
    Relative attribute change (a_j - a_i) / sum |a_j' - a_i| per CSR entry.

    Neighborhoods where the attribute is constant contribute 0.
    """
    values = np.asarray(values, dtype=np.float64)
    rows = np.repeat(np.arange(index.n), index.sizes)
    diff = values[index.indices] - values[rows]
    denom = segment_sum(np.abs(diff), index.indptr)[rows]
    return np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)


def static_preference(index: NeighborhoodIndex, cfg: LaatConfig,
                      attributes: Optional[Mapping[str, np.ndarray]] = None,
                      rewards: Optional[Sequence[RewardTerm]] = None) -> np.ndarray:
    """Pheromone-independent part of V for every CSR entry"""
    static = cfg.effective_alignment_weight() * index.preference
    for term in (rewards or []):
        if attributes is None or term.attribute not in attributes:
            known = sorted(attributes) if attributes else []
            raise InvalidArgumentError(f"unknown attribute '{term.attribute}'", detail=f"available: {known}")
        static = static + term.sign * term.weight * reward_preference(index, attributes[term.attribute])
    return static


def jump_probabilities(index: NeighborhoodIndex, field: PheromoneField, cfg: LaatConfig,
                       i: int, static: Optional[np.ndarray] = None) -> np.ndarray:
    """
    P(j | i) for every neighbor j of i under the current pheromone field.

    static is the cached pheromone-independent preference of all entries
    (see static_preference); without it the plain kappa * E_bar term is used.
    """
    if not index.active[i] or index.sizes[i] == 0:
        raise StuckAntError(i)
    row = index.row(i)
    neighbors = index.indices[row]
    local = field.values[neighbors]
    total = local.sum()
    assert total > 0, "pheromone vanished inside a neighborhood"
    static_row = (cfg.kappa * index.preference[row]) if static is None else static[row]
    weight = (1.0 - cfg.kappa) if static is None else cfg.effective_pheromone_weight()
    return softmax(weight * (local / total) + static_row, cfg.beta)


# ---------------- Walk kernel ---------------- #
@njit(cache=True, nogil=True)
def _walk(indptr, indices, static, weight, field, beta, start, uniforms, path, buffer):
    current = start
    for step in range(uniforms.shape[0]):
        lo = indptr[current]
        hi = indptr[current + 1]
        if hi == lo:
            return current
        total = 0.0
        for e in range(lo, hi):
            total += field[indices[e]]
        scale = weight / total if total > 0.0 else 0.0
        vmax = -np.inf
        for e in range(lo, hi):
            v = scale * field[indices[e]] + static[e]
            buffer[e - lo] = v
            if v > vmax:
                vmax = v
        norm = 0.0
        for e in range(lo, hi):
            p = np.exp(beta * (buffer[e - lo] - vmax))
            buffer[e - lo] = p
            norm += p
        # inverse CDF
        target = uniforms[step] * norm
        acc = 0.0
        choice = hi - 1
        for e in range(lo, hi):
            acc += buffer[e - lo]
            if acc > target:
                choice = e
                break
        current = indices[choice]
        path[step] = current
    return -1


def walk_ant(index: NeighborhoodIndex, field: PheromoneField, cfg: LaatConfig, start: int,
             rng: np.random.Generator, static: Optional[np.ndarray] = None) -> AntRoute:
    """N_steps jumps from start against a frozen field"""
    if not 0 <= start < index.n or not index.active[start]:
        raise InvalidArgumentError("ant must start on an active point", detail=f"start {start}")
    if static is None:
        static = cfg.kappa * index.preference
        weight = 1.0 - cfg.kappa
    else:
        weight = cfg.effective_pheromone_weight()
    uniforms = rng.random(cfg.steps)
    path = np.empty(cfg.steps, dtype=np.int64)
    buffer = np.empty(max(index.max_size, 1), dtype=np.float64)
    stuck = _walk(index.indptr, index.indices, static, float(weight), field.values,
                  float(cfg.beta), int(start), uniforms, path, buffer)
    if stuck >= 0:
        raise StuckAntError(int(stuck))
    return AntRoute(start=int(start), path=path)


# ---------------- Placement ---------------- #
def subcube_divisions(k: int, dim: int) -> int:
    """Cells per axis of the grid closest to k cells in dim dimensions"""
    return max(1, int(round(k ** (1.0 / dim))))


def subcube_cells(points: np.ndarray, box: np.ndarray, k: int) -> np.ndarray:
    """Flat cell id of every point in a grid of about k cells over the bounding box of box"""
    dim = points.shape[1]
    divisions = subcube_divisions(k, dim)
    lo = box.min(axis=0)
    span = box.max(axis=0) - lo
    span[span == 0] = 1.0
    coords = np.floor((points - lo) / span * divisions).astype(np.int64)
    coords = np.clip(coords, 0, divisions - 1)
    return np.ravel_multi_index(coords.T, (divisions,) * dim)


def select_start_points(index: NeighborhoodIndex, cfg: LaatConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Ant starts among points whose neighborhood is at least the median size.

    median placement draws N_ants starts uniformly with replacement; subcube
    placement puts one ant in every bounding-box cell holding an eligible
    point, so the ant count follows the number of such cells.
    """
    eligible = np.flatnonzero(index.active & (index.sizes >= index.size_median))
    if not len(eligible):
        raise PlacementError("no point is eligible as an ant start",
                             detail=f"median neighborhood size {index.size_median:g}")
    if cfg.placement == 'median':
        return rng.choice(eligible, size=cfg.ants, replace=True)

    cells = subcube_cells(index.points[eligible], index.points[index.active], cfg.subcubes)
    order = np.argsort(cells, kind='stable')
    sorted_cells = cells[order]
    boundaries = np.flatnonzero(np.diff(sorted_cells)) + 1
    groups = np.split(eligible[order], boundaries)
    return np.array([group[rng.integers(len(group))] for group in groups], dtype=np.int64)


# ---------------- Pheromone updates ---------------- #
def deposit_pheromone(field: PheromoneField, route: AntRoute, cfg: LaatConfig) -> PheromoneField:
    """F_j += nu(j) * phi for every point of the route"""
    return deposit_counts(field, route.counts(field.n), cfg)


def deposit_counts(field: PheromoneField, counts: np.ndarray, cfg: LaatConfig) -> PheromoneField:
    field.values += cfg.phi * counts
    return field


def evaporate(field: PheromoneField, cfg: LaatConfig) -> PheromoneField:
    """F_j *= (1 - zeta) for all points"""
    field.values *= (1.0 - cfg.zeta)
    return field


# ---------------- Runs ---------------- #
def _ant_rng(seed: int, epoch: int, ant: int) -> np.random.Generator:
    # ant 0 is the placement stream
    return np.random.default_rng([seed, epoch, ant])


def _run(cloud: PointCloud, cfg: LaatConfig, static_builder, index: Optional[NeighborhoodIndex],
         threads: int) -> PheromoneField:
    start_time = time.time()
    if index is None:
        index = build_index(cloud, cfg.radius, backend=cfg.backend, min_neighbors=cfg.min_neighbors,
                            strict=cfg.strict, workers=threads)
    static = static_builder(index)
    field = PheromoneField.initial(cloud.n)
    batched = cfg.mode == 'batched'
    workers = threads if batched else 1

    logger.info(
        f"LAAT run: n={cloud.n} epochs={cfg.epochs} ants={cfg.ants} steps={cfg.steps} "
        f"beta={cfg.beta} kappa={cfg.kappa} phi={cfg.phi} zeta={cfg.zeta} "
        f"placement={cfg.placement} mode={cfg.mode} workers={workers}"
    )
    if cfg.placement == 'subcube':
        divisions = subcube_divisions(cfg.subcubes, index.dim)
        if divisions ** index.dim != cfg.subcubes:
            logger.info(f"Subcube grid: {divisions}^{index.dim} = {divisions ** index.dim} cells "
                        f"(requested {cfg.subcubes})")

    executor = ThreadPoolExecutor(max_workers=workers) if batched and workers > 1 else None
    try:
        for epoch in range(cfg.epochs):
            starts = select_start_points(index, cfg, _ant_rng(cfg.seed, epoch, 0))
            if batched:
                snapshot = field.frozen()

                def walk(item):
                    k, s = item
                    route = walk_ant(index, snapshot, cfg, s, _ant_rng(cfg.seed, epoch, k + 1), static)
                    return route.counts(field.n)

                items = list(enumerate(starts))
                results = executor.map(walk, items) if executor else map(walk, items)
                counts = np.zeros(field.n, dtype=np.int64)
                for c in results:
                    counts += c
                deposit_counts(field, counts, cfg)
            else:
                for k, s in enumerate(starts):
                    route = walk_ant(index, field, cfg, s, _ant_rng(cfg.seed, epoch, k + 1), static)
                    deposit_pheromone(field, route, cfg)
            evaporate(field, cfg)

            field.ants_per_epoch.append(len(starts))
            if cfg.record_history:
                field.history.append(field.values.copy())
            logger.debug(f"Epoch {epoch + 1}/{cfg.epochs}: total pheromone {field.total():.4f}")
            if (epoch + 1) % 10 == 0 or epoch + 1 == cfg.epochs:
                logger.info(f"Epoch {epoch + 1}/{cfg.epochs} done ({time.time() - start_time:.1f}s)")
    finally:
        if executor:
            executor.shutdown()

    return field


def run_laat(cloud: PointCloud, cfg: LaatConfig, index: Optional[NeighborhoodIndex] = None,
             threads: int = 1) -> PheromoneField:
    """Ant colony run with V = (1 - kappa) F_bar + kappa E_bar"""
    def plain(idx):
        return cfg.kappa * idx.preference

    plain_cfg = cfg.model_copy(update={'pheromone_weight': 1.0 - cfg.kappa, 'alignment_weight': cfg.kappa})
    return _run(cloud, plain_cfg, plain, index, threads)


def run_laat_multi_reward(cloud: PointCloud, cfg: LaatConfig,
                          rewards: Optional[Sequence[RewardTerm]] = None,
                          index: Optional[NeighborhoodIndex] = None,
                          threads: int = 1) -> PheromoneField:
    """
    Ant colony run whose jump preference also rewards attribute changes.

    rewards defaults to cfg.rewards; pheromone and alignment weights come from
    cfg.pheromone_weight / cfg.alignment_weight (default 1 - kappa and kappa).
    """
    rewards = list(cfg.rewards if rewards is None else rewards)
    for term in rewards:
        if term.attribute not in cloud.attributes:
            raise InvalidArgumentError(f"unknown attribute '{term.attribute}'",
                                       detail=f"available: {sorted(cloud.attributes)}")
    logger.info(f"Rewards: {', '.join(t.label() for t in rewards) or 'none'}")
    return _run(cloud, cfg, lambda idx: static_preference(idx, cfg, cloud.attributes, rewards), index, threads)
