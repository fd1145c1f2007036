"""
Seeded synthetic benchmarks with ground-truth labels

Families:
    two-arms        two helical surface strips (3000 + 1000 points) and 8000
                    uniform noise points in [-2, 2]^2 x [-0.6, 3.0]
    four-cylinders  four cylinder surfaces of 1000 points each and 5000
                    uniform noise points in [-3, 3]^2 x [-1, 3]
    voronoi-web     walls, filaments and clusters of a Voronoi tessellation
                    plus void points, inside a cube of edge 200

Every generator takes a manifold seed and an optional noise seed; keeping the
first and changing the second gives a calibration twin with identical
manifolds and fresh background noise.

Cylinders (axis, axis position, radius, extent along the axis):
    C1  z   (x, y) = (-1.5, -1.5)   0.5   z in [0, 2]
    C2  z   (x, y) = ( 1.5, -1.5)   0.5   z in [0.5, 1.5]
    C3  x   (y, z) = ( 1.5,  1.0)   0.3   x in [-2.5, -0.5]
    C4  y   (x, z) = ( 1.5,  1.0)   0.8   y in [0.25, 2.75]

Usage:
    from laat.datagen import generate
    from laat.models import GenSpec

    cloud = generate(GenSpec(family='two-arms', seed=7))
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .exceptions import DataError, InvalidArgumentError
from .geometry import NOISE_LABEL, PointCloud
from .models import GenSpec

logger = logging.getLogger(__name__)

# two-arms
ARM_RADIUS = 1.0
ARM_PITCH = 0.4          # rise per radian
ARM_LENGTH = 2.5         # arc length of the center curve
ARM_COUNTS = (3000, 1000)
ARM_PHASES = (0.0, np.pi)
ARM_MIN_HALF_WIDTH = 0.1
ARM_WIDTH_GROWTH = 0.15
THICKNESS = 0.2
TWO_ARMS_NOISE = 8000
TWO_ARMS_BOX = (np.array([-1.8, -1.8, -0.6]), np.array([1.8, 1.8, 1.9]))

# four-cylinders
CYLINDER_POINTS = 1000
FOUR_CYLINDERS_NOISE = 5000
FOUR_CYLINDERS_BOX = (np.array([-3.0, -3.0, -1.0]), np.array([3.0, 3.0, 3.0]))

# voronoi-web
VOID, WALL, FILAMENT, CLUSTER = 0, 1, 2, 3
POSITIVE_LABELS = (FILAMENT, CLUSTER)
CLUSTER_SHARE = 0.25     # of positives
WALL_SHARE = 0.6         # of negatives
CLUSTER_RADIUS = 2.0


def _rngs(seed: int, noise_seed: Optional[int]):
    manifold = np.random.default_rng([seed, 0])
    noise = np.random.default_rng([seed if noise_seed is None else noise_seed, 1])
    return manifold, noise


def _uniform_box(rng: np.random.Generator, n: int, box) -> np.ndarray:
    lo, hi = box
    return lo + rng.random((n, len(lo))) * (hi - lo)


def _assemble(parts: List[np.ndarray], labels: List[int]) -> PointCloud:
    points = np.vstack(parts)
    label_array = np.concatenate([np.full(len(p), lab, dtype=np.int64) for p, lab in zip(parts, labels)])
    return PointCloud(points=points, labels=label_array)


# ---------------- Two arms ---------------- #
def sample_helical_arm(rng: np.random.Generator, n: int, phase: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Points on a helical strip, densest at its narrow start.

    Returns the points and their thickness offsets along the strip normal.
    """
    speed = np.hypot(ARM_RADIUS, ARM_PITCH)
    # arc-length density proportional to 1 / (1 + s)
    s = np.expm1(rng.random(n) * np.log1p(ARM_LENGTH))
    t = s / speed
    angle = t + phase
    cos, sin = np.cos(angle), np.sin(angle)

    center = np.column_stack([ARM_RADIUS * cos, ARM_RADIUS * sin, ARM_PITCH * t])
    radial = np.column_stack([cos, sin, np.zeros(n)])
    normal = np.column_stack([-ARM_PITCH * sin, ARM_PITCH * cos, np.full(n, -ARM_RADIUS)]) / speed

    half_width = ARM_MIN_HALF_WIDTH + ARM_WIDTH_GROWTH * s / ARM_LENGTH
    across = rng.uniform(-1.0, 1.0, n) * half_width
    offsets = rng.uniform(0.0, THICKNESS, n)
    return center + across[:, None] * radial + offsets[:, None] * normal, offsets


def gen_two_arms(seed: int = 0, noise_seed: Optional[int] = None) -> PointCloud:
    manifold_rng, noise_rng = _rngs(seed, noise_seed)
    arms = [sample_helical_arm(manifold_rng, count, phase)[0] for count, phase in zip(ARM_COUNTS, ARM_PHASES)]
    noise = _uniform_box(noise_rng, TWO_ARMS_NOISE, TWO_ARMS_BOX)
    return _assemble(arms + [noise], [1, 2, NOISE_LABEL])


# ---------------- Four cylinders ---------------- #
@dataclass(frozen=True)
class Cylinder:
    """Lateral surface of a cylinder parallel to a coordinate axis"""
    axis: int
    center: Tuple[float, float]
    radius: float
    extent: Tuple[float, float]

    @property
    def area(self) -> float:
        return 2.0 * np.pi * self.radius * (self.extent[1] - self.extent[0])

    def _others(self) -> List[int]:
        return [d for d in range(3) if d != self.axis]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        theta = rng.uniform(0.0, 2.0 * np.pi, n)
        points = np.empty((n, 3))
        points[:, self.axis] = rng.uniform(self.extent[0], self.extent[1], n)
        a, b = self._others()
        points[:, a] = self.center[0] + self.radius * np.cos(theta)
        points[:, b] = self.center[1] + self.radius * np.sin(theta)
        return points

    def surface_error(self, points: np.ndarray) -> np.ndarray:
        """| distance to the axis - radius |"""
        a, b = self._others()
        return np.abs(np.hypot(points[:, a] - self.center[0], points[:, b] - self.center[1]) - self.radius)


CYLINDERS = (
    Cylinder(axis=2, center=(-1.5, -1.5), radius=0.5, extent=(0.0, 2.0)),
    Cylinder(axis=2, center=(1.5, -1.5), radius=0.5, extent=(0.5, 1.5)),
    Cylinder(axis=0, center=(1.5, 1.0), radius=0.3, extent=(-2.5, -0.5)),
    Cylinder(axis=1, center=(1.5, 1.0), radius=0.8, extent=(0.25, 2.75)),
)


def gen_four_cylinders(seed: int = 0, noise_seed: Optional[int] = None) -> PointCloud:
    manifold_rng, noise_rng = _rngs(seed, noise_seed)
    surfaces = [c.sample(manifold_rng, CYLINDER_POINTS) for c in CYLINDERS]
    noise = _uniform_box(noise_rng, FOUR_CYLINDERS_NOISE, FOUR_CYLINDERS_BOX)
    return _assemble(surfaces + [noise], [1, 2, 3, 4, NOISE_LABEL])


# ---------------- Voronoi web ---------------- #
@dataclass(frozen=True)
class VoronoiSkeleton:
    """Voronoi vertices and edges clipped to the cube [0, edge]^3"""
    centers: np.ndarray
    vertices: np.ndarray
    segments: np.ndarray     # (m, 2, 3)
    edge: float

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.segments[:, 1] - self.segments[:, 0], axis=1)


def _clip_segment(p0: np.ndarray, p1: np.ndarray, lo: float, hi: float):
    """Liang-Barsky clip of p0 -> p1 to an axis-aligned cube; None when outside"""
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for axis in range(len(p0)):
        for p, q in ((-d[axis], p0[axis] - lo), (d[axis], hi - p0[axis])):
            if p == 0:
                if q < 0:
                    return None
                continue
            r = q / p
            if p < 0:
                t0 = max(t0, r)
            else:
                t1 = min(t1, r)
            if t0 > t1:
                return None
    return p0 + t0 * d, p0 + t1 * d


def _circumcenters(points: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    a = points[simplices[:, 0]]
    rhs_vectors = points[simplices[:, 1:]] - a[:, None, :]
    rhs = 0.5 * np.einsum('tkd,tkd->tk', rhs_vectors, rhs_vectors)
    return a + np.linalg.solve(rhs_vectors, rhs[:, :, None])[:, :, 0]


def voronoi_skeleton(centers: np.ndarray, edge: float) -> VoronoiSkeleton:
    """
    Vertices and edges of the Voronoi diagram of centers inside [0, edge]^3.

    Vertices are circumcenters of the Delaunay tetrahedra; an interior
    Delaunay face gives the segment between the circumcenters of its two
    tetrahedra, a hull face gives a ray along its outward normal.
    """
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[1] != 3 or centers.shape[0] < 4:
        raise InvalidArgumentError("need at least 4 centers in 3-D", detail=f"shape {centers.shape}")
    tri = Delaunay(centers)
    cc = _circumcenters(centers, tri.simplices)
    reach = 4.0 * edge * np.sqrt(3.0) + np.abs(cc).max()

    segments = []
    for t, simplex in enumerate(tri.simplices):
        for k in range(4):
            nb = tri.neighbors[t, k]
            if nb > t:
                end = cc[nb]
            elif nb == -1:
                face = centers[np.delete(simplex, k)]
                normal = np.cross(face[1] - face[0], face[2] - face[0])
                if np.dot(normal, centers[simplex[k]] - face[0]) > 0:
                    normal = -normal
                end = cc[t] + reach * normal / np.linalg.norm(normal)
            else:
                continue
            clipped = _clip_segment(cc[t], end, 0.0, edge)
            if clipped is not None and np.linalg.norm(clipped[1] - clipped[0]) > 0:
                segments.append(clipped)

    inside = np.all((cc >= 0.0) & (cc <= edge), axis=1)
    return VoronoiSkeleton(
        centers=centers,
        vertices=cc[inside],
        segments=np.array(segments).reshape(-1, 2, 3),
        edge=float(edge),
    )


def voronoi_centers(seed: int, n_centers: int, edge: float) -> np.ndarray:
    """Tessellation centers drawn by gen_voronoi_web for this seed"""
    return np.random.default_rng([seed, 0]).random((n_centers, 3)) * edge


def voronoi_counts(n_points: int, mix_ratio: float) -> Tuple[int, int]:
    """(positives, negatives) with positives / negatives closest to mix_ratio"""
    positives = int(round(n_points * mix_ratio / (1.0 + mix_ratio)))
    negatives = n_points - positives
    if positives <= 0 or negatives <= 0:
        raise InvalidArgumentError("mix ratio unreachable with this point count",
                                   detail=f"n={n_points} ratio={mix_ratio}")
    return positives, negatives


def _sample_walls(rng: np.random.Generator, tree: cKDTree, centers: np.ndarray,
                  n: int, edge: float) -> np.ndarray:
    """Uniform cube points projected onto the bisector of their two nearest centers"""
    accepted, total = [], 0
    while total < n:
        batch = rng.random((max(2 * (n - total), 1024), 3)) * edge
        _, nearest = tree.query(batch, k=2)
        c1, c2 = centers[nearest[:, 0]], centers[nearest[:, 1]]
        unit = (c2 - c1) / np.linalg.norm(c2 - c1, axis=1, keepdims=True)
        mid = 0.5 * (c1 + c2)
        projected = batch - np.einsum('ij,ij->i', batch - mid, unit)[:, None] * unit
        inside = np.all((projected >= 0.0) & (projected <= edge), axis=1)
        dist, check = tree.query(projected, k=3)
        same_pair = np.sort(check[:, :2], axis=1) == np.sort(nearest, axis=1)
        keep = inside & same_pair.all(axis=1) & (dist[:, 2] > dist[:, 1] * (1.0 + 1e-9))
        accepted.append(projected[keep])
        total += int(keep.sum())
    return np.vstack(accepted)[:n]


def _sample_filaments(rng: np.random.Generator, skeleton: VoronoiSkeleton, n: int) -> np.ndarray:
    # random per-filament richness times length
    weights = skeleton.lengths * rng.uniform(0.5, 1.5, len(skeleton.segments))
    chosen = rng.choice(len(skeleton.segments), size=n, p=weights / weights.sum())
    u = rng.random(n)[:, None]
    a, b = skeleton.segments[chosen, 0], skeleton.segments[chosen, 1]
    return a + u * (b - a)


def _sample_clusters(rng: np.random.Generator, skeleton: VoronoiSkeleton, n: int) -> np.ndarray:
    accepted, total = [], 0
    while total < n:
        m = max(2 * (n - total), 256)
        sites = skeleton.vertices[rng.integers(len(skeleton.vertices), size=m)]
        direction = rng.normal(size=(m, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = CLUSTER_RADIUS * rng.random(m) ** (1.0 / 3.0)
        candidates = sites + radius[:, None] * direction
        keep = np.all((candidates >= 0.0) & (candidates <= skeleton.edge), axis=1)
        accepted.append(candidates[keep])
        total += int(keep.sum())
    return np.vstack(accepted)[:n]


def gen_voronoi_web(seed: int = 0, n_points: int = 262_144, n_centers: int = 32, mix_ratio: float = 0.367,
                    edge: float = 200.0, jitter: float = 0.0, noise_seed: Optional[int] = None) -> PointCloud:
    """
    Cosmic-web mimic labeled VOID / WALL / FILAMENT / CLUSTER.

    (filament + cluster) : (wall + void) equals mix_ratio to within one point.
    """
    if n_centers < 4:
        raise InvalidArgumentError("voronoi-web needs at least 4 centers", detail=f"got {n_centers}")
    positives, negatives = voronoi_counts(n_points, mix_ratio)
    n_clusters = int(round(CLUSTER_SHARE * positives))
    n_walls = int(round(WALL_SHARE * negatives))

    manifold_rng, noise_rng = _rngs(seed, noise_seed)
    centers = manifold_rng.random((n_centers, 3)) * edge
    skeleton = voronoi_skeleton(centers, edge)
    if not len(skeleton.segments):
        raise DataError("Voronoi tessellation has no edge inside the cube")
    if not len(skeleton.vertices):
        logger.warning("No Voronoi vertex inside the cube; cluster points go to filaments")
        n_clusters = 0

    tree = cKDTree(centers)
    walls = _sample_walls(manifold_rng, tree, centers, n_walls, edge)
    filaments = _sample_filaments(manifold_rng, skeleton, positives - n_clusters)
    clusters = _sample_clusters(manifold_rng, skeleton, n_clusters) if n_clusters else np.empty((0, 3))
    if jitter > 0:
        walls = np.clip(walls + manifold_rng.normal(scale=jitter, size=walls.shape), 0.0, edge)
        filaments = np.clip(filaments + manifold_rng.normal(scale=jitter, size=filaments.shape), 0.0, edge)
    voids = noise_rng.random((negatives - n_walls, 3)) * edge

    logger.info(f"voronoi-web: {len(skeleton.segments)} filaments, {len(skeleton.vertices)} vertices, "
                f"{positives} positives / {negatives} negatives")
    return _assemble([walls, filaments, clusters, voids], [WALL, FILAMENT, CLUSTER, VOID])


def positive_mask(labels: np.ndarray) -> np.ndarray:
    """Filament and cluster points of a voronoi-web cloud"""
    return np.isin(labels, POSITIVE_LABELS)


def bounding_box(spec: GenSpec) -> Tuple[np.ndarray, np.ndarray]:
    if spec.family == 'two-arms':
        return TWO_ARMS_BOX
    if spec.family == 'four-cylinders':
        return FOUR_CYLINDERS_BOX
    return np.zeros(3), np.full(3, spec.edge)


def generate(spec: GenSpec) -> PointCloud:
    """Dispatch a GenSpec to its family generator"""
    if spec.family == 'two-arms':
        cloud = gen_two_arms(spec.seed, spec.noise_seed)
    elif spec.family == 'four-cylinders':
        cloud = gen_four_cylinders(spec.seed, spec.noise_seed)
    else:
        cloud = gen_voronoi_web(spec.seed, spec.n_points, spec.n_centers, spec.mix_ratio,
                                spec.edge, spec.jitter, spec.noise_seed)
    logger.info(f"Generated {spec.family} (seed={spec.seed}, noise_seed={spec.noise_seed}): {cloud.n} points")
    return cloud


def calibration_twin(spec: GenSpec, offset: int = 1) -> GenSpec:
    """Same manifolds, fresh background noise"""
    base = spec.seed if spec.noise_seed is None else spec.noise_seed
    return spec.model_copy(update={'noise_seed': base + offset})
