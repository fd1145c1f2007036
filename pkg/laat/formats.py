"""
File formats - point clouds, score vectors, snapshots and manifests

Point clouds:
    CSV     one point per row; coordinate columns x0..x{D-1} (or x, y, z),
            optional integer 'label' column, every other column an attribute
    binary  b"LAATPC1", u32 n, u32 D, u32 attribute count, then row-major f64
            coordinates and one f64 channel per attribute (little endian)

Score vectors (pheromone fields and stationary vectors share the schema):
    CSV     point_id,score
    binary  b"LAATPH1", u32 n, then n f64 values

A path ending in .csv selects CSV; anything else is binary.
"""

import hashlib
import logging
import os
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .exceptions import DataFormatError, SchemaError
from .geometry import PointCloud
from .models import RunManifest

logger = logging.getLogger(__name__)

CLOUD_MAGIC = b"LAATPC1"
SCORE_MAGIC = b"LAATPH1"
_CLOUD_HEADER = struct.Struct('<7sIII')
_SCORE_HEADER = struct.Struct('<7sI')
LABEL_COLUMN = 'label'
_XYZ = ('x', 'y', 'z')

PathLike = Union[str, os.PathLike]


def is_csv(path: PathLike) -> bool:
    return str(path).lower().endswith('.csv')


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise DataFormatError(path, f"cannot read file ({e.strerror or e})") from e


def _read_csv(path: PathLike) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError as e:
        raise DataFormatError(path, "file not found") from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(path, f"cannot parse CSV ({e})") from e


def _ensure_parent(path: PathLike):
    parent = Path(path).parent
    if str(parent):
        parent.mkdir(parents=True, exist_ok=True)


def _coordinate_columns(columns: Sequence[str]) -> List[str]:
    numbered = []
    while f"x{len(numbered)}" in columns:
        numbered.append(f"x{len(numbered)}")
    if numbered:
        return numbered
    return [c for c in _XYZ if c in columns]


# ---------------- Point clouds ---------------- #
def read_cloud(path: PathLike) -> PointCloud:
    """Load a point cloud, choosing the codec by file suffix"""
    cloud = _read_cloud_csv(path) if is_csv(path) else _read_cloud_binary(path)
    logger.info(f"Loaded {cloud.n} points (D={cloud.dim}, attributes={list(cloud.attributes)}) from {path}")
    return cloud


def _read_cloud_csv(path: PathLike) -> PointCloud:
    frame = _read_csv(path)
    coords = _coordinate_columns(list(frame.columns))
    if len(coords) < 2:
        raise DataFormatError(path, "need coordinate columns x0, x1, ... (or x, y, z)")
    rest = [c for c in frame.columns if c not in coords]
    try:
        points = frame[coords].to_numpy(dtype=np.float64)
        labels = frame[LABEL_COLUMN].to_numpy(dtype=np.int64) if LABEL_COLUMN in rest else None
        attributes = {c: frame[c].to_numpy(dtype=np.float64) for c in rest if c != LABEL_COLUMN}
    except (ValueError, TypeError) as e:
        raise DataFormatError(path, f"non-numeric value ({e})") from e
    return PointCloud(points=points, attributes=attributes, labels=labels)


def _read_cloud_binary(path: PathLike) -> PointCloud:
    raw = _read_bytes(path)
    if len(raw) < _CLOUD_HEADER.size:
        raise DataFormatError(path, "truncated header")
    magic, n, dim, n_attr = _CLOUD_HEADER.unpack_from(raw)
    if magic != CLOUD_MAGIC:
        raise DataFormatError(path, f"bad magic {magic!r}, expected {CLOUD_MAGIC!r}")
    expected = _CLOUD_HEADER.size + 8 * n * (dim + n_attr)
    if len(raw) != expected:
        raise DataFormatError(path, f"size {len(raw)} bytes, header implies {expected}")
    body = np.frombuffer(raw, dtype='<f8', offset=_CLOUD_HEADER.size)
    points = body[:n * dim].reshape(n, dim).astype(np.float64)
    channels = body[n * dim:].reshape(n_attr, n)
    attributes = {f"attr{k}": channels[k].astype(np.float64) for k in range(n_attr)}
    return PointCloud(points=points, attributes=attributes)


def write_cloud(cloud: PointCloud, path: PathLike) -> str:
    """Write a point cloud; labels survive only in CSV"""
    _ensure_parent(path)
    if is_csv(path):
        frame = pd.DataFrame(cloud.points, columns=[f"x{d}" for d in range(cloud.dim)])
        for name, channel in cloud.attributes.items():
            frame[name] = channel
        if cloud.labels is not None:
            frame[LABEL_COLUMN] = cloud.labels
        frame.to_csv(path, index=False, float_format='%.17g')
    else:
        if cloud.labels is not None:
            logger.warning(f"Binary point-cloud format has no label channel; labels not written to {path}")
        with open(path, 'wb') as f:
            f.write(_CLOUD_HEADER.pack(CLOUD_MAGIC, cloud.n, cloud.dim, len(cloud.attributes)))
            f.write(cloud.points.astype('<f8').tobytes())
            for channel in cloud.attributes.values():
                f.write(channel.astype('<f8').tobytes())
    return str(path)


# ---------------- Score vectors ---------------- #
def read_scores(path: PathLike, n_points: Optional[int] = None) -> np.ndarray:
    """Load a score vector; n_points checks alignment with a cloud"""
    if is_csv(path):
        frame = _read_csv(path)
        if 'point_id' not in frame.columns or 'score' not in frame.columns:
            raise DataFormatError(path, "score CSV needs columns point_id,score")
        frame = frame.sort_values('point_id', kind='stable')
        ids = frame['point_id'].to_numpy()
        if not np.array_equal(ids, np.arange(len(frame))):
            raise SchemaError("point ids must be 0..n-1, each exactly once", detail=str(path))
        scores = frame['score'].to_numpy(dtype=np.float64)
    else:
        raw = _read_bytes(path)
        if len(raw) < _SCORE_HEADER.size:
            raise DataFormatError(path, "truncated header")
        magic, n = _SCORE_HEADER.unpack_from(raw)
        if magic != SCORE_MAGIC:
            raise DataFormatError(path, f"bad magic {magic!r}, expected {SCORE_MAGIC!r}")
        if len(raw) != _SCORE_HEADER.size + 8 * n:
            raise DataFormatError(path, f"size {len(raw)} bytes, header implies {_SCORE_HEADER.size + 8 * n}")
        scores = np.frombuffer(raw, dtype='<f8', offset=_SCORE_HEADER.size).astype(np.float64)
    if n_points is not None and scores.shape[0] != n_points:
        raise SchemaError("score vector length does not match the point cloud",
                          detail=f"{scores.shape[0]} scores for {n_points} points ({path})")
    return scores


def write_scores(scores: np.ndarray, path: PathLike) -> str:
    scores = np.asarray(scores, dtype=np.float64)
    _ensure_parent(path)
    if is_csv(path):
        frame = pd.DataFrame({'point_id': np.arange(scores.shape[0]), 'score': scores})
        frame.to_csv(path, index=False, float_format='%.17g')
    else:
        with open(path, 'wb') as f:
            f.write(_SCORE_HEADER.pack(SCORE_MAGIC, scores.shape[0]))
            f.write(scores.astype('<f8').tobytes())
    return str(path)


def write_snapshots(history: Sequence[np.ndarray], directory: PathLike, suffix: str = '.csv') -> List[str]:
    """One score file per epoch: epoch_0001.csv, epoch_0002.csv, ..."""
    Path(directory).mkdir(parents=True, exist_ok=True)
    return [write_scores(values, Path(directory) / f"epoch_{epoch:04d}{suffix}")
            for epoch, values in enumerate(history, start=1)]


def read_snapshots(directory: PathLike, n_points: Optional[int] = None) -> List[np.ndarray]:
    paths = sorted(Path(directory).glob('epoch_*'))
    if not paths:
        raise DataFormatError(directory, "no epoch_* snapshot files")
    return [read_scores(p, n_points) for p in paths]


def write_report(frame: pd.DataFrame, path: PathLike) -> str:
    _ensure_parent(path)
    frame.to_csv(path, index=False, float_format='%.10g')
    return str(path)


# ---------------- Manifests ---------------- #
def file_digest(path: PathLike) -> str:
    """sha256 hex digest of a file"""
    sha = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            sha.update(block)
    return sha.hexdigest()


def digests(paths: Sequence[PathLike]) -> Dict[str, str]:
    return {str(p): file_digest(p) for p in paths if Path(p).is_file()}


def manifest_path(output: PathLike) -> str:
    return f"{output}.manifest.json"


def write_manifest(manifest: RunManifest, path: PathLike) -> str:
    _ensure_parent(path)
    Path(path).write_text(manifest.model_dump_json(indent=2), encoding='utf-8')
    return str(path)


def read_manifest(path: PathLike) -> RunManifest:
    try:
        return RunManifest.model_validate_json(Path(path).read_text(encoding='utf-8'))
    except OSError as e:
        raise DataFormatError(path, f"cannot read manifest ({e})") from e
    except ValueError as e:
        raise DataFormatError(path, f"invalid manifest ({e})") from e
