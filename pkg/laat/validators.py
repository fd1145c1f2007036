"""
Validation utilities for the LAAT toolkit
"""

import re
from typing import Any, Dict, List, Mapping, Optional, Type, TypeVar

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from .exceptions import ConfigurationError, InvalidArgumentError, SchemaError
from .models import RewardTerm

ModelT = TypeVar('ModelT', bound=BaseModel)

_REWARD_PATTERN = re.compile(r'^\s*([A-Za-z_][\w\-]*)\s*:\s*([+-])\s*([0-9]*\.?[0-9]+(?:[eE][+-]?\d+)?)\s*$')


def build_model(model_cls: Type[ModelT], values: Mapping[str, Any]) -> ModelT:
    """Validate settings, reporting every offending field on its own line"""
    try:
        return model_cls.model_validate(dict(values))
    except ValidationError as e:
        problems = []
        for err in e.errors():
            field = '.'.join(str(part) for part in err['loc']) or '<root>'
            problems.append(f"{field}: {err['msg']} (got {err.get('input')!r})")
        raise ConfigurationError(problems) from e


def parse_reward(text: str) -> RewardTerm:
    """Parse 'attribute:+weight' / 'attribute:-weight' into a RewardTerm"""
    match = _REWARD_PATTERN.match(text or '')
    if not match:
        raise ConfigurationError([f"reward: expected 'name:+w' or 'name:-w', got {text!r}"])
    name, sign, weight = match.groups()
    return RewardTerm(attribute=name, sign=1 if sign == '+' else -1, weight=float(weight))


def normalize_key(key: str) -> str:
    """Config-file keys are case-insensitive and accept '-' for '_'"""
    return key.strip().lower().replace('-', '_')


def read_config_file(path: str) -> Dict[str, Any]:
    """
    Read a flat KEY=VALUE config file.

    Values stay strings; pydantic coerces them. A 'rewards' key holds a
    comma-separated list of reward terms.
    """
    raw = dotenv_values(path)
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        if value is None:
            continue
        norm = normalize_key(key)
        if norm == 'rewards':
            values[norm] = [parse_reward(part) for part in value.split(',') if part.strip()]
        else:
            values[norm] = value
    return values


def validate_radius(radius: float) -> float:
    """Radius must be a positive finite number"""
    if not np.isfinite(radius) or radius <= 0:
        raise InvalidArgumentError("radius must be positive", detail=f"got {radius}")
    return float(radius)


def validate_point_set(points: Any, name: str = "point set") -> np.ndarray:
    """Coerce to a nonempty (m, D) float array"""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise InvalidArgumentError(f"{name} must be a nonempty (m, D) array", detail=f"shape {arr.shape}")
    return arr


def validate_aligned(scores: np.ndarray, n_points: int, what: str = "scores") -> np.ndarray:
    """Scores must have exactly one entry per point"""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.shape[0] != n_points:
        raise SchemaError(
            f"{what} length does not match the point cloud",
            detail=f"{scores.shape[0]} values for {n_points} points",
        )
    return scores


def validate_target_count(target_count: int, n_points: int) -> int:
    if not 1 <= int(target_count) <= n_points:
        raise InvalidArgumentError("target count out of range", detail=f"{target_count} not in [1, {n_points}]")
    return int(target_count)


def parse_int_list(text: Optional[str]) -> List[int]:
    """Parse '100,200,300' (or 'a:b:step') into a list of ints"""
    if not text:
        return []
    text = text.strip()
    try:
        if ':' in text:
            parts = [int(p) for p in text.split(':')]
            if len(parts) != 3 or parts[2] <= 0:
                raise ConfigurationError([f"range must be start:stop:step, got {text!r}"])
            return list(range(parts[0], parts[1] + 1, parts[2]))
        return [int(p) for p in text.split(',') if p.strip()]
    except ValueError as e:
        raise ConfigurationError([f"expected integers, got {text!r}"]) from e


def parse_float_list(text: Optional[str]) -> List[float]:
    """Parse '0.1,0.5,2' into a list of finite floats"""
    if not text:
        return []
    try:
        values = [float(p) for p in text.split(',') if p.strip()]
    except ValueError as e:
        raise ConfigurationError([f"expected comma-separated numbers, got {text!r}"]) from e
    if not all(np.isfinite(values)):
        raise ConfigurationError([f"thresholds must be finite, got {text!r}"])
    return values
