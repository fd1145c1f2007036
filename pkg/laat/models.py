"""
Pydantic models for LAAT run settings and run manifests
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class RewardTerm(BaseModel):
    """One attribute reward of the multi-reward jump preference"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    attribute: str = Field(..., min_length=1, description="Name of the per-point attribute channel")
    sign: Literal[1, -1] = Field(1, description="+1 rewards increasing values, -1 decreasing ones")
    weight: float = Field(..., ge=0.0, description="Reward weight kappa_c")

    def label(self) -> str:
        return f"{self.attribute}:{'+' if self.sign > 0 else '-'}{self.weight:g}"


class LaatConfig(BaseModel):
    """Parameters of one ant-colony run; defaults are the benchmark settings"""
    model_config = ConfigDict(extra='forbid')

    epochs: int = Field(100, gt=0, description="N_epoch")
    ants: int = Field(100, gt=0, description="N_ants")
    steps: int = Field(2500, gt=0, description="N_steps per ant")
    radius: float = Field(0.2, gt=0.0, description="Neighborhood radius r")
    phi: float = Field(0.05, gt=0.0, description="Pheromone deposited per visit")
    zeta: float = Field(0.1, gt=0.0, lt=1.0, description="Evaporation rate")
    beta: float = Field(10.0, gt=0.0, description="Inverse temperature")
    kappa: float = Field(0.5, ge=0.0, le=1.0, description="Alignment / pheromone mixing")
    seed: int = Field(0, description="Root seed of the pseudorandom stream")

    placement: Literal['median', 'subcube'] = Field('median', description="Ant start placement")
    subcubes: int = Field(200, gt=0, description="Cell count k for subcube placement")
    mode: Literal['sequential', 'batched'] = Field('sequential', description="Pheromone update schedule")
    threads: int = Field(1, ge=1, description="Walker threads (batched mode only)")

    min_neighbors: Optional[int] = Field(None, ge=1, description="Degeneracy filter threshold, default D")
    backend: Literal['kdtree', 'faiss', 'brute'] = Field('kdtree', description="Radius query backend")
    strict: bool = Field(False, description="Raise on coincident points instead of skipping them")
    record_history: bool = Field(False, description="Keep a pheromone snapshot after every epoch")

    pheromone_weight: Optional[float] = Field(None, ge=0.0, description="kappa_1, default 1 - kappa")
    alignment_weight: Optional[float] = Field(None, ge=0.0, description="kappa_2, default kappa")
    rewards: List[RewardTerm] = Field(default_factory=list, description="Attribute rewards")

    def effective_pheromone_weight(self) -> float:
        return 1.0 - self.kappa if self.pheromone_weight is None else self.pheromone_weight

    def effective_alignment_weight(self) -> float:
        return self.kappa if self.alignment_weight is None else self.alignment_weight


class KernelSettings(BaseModel):
    """Settings of the fixed-kernel Markov chain baseline"""
    model_config = ConfigDict(extra='forbid')

    flavor: Literal['alignment', 'distance'] = 'alignment'
    beta: float = Field(10.0, gt=0.0)
    radius: float = Field(0.2, gt=0.0)
    tol: float = Field(1e-10, gt=0.0)
    max_iter: int = Field(100_000, gt=0)
    refine: bool = Field(True, description="Backward-iteration refinement when the power method stalls")
    min_neighbors: Optional[int] = Field(None, ge=1)
    backend: Literal['kdtree', 'faiss', 'brute'] = 'kdtree'


class GenSpec(BaseModel):
    """Synthetic benchmark request"""
    model_config = ConfigDict(extra='forbid')

    family: Literal['two-arms', 'four-cylinders', 'voronoi-web']
    seed: int = 0
    noise_seed: Optional[int] = Field(None, description="Seed of the background noise, default seed")
    n_points: int = Field(262_144, gt=0, description="voronoi-web only")
    n_centers: int = Field(32, ge=4, description="voronoi-web only")
    mix_ratio: float = Field(0.367, gt=0.0, description="voronoi-web only: positives / negatives")
    edge: float = Field(200.0, gt=0.0, description="voronoi-web only: cube edge length")
    jitter: float = Field(0.0, ge=0.0, description="voronoi-web only: gaussian scatter of wall/filament points")


class RunManifest(BaseModel):
    """Everything needed to reproduce one CLI command"""
    command: str = Field(..., description="Subcommand name")
    argv: List[str] = Field(default_factory=list, description="Arguments after the program name")
    config: Dict[str, Any] = Field(default_factory=dict, description="Merged settings actually used")
    seed: Optional[int] = None
    input_digests: Dict[str, str] = Field(default_factory=dict, description="sha256 of every input file")
    tool_version: str
    started_at: str
    duration_s: float = 0.0
    peak_memory_mb: float = 0.0
    outputs: List[str] = Field(default_factory=list)
    output_digests: Dict[str, str] = Field(default_factory=dict)
    notes: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode='after')
    def _outputs_have_digests(self):
        missing = [p for p in self.output_digests if p not in self.outputs]
        if missing:
            raise ValueError(f"digests recorded for unknown outputs: {missing}")
        return self
