from pydantic import BaseModel
from typing import Any, Dict, List, Optional, Tuple

from qmap.schemas.layer import ArchitectureSpec


class ArrayEntry(BaseModel):
    store: str
    name: str
    shape: Tuple[int, ...]
    file: str


class OptimizerManifest(BaseModel):
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float
    step: int


class CheckpointManifest(BaseModel):
    format_version: int = 1
    spec_name: str
    architecture: ArchitectureSpec
    seed: int
    step: int = 0
    optimizer: Optional[OptimizerManifest] = None
    arrays: List[ArrayEntry] = []
    # trainer counters, sampler RNG state and run settings
    extra: Dict[str, Any] = {}


class BufferManifest(BaseModel):
    format_version: int = 1
    count: int
    capacity: Optional[int] = None
    obs_shape: Tuple[int, int, int]
    seed: int
    next_index: int = 0
    sampler_state: Dict[str, Any] = {}
    has_reward: bool = False
