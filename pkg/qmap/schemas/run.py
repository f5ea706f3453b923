from pydantic import BaseModel, Field, model_validator
from typing import Any, Mapping, Optional

from qmap.envs.base import LevelKind
from qmap.envs.coverage import EPISODE_STEPS
from qmap.models.training import Command, ExplorePolicy
from qmap.schemas.training import ExplorationConfig, TrainingConfig

COVERAGE_EXTENT = 32


class RunConfig(BaseModel):
    """Everything one CLI invocation depends on; written as run_config.json"""
    command: Command
    seed: int = 0
    out: str = './runs'

    # levels
    kind: LevelKind = LevelKind.MAZE
    size: int = Field(16, ge=5)  # maze observation extent
    width: int = Field(10, ge=5)
    height: int = Field(10, ge=5)
    count: int = Field(10, ge=1)
    test_count: int = Field(10, ge=0)
    coin_density: float = Field(0.1, ge=0.0, le=1.0)
    coverage_episode_steps: int = Field(EPISODE_STEPS, ge=1)
    min_reachable_goals: int = Field(1, ge=1)
    levels: Optional[str] = None

    # model
    preset: Optional[str] = None
    scale_filters: Optional[float] = Field(None, gt=0.0)
    checkpoint: Optional[str] = None
    resume: Optional[str] = None
    oracle: bool = False

    # budgets
    steps: int = Field(10_000, ge=0)
    eval_every: Optional[int] = Field(None, ge=1)
    checkpoint_every: Optional[int] = Field(None, ge=1)
    eval_levels: int = Field(10, ge=1)
    sokoban_budget_factor: float = Field(3.0, ge=1.0)

    # exploration
    policy: ExplorePolicy = ExplorePolicy.RANDOM
    runs: int = Field(1, ge=1)

    training: TrainingConfig = TrainingConfig()
    exploration: ExplorationConfig = ExplorationConfig()

    @model_validator(mode='before')
    @classmethod
    def coverage_extents(cls, data: Any) -> Any:
        # coverage worlds default to 32x32
        if isinstance(data, dict) and data.get('kind') == LevelKind.COVERAGE:
            data = dict(data)
            data.setdefault('width', COVERAGE_EXTENT)
            data.setdefault('height', COVERAGE_EXTENT)
        return data

    @model_validator(mode='before')
    @classmethod
    def sokoban_training(cls, data: Any) -> Any:
        # Sokoban trains with its own batch and double-Q defaults unless a training block is given
        if isinstance(data, dict) and data.get('kind') == LevelKind.SOKOBAN and data.get('training') is None:
            data = dict(data)
            data['training'] = TrainingConfig.for_sokoban()
        return data

    def with_overrides(self, values: Mapping[str, Any]) -> 'RunConfig':
        """Apply flat key=value overrides; keys may name fields of the nested configs"""
        data = self.model_dump()
        for raw_key, value in values.items():
            if value is None:
                continue
            key = raw_key.strip().lower().replace('-', '_')
            if key in ('training', 'exploration'):
                raise ValueError(f'{raw_key} must be set field by field')
            matched = False
            if key in RunConfig.model_fields:
                data[key] = value
                matched = True
            # gamma lives in both nested configs
            if key in TrainingConfig.model_fields:
                data['training'][key] = value
                matched = True
            if key in ExplorationConfig.model_fields:
                data['exploration'][key] = value
                matched = True
            if not matched:
                raise ValueError(f'Unknown configuration key {raw_key!r}')
        return RunConfig.model_validate(data)
