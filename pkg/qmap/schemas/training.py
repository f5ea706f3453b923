from pydantic import BaseModel, Field, model_validator
from typing import Optional

from qmap.models.training import Relabel


class TrainingConfig(BaseModel):
    gamma: float = Field(0.9, gt=0.0, lt=1.0)
    batch: int = Field(50, ge=1)
    clip_low: float = 0.0
    clip_high: float = 1.0
    target_sync_period: int = Field(1_000, ge=1)  # updates
    double_q: bool = True

    # optimizer
    learning_rate: float = Field(1e-4, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(1e-8, gt=0.0)

    # goal-in-input networks only
    relabel: Relabel = Relabel.RANDOM_GOAL

    # Sokoban: collect this many random steps, then run this many updates
    collect_steps: int = Field(120, ge=1)
    updates_per_collect: int = Field(30, ge=1)
    # None keeps every transition
    buffer_capacity: Optional[int] = Field(None, ge=1)

    @model_validator(mode='after')
    def check_clip(self) -> 'TrainingConfig':
        if self.clip_low > self.clip_high:
            raise ValueError(f'clip bounds reversed: ({self.clip_low}, {self.clip_high})')
        return self

    @classmethod
    def for_sokoban(cls, **overrides) -> 'TrainingConfig':
        values = {'batch': 100, 'double_q': False}
        values.update(overrides)
        return cls(**values)


class ExplorationConfig(BaseModel):
    k_min: int = Field(15, ge=1)
    k_max: int = Field(30, ge=1)
    budget_factor: float = Field(1.5, ge=1.0)
    eps_start: float = Field(0.1, ge=0.0, le=1.0)
    eps_end: float = Field(0.05, ge=0.0, le=1.0)
    # share of steps spent exploring, linear over the run
    schedule_start: float = Field(1.0, ge=0.0, le=1.0)
    schedule_end: float = Field(0.05, ge=0.0, le=1.0)
    goal_align_prob: float = Field(0.5, ge=0.0, le=1.0)
    trajectory_window: int = Field(20, ge=1)
    # discount the Q-frames were trained with
    gamma: float = Field(0.9, gt=0.0, lt=1.0)

    # online training while exploring
    learning_starts: int = Field(1_000, ge=0)
    train_every: int = Field(4, ge=1)

    @model_validator(mode='after')
    def check_window(self) -> 'ExplorationConfig':
        if self.k_min > self.k_max:
            raise ValueError(f'k_min {self.k_min} exceeds k_max {self.k_max}')
        return self

    @property
    def value_window(self):
        """(lowest, highest) max-Q value of a candidate goal"""
        return self.gamma ** (self.k_max - 1), self.gamma ** (self.k_min - 1)

    def epsilon_at(self, step: int, horizon: int) -> float:
        return _linear(self.eps_start, self.eps_end, step, horizon)

    def exploration_fraction_at(self, step: int, horizon: int) -> float:
        return _linear(self.schedule_start, self.schedule_end, step, horizon)

    def scheduled_exploration_steps(self, step: int, horizon: int) -> float:
        """Integral of the exploration share over the first `step` steps"""
        if horizon <= 0:
            return self.schedule_end * step
        inside = min(step, horizon)
        end_value = self.exploration_fraction_at(inside, horizon)
        area = 0.5 * (self.schedule_start + end_value) * inside
        return area + self.schedule_end * max(0, step - horizon)


def _linear(start: float, end: float, step: int, horizon: int) -> float:
    if horizon <= 0:
        return end
    progress = min(max(step / horizon, 0.0), 1.0)
    return start + (end - start) * progress
