"""Random-goal exploration: pick a goal a moderate predicted distance away
and follow the Q-map's greedy actions towards it."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from qmap.envs.base import Cell, NUM_ACTIONS
from qmap.envs.env import GridEnv, StepResult
from qmap.models.training import ExplorePolicy, TrajectoryEnd
from qmap.schemas.training import ExplorationConfig
from qmap.services.replay import ReplayBuffer
from qmap.services.trainer import QFrameSource, Trainer, scale_coordinates
from qmap.services.evaluator import greedy_action

logger = logging.getLogger(__name__)

UNVISITED = -1


def sample_exploration_goal(qframes: np.ndarray, cfg: ExplorationConfig, rng: np.random.Generator,
                            first_action: Optional[int] = None) -> Optional[Tuple[Cell, int]]:
    """A uniform goal among cells predicted k_min..k_max steps away, with its predicted step count.

    With first_action set, only goals whose greedy first action equals it qualify.
    """
    best = qframes.max(axis=0)
    low, high = cfg.value_window
    candidates = (best >= low) & (best <= high)
    if first_action is not None:
        candidates &= qframes.argmax(axis=0) == first_action
    cells = np.argwhere(candidates)
    if len(cells) == 0:
        return None
    row, col = cells[int(rng.integers(len(cells)))]
    value = float(best[row, col])
    predicted = int(round(1 + math.log(value) / math.log(cfg.gamma)))
    return (int(row), int(col)), predicted


@dataclass
class GoalTrajectory:
    goal: Cell
    predicted_steps: int
    steps: int
    end: TrajectoryEnd


StepHook = Callable[[np.ndarray, int, StepResult], None]


def run_goal_trajectory(env: GridEnv, source: QFrameSource, goal: Cell, predicted_steps: int,
                        cfg: ExplorationConfig, rng: np.random.Generator, epsilon: float = 0.0,
                        buffer: Optional[ReplayBuffer] = None, on_step: Optional[StepHook] = None,
                        limit: Optional[int] = None) -> GoalTrajectory:
    """Greedy steps towards goal (random with probability epsilon) until reached or over budget"""
    budget = math.ceil(cfg.budget_factor * predicted_steps)
    if limit is not None:
        budget = min(budget, limit)
    obs = env.observation()
    steps = 0
    end = TrajectoryEnd.BUDGET
    while steps < budget:
        qframes = source.qframes(obs[None])[0]
        if rng.random() < epsilon:
            action = int(rng.integers(NUM_ACTIONS))
        else:
            action = int(greedy_action(qframes, goal))
        result = env.step(action)
        steps += 1
        if buffer is not None:
            buffer.add(obs, action, result.observation, result.position, reward=result.reward)
        if on_step is not None:
            on_step(obs, action, result)
        position = tuple(int(v) for v in scale_coordinates(np.array(result.position), env.level.walls.shape,
                                                           qframes.shape[-2:]))
        if position == tuple(goal):
            end = TrajectoryEnd.REACHED
            break
        if result.truncated:
            env.reset()
            end = TrajectoryEnd.TRUNCATED
            break
        obs = result.observation
    return GoalTrajectory(goal=goal, predicted_steps=predicted_steps, steps=steps, end=end)


@dataclass
class CoverageRecord:
    """First-visit step per cell and the running count of distinct visited cells"""
    first_visit: np.ndarray
    cumulative: List[int] = field(default_factory=list)
    seed: int = 0

    @classmethod
    def create(cls, shape: Tuple[int, int], seed: int = 0) -> 'CoverageRecord':
        return cls(first_visit=np.full(shape, UNVISITED, dtype=np.int64), seed=seed)

    @property
    def unique(self) -> int:
        return int((self.first_visit != UNVISITED).sum())

    def visit(self, cell: Cell, step: int) -> None:
        if self.first_visit[cell] == UNVISITED:
            self.first_visit[cell] = step
        self.cumulative.append(self.unique)

    def curve(self) -> pd.DataFrame:
        return pd.DataFrame({'step': np.arange(1, len(self.cumulative) + 1), 'unique_cells': self.cumulative,
                             'seed': self.seed})

    def to_csv(self, path) -> Path:
        """Per-cell first-visit grid, -1 for cells never visited"""
        path = Path(path)
        pd.DataFrame(self.first_visit).to_csv(path, index=False, header=False)
        return path


class Explorer:
    """Drives one environment, records coverage and trains attached learners from a shared buffer"""

    def __init__(self, env: GridEnv, buffer: ReplayBuffer, cfg: ExplorationConfig, horizon: int, seed: int = 0,
                 source: Optional[QFrameSource] = None, trainers: Sequence[Trainer] = ()):
        self.env = env
        self.buffer = buffer
        self.cfg = cfg
        self.horizon = horizon
        self.source = source
        self.trainers = list(trainers)
        self.rng = np.random.default_rng([seed, 4])
        self.record = CoverageRecord.create(env.level.walls.shape, seed)
        self.total_steps = 0
        self.exploration_steps = 0
        self.trajectories: List[GoalTrajectory] = []
        self.total_reward = 0.0
        self.reward_trace: List[float] = []
        self.episode_returns: List[float] = []
        self.episode_return = 0.0
        self.logger = logger
        self.record.first_visit[env.state.agent] = 0

    @property
    def remaining(self) -> int:
        return self.horizon - self.total_steps

    def _after_step(self, obs: np.ndarray, action: int, result: StepResult) -> None:
        self.total_steps += 1
        self.record.visit(self.env.state.agent, self.total_steps)
        self.total_reward += result.reward
        self.episode_return += result.reward
        self.reward_trace.append(self.total_reward)
        if result.truncated:
            self.episode_returns.append(self.episode_return)
            self.episode_return = 0.0
        if self.total_steps >= self.cfg.learning_starts and self.total_steps % self.cfg.train_every == 0:
            for trainer in self.trainers:
                if len(self.buffer) >= trainer.cfg.batch:
                    trainer.train_step()

    def act(self, action: int) -> StepResult:
        obs = self.env.observation()
        result = self.env.step(action)
        self.buffer.add(obs, action, result.observation, result.position, reward=result.reward)
        self._after_step(obs, action, result)
        if result.truncated:
            self.env.reset()
        return result

    def random_step(self) -> StepResult:
        self.exploration_steps += 1
        return self.act(int(self.rng.integers(NUM_ACTIONS)))

    def goal_trajectory(self, first_action: Optional[int] = None) -> Optional[GoalTrajectory]:
        """Sample a goal and follow it; None when no cell lies in the predicted-step window"""
        qframes = self.source.qframes(self.env.observation()[None])[0]
        choice = None
        if first_action is not None:
            choice = sample_exploration_goal(qframes, self.cfg, self.rng, first_action)
        if choice is None:
            choice = sample_exploration_goal(qframes, self.cfg, self.rng)
        if choice is None:
            return None
        goal, predicted = choice
        trajectory = run_goal_trajectory(self.env, self.source, goal, predicted, self.cfg, self.rng,
                                         epsilon=self.cfg.epsilon_at(self.total_steps, self.horizon),
                                         buffer=self.buffer, on_step=self._after_step, limit=self.remaining)
        self.exploration_steps += trajectory.steps
        self.trajectories.append(trajectory)
        return trajectory


def coverage_experiment(make_env: Callable[[], GridEnv], policy: ExplorePolicy, steps: int, seeds: Sequence[int],
                        cfg: Optional[ExplorationConfig] = None,
                        make_trainer: Optional[Callable[[ReplayBuffer, int], Trainer]] = None) -> List[CoverageRecord]:
    """Unique-cell coverage of the random or random-goal policy, one record per seed.

    The random-goal policy trains its Q-map online through make_trainer and
    takes a uniform random action whenever no goal fits the window.
    """
    cfg = cfg or ExplorationConfig()
    records = []
    for seed in seeds:
        env = make_env()
        buffer = ReplayBuffer(env.shape, seed=seed)
        trainers = []
        source = None
        if ExplorePolicy(policy) == ExplorePolicy.RANDOM_GOAL:
            if make_trainer is None:
                raise ValueError('the random-goal policy needs a Q-map trainer')
            trainer = make_trainer(buffer, seed)
            trainers.append(trainer)
            source = trainer.pair
        explorer = Explorer(env, buffer, cfg, steps, seed, source=source, trainers=trainers)
        while explorer.remaining > 0:
            if source is None or explorer.goal_trajectory() is None:
                explorer.random_step()
        logger.info(f'Coverage ({ExplorePolicy(policy).value}, seed {seed}): {explorer.record.unique} cells in {steps} steps')
        records.append(explorer.record)
    return records
