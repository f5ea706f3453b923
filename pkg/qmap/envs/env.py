"""Stateful environment wrappers around the pure level/step functions."""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from qmap.envs.base import Cell, EnvState, GridLevel, LevelKind, validate_state
from qmap.envs.coverage import EPISODE_STEPS, coverage_step, coverage_world_generate
from qmap.envs.maze import generate_padded_maze, maze_step
from qmap.envs.render import render_observation
from qmap.envs.sokoban import sokoban_generate, sokoban_step

logger = logging.getLogger(__name__)

SOKOBAN_EPISODE_STEPS = 120

# disjoint level streams per master seed
MAZE_TRAIN_STREAM = 5
MAZE_TEST_STREAM = 6
SOKOBAN_TEST_STREAM = 3


def episode_seed(seed: int, episode: int) -> int:
    """Level seed of one episode; the same (seed, episode) always gives the same level"""
    return int(np.random.SeedSequence([seed, episode]).generate_state(1)[0])


def stream_seed(seed: int, stream: int, index: int) -> int:
    """Seed of the index-th level in one of several disjoint level streams"""
    return int(np.random.SeedSequence([seed, stream, index]).generate_state(1)[0])


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    # episode budget exhausted; never a true termination
    truncated: bool
    position: Cell


class GridEnv:
    kind: LevelKind = LevelKind.MAZE

    def __init__(self, level: GridLevel, state: EnvState, episode_steps: Optional[int] = None):
        validate_state(level, state)
        self.level = level
        self.initial_state = state
        self.state = state
        self.episode_steps = episode_steps
        self.logger = logger

    @property
    def shape(self) -> Tuple[int, int, int]:
        return 3, self.level.height, self.level.width

    @property
    def position(self) -> Cell:
        """The tracked coordinate: the agent, or the box in Sokoban"""
        return self.state.agent

    def observation(self) -> np.ndarray:
        return render_observation(self.level, self.state)

    def reset(self) -> np.ndarray:
        self.state = self.initial_state
        return self.observation()

    def _transition(self, action: int) -> Tuple[EnvState, float]:
        return maze_step(self.level, self.state, action), 0.0

    def step(self, action: int) -> StepResult:
        self.state, reward = self._transition(action)
        truncated = self.episode_steps is not None and self.state.step_count >= self.episode_steps
        return StepResult(observation=self.observation(), reward=reward, truncated=truncated,
                          position=self.position)


class MazeEnv(GridEnv):
    kind = LevelKind.MAZE

    def __init__(self, level: GridLevel, start: Optional[Cell] = None, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        cells = level.pathway_cells()
        if start is None:
            start = cells[int(self.rng.integers(len(cells)))]
        super().__init__(level, EnvState(agent=start))

    @classmethod
    def generate(cls, seed: int, size: int = 16) -> 'MazeEnv':
        return cls(generate_padded_maze(seed, size), seed=seed)

    def place(self, cell: Cell) -> np.ndarray:
        self.state = EnvState(agent=cell)
        validate_state(self.level, self.state)
        return self.observation()


class CoverageEnv(GridEnv):
    kind = LevelKind.COVERAGE

    def __init__(self, seed: int, width: int = 32, height: int = 32, coin_density: float = 0.1,
                 episode_steps: Optional[int] = EPISODE_STEPS):
        level, state = coverage_world_generate(seed, width, height, coin_density)
        super().__init__(level, state, episode_steps)
        self.seed = seed

    def _transition(self, action: int) -> Tuple[EnvState, float]:
        return coverage_step(self.level, self.state, action)


class SokobanEnv(GridEnv):
    """A fresh level every episode, derived from (seed, episode index)"""
    kind = LevelKind.SOKOBAN

    def __init__(self, seed: int, width: int = 10, height: int = 10,
                 episode_steps: int = SOKOBAN_EPISODE_STEPS, min_reachable_goals: int = 1):
        self.seed = seed
        self.width = width
        self.height = height
        self.min_reachable_goals = min_reachable_goals
        self.episode = 0
        level, state = self._generate(0)
        super().__init__(level, state, episode_steps)

    def _generate(self, episode: int) -> Tuple[GridLevel, EnvState]:
        return sokoban_generate(episode_seed(self.seed, episode), self.width, self.height, self.min_reachable_goals)

    @property
    def position(self) -> Cell:
        return self.state.box

    def start_episode(self, episode: int) -> np.ndarray:
        self.episode = episode
        self.level, self.initial_state = self._generate(episode)
        self.state = self.initial_state
        return self.observation()

    def reset(self) -> np.ndarray:
        return self.start_episode(self.episode + 1)

    def _transition(self, action: int) -> Tuple[EnvState, float]:
        return sokoban_step(self.level, self.state, action), 0.0
