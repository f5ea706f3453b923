import logging
from typing import Optional, Sequence

import numpy as np

from qmap.envs.base import Action, EnvState, GridLevel, LevelKind, NUM_ACTIONS
from qmap.envs.env import GridEnv, SokobanEnv, SOKOBAN_EPISODE_STEPS
from qmap.envs.maze import maze_step
from qmap.envs.render import render_observation
from qmap.services.errors import ContractViolation
from qmap.services.replay import ReplayBuffer

logger = logging.getLogger(__name__)


def build_maze_dataset(levels: Sequence[GridLevel], seed: int = 0) -> ReplayBuffer:
    """Every (position, action) transition of every level"""
    if not levels:
        raise ContractViolation('no levels to build a dataset from')
    shape = (3, levels[0].height, levels[0].width)
    buffer = ReplayBuffer(shape, seed=seed)
    for level in levels:
        if level.kind != LevelKind.MAZE:
            raise ContractViolation(f'expected maze levels, got {level.kind.value}')
        if (3, level.height, level.width) != shape:
            raise ContractViolation(f'level {level.height}x{level.width} does not match {shape[1]}x{shape[2]}')
        cells = level.pathway_cells()
        obs, actions, next_obs, reached = [], [], [], []
        frames = {cell: render_observation(level, EnvState(agent=cell)) for cell in cells}
        for cell in cells:
            for action in Action:
                nxt = maze_step(level, EnvState(agent=cell), action).agent
                obs.append(frames[cell])
                actions.append(int(action))
                next_obs.append(frames[nxt])
                reached.append(nxt)
        buffer.extend(np.stack(obs), np.array(actions), np.stack(next_obs), np.array(reached))
    logger.info(f'Built maze dataset: {len(buffer)} transitions from {len(levels)} levels')
    return buffer


def collect_random_transitions(env: GridEnv, steps: int, buffer: ReplayBuffer, seed: int) -> ReplayBuffer:
    """Uniform random actions; the environment starts a new episode whenever its budget runs out"""
    rng = np.random.default_rng(seed)
    obs = env.observation()
    for _ in range(steps):
        action = int(rng.integers(NUM_ACTIONS))
        result = env.step(action)
        buffer.add(obs, action, result.observation, result.position, reward=result.reward)
        obs = env.reset() if result.truncated else result.observation
    return buffer


class RandomCollector:
    """Random-action Sokoban collection indexed by total steps.

    Episode e uses the level and action stream derived from (seed, e), so a
    resumed collector fast-forwards to any step count without replaying
    earlier episodes.
    """

    def __init__(self, seed: int, width: int = 10, height: int = 10,
                 episode_steps: int = SOKOBAN_EPISODE_STEPS):
        self.seed = seed
        self.episode_steps = episode_steps
        self.env = SokobanEnv(seed, width, height, episode_steps=episode_steps)
        self.steps = 0
        self.logger = logger
        self._actions: Optional[np.ndarray] = None
        self._start(0)

    def _start(self, episode: int) -> None:
        self.env.start_episode(episode)
        rng = np.random.default_rng([self.seed, episode, 1])
        self._actions = rng.integers(NUM_ACTIONS, size=self.episode_steps)

    def fast_forward(self, steps: int) -> None:
        episode, offset = divmod(steps, self.episode_steps)
        self._start(episode)
        for action in self._actions[:offset]:
            self.env.step(int(action))
        self.steps = steps

    def collect(self, steps: int, buffer: ReplayBuffer) -> ReplayBuffer:
        obs = self.env.observation()
        for _ in range(steps):
            offset = self.steps % self.episode_steps
            action = int(self._actions[offset])
            result = self.env.step(action)
            buffer.add(obs, action, result.observation, result.position)
            self.steps += 1
            if self.steps % self.episode_steps == 0:
                self._start(self.steps // self.episode_steps)
                obs = self.env.observation()
            else:
                obs = result.observation
        return buffer
