import logging
from typing import Optional, Tuple

import numpy as np

from qmap.envs.base import Cell, EnvState, GridLevel, LevelKind
from qmap.envs.errors import LevelError

logger = logging.getLogger(__name__)

WHITE = (1.0, 1.0, 1.0)
BLACK = (0.0, 0.0, 0.0)
RED = (1.0, 0.0, 0.0)
GREEN = (0.0, 1.0, 0.0)
BLUE = (0.0, 0.0, 1.0)
YELLOW = (1.0, 1.0, 0.0)

# maze and coverage worlds
MAZE_COLORS = {'background': WHITE, 'wall': BLACK, 'agent': RED, 'goal': GREEN, 'coin': YELLOW}
SOKOBAN_COLORS = {'background': BLACK, 'wall': RED, 'box': GREEN, 'agent': BLUE}


def _paint(frame: np.ndarray, cell: Cell, color: Tuple[float, float, float]) -> None:
    frame[:, cell[0], cell[1]] = color


def render_observation(level: GridLevel, state: EnvState, goal: Optional[Cell] = None) -> np.ndarray:
    """Channels-first RGB frame in [0, 1], float32"""
    frame = np.empty((3, level.height, level.width), dtype=np.float32)
    if level.kind == LevelKind.SOKOBAN:
        if goal is not None:
            raise LevelError('Sokoban goals are given as a separate plane, see goal_conditioned_input')
        frame[:] = np.asarray(SOKOBAN_COLORS['background'], dtype=np.float32)[:, None, None]
        frame[:, level.walls] = np.asarray(SOKOBAN_COLORS['wall'], dtype=np.float32)[:, None]
        if state.box is not None:
            _paint(frame, state.box, SOKOBAN_COLORS['box'])
        _paint(frame, state.agent, SOKOBAN_COLORS['agent'])
        return frame

    frame[:] = np.asarray(MAZE_COLORS['background'], dtype=np.float32)[:, None, None]
    frame[:, level.walls] = np.asarray(MAZE_COLORS['wall'], dtype=np.float32)[:, None]
    if state.coins is not None:
        frame[:, state.coins] = np.asarray(MAZE_COLORS['coin'], dtype=np.float32)[:, None]
    if goal is not None:
        if level.is_wall(goal):
            raise LevelError(f'goal {goal} lies on a wall')
        _paint(frame, goal, MAZE_COLORS['goal'])
    _paint(frame, state.agent, MAZE_COLORS['agent'])
    return frame


def _matches(obs: np.ndarray, color: Tuple[float, float, float]) -> np.ndarray:
    return np.all(obs == np.asarray(color, dtype=obs.dtype)[:, None, None], axis=0)


def parse_maze_observation(obs: np.ndarray) -> Tuple[np.ndarray, Cell]:
    """Wall mask and agent cell of a maze or coverage frame"""
    walls = _matches(obs, MAZE_COLORS['wall'])
    agent = np.argwhere(_matches(obs, MAZE_COLORS['agent']))
    if len(agent) != 1:
        raise LevelError(f'expected exactly one agent pixel, found {len(agent)}')
    return walls, (int(agent[0, 0]), int(agent[0, 1]))


def parse_sokoban_observation(obs: np.ndarray) -> Tuple[np.ndarray, Cell, Cell]:
    walls = _matches(obs[:3], SOKOBAN_COLORS['wall'])
    box = np.argwhere(_matches(obs[:3], SOKOBAN_COLORS['box']))
    agent = np.argwhere(_matches(obs[:3], SOKOBAN_COLORS['agent']))
    if len(box) != 1 or len(agent) != 1:
        raise LevelError('expected exactly one box and one agent pixel')
    return walls, (int(agent[0, 0]), int(agent[0, 1])), (int(box[0, 0]), int(box[0, 1]))


def goal_conditioned_input(obs: np.ndarray, goals: np.ndarray, kind: LevelKind) -> np.ndarray:
    """Attach goals to a batch of frames for the goal-in-input networks.

    Maze and coverage frames get a green goal pixel unless the agent stands
    on it. Sokoban frames (green is the box) get a one-hot fourth plane.
    """
    obs = np.asarray(obs, dtype=np.float32)
    goals = np.asarray(goals, dtype=np.int64).reshape(-1, 2)
    if obs.shape[0] != goals.shape[0]:
        raise ValueError(f'{obs.shape[0]} frames but {goals.shape[0]} goals')
    rows = np.arange(obs.shape[0])
    if LevelKind(kind) == LevelKind.SOKOBAN:
        plane = np.zeros((obs.shape[0], 1) + obs.shape[2:], dtype=np.float32)
        plane[rows, 0, goals[:, 0], goals[:, 1]] = 1.0
        return np.concatenate([obs, plane], axis=1)

    result = obs.copy()
    pixels = obs[rows, :, goals[:, 0], goals[:, 1]]
    free = ~np.all(pixels == np.asarray(MAZE_COLORS['agent'], dtype=np.float32), axis=1)
    result[rows[free], :, goals[free, 0], goals[free, 1]] = np.asarray(MAZE_COLORS['goal'], dtype=np.float32)
    return result
