"""Large perfect maze with coins: the exploration and task-learner world."""
import logging
from typing import Tuple

import numpy as np

from qmap.envs.base import EnvState, GridLevel, LevelKind, move
from qmap.envs.errors import LevelError
from qmap.envs.maze import maze_generate, pad_level

logger = logging.getLogger(__name__)

MIN_EXTENT = 17
COIN_REWARD = 0.01
EPISODE_STEPS = 2_000


def coverage_world_generate(seed: int, width: int = 32, height: int = 32,
                            coin_density: float = 0.1) -> Tuple[GridLevel, EnvState]:
    if width < MIN_EXTENT or height < MIN_EXTENT:
        raise LevelError(f'coverage world extents must be at least {MIN_EXTENT}, got {width}x{height}')
    if not 0.0 <= coin_density <= 1.0:
        raise LevelError(f'coin density must lie in [0, 1], got {coin_density}')
    lattice_w = width if width % 2 else width - 1
    lattice_h = height if height % 2 else height - 1
    level = pad_level(maze_generate(seed, lattice_w, lattice_h, kind=LevelKind.COVERAGE), height, width)

    rng = np.random.default_rng([seed, 1])
    cells = level.pathway_cells()
    agent = cells[int(rng.integers(len(cells)))]
    coins = np.zeros_like(level.walls)
    # the start cell never holds a coin
    eligible = [cell for cell in cells if cell != agent]
    draws = rng.random(len(eligible)) < coin_density
    for cell, placed in zip(eligible, draws):
        coins[cell] = placed
    return level, EnvState(agent=agent, coins=coins)


def coverage_step(level: GridLevel, state: EnvState, action: int) -> Tuple[EnvState, float]:
    """Maze dynamics plus coin pickup"""
    destination = move(state.agent, action)
    if level.is_wall(destination):
        return state.advanced(), 0.0
    if state.coins is not None and state.coins[destination]:
        coins = state.coins.copy()
        coins[destination] = False
        return state.advanced(agent=destination, coins=coins), COIN_REWARD
    return state.advanced(agent=destination), 0.0
