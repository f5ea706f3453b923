"""Perfect mazes carved by a depth-first spanning tree on a cell/wall lattice."""
import logging
from typing import Tuple

import numpy as np

from qmap.envs.base import ACTION_DELTAS, EnvState, GridLevel, LevelKind, move
from qmap.envs.errors import LevelError

logger = logging.getLogger(__name__)


def maze_generate(seed: int, width: int, height: int, kind: LevelKind = LevelKind.MAZE) -> GridLevel:
    if width % 2 == 0 or height % 2 == 0:
        raise LevelError(f'maze extents must be odd, got {width}x{height}')
    if width < 5 or height < 5:
        raise LevelError(f'maze extents must be at least 5, got {width}x{height}')

    rng = np.random.default_rng(seed)
    walls = np.ones((height, width), dtype=bool)
    cell_rows = np.arange(1, height - 1, 2)
    cell_cols = np.arange(1, width - 1, 2)
    start = (int(rng.choice(cell_rows)), int(rng.choice(cell_cols)))
    walls[start] = False
    stack = [start]
    while stack:
        r, c = stack[-1]
        unvisited = []
        for dr, dc in ACTION_DELTAS.values():
            nr, nc = r + 2 * dr, c + 2 * dc
            if 0 < nr < height - 1 and 0 < nc < width - 1 and walls[nr, nc]:
                unvisited.append((nr, nc))
        if not unvisited:
            stack.pop()
            continue
        nr, nc = unvisited[int(rng.integers(len(unvisited)))]
        walls[(r + nr) // 2, (c + nc) // 2] = False
        walls[nr, nc] = False
        stack.append((nr, nc))
    return GridLevel(walls=walls, kind=kind, seed=seed)


def pad_level(level: GridLevel, height: int, width: int) -> GridLevel:
    """Embed a level in the top-left corner of a larger all-wall frame"""
    if height < level.height or width < level.width:
        raise LevelError(f'cannot pad {level.height}x{level.width} into {height}x{width}')
    walls = np.ones((height, width), dtype=bool)
    walls[:level.height, :level.width] = level.walls
    return GridLevel(walls=walls, kind=level.kind, seed=level.seed)


def generate_padded_maze(seed: int, size: int) -> GridLevel:
    """A maze for size x size observations (even sizes hold a size-1 lattice)"""
    lattice = size if size % 2 else size - 1
    return pad_level(maze_generate(seed, lattice, lattice), size, size)


def maze_step(level: GridLevel, state: EnvState, action: int) -> EnvState:
    destination = move(state.agent, action)
    if level.is_wall(destination):
        return state.advanced()
    return state.advanced(agent=destination)


def pathway_edges(walls: np.ndarray) -> int:
    """Number of 4-adjacent pathway pairs"""
    open_ = ~walls
    return int((open_[1:, :] & open_[:-1, :]).sum() + (open_[:, 1:] & open_[:, :-1]).sum())


def maze_tree_counts(level: GridLevel) -> Tuple[int, int]:
    return level.pathway_count, pathway_edges(level.walls)
