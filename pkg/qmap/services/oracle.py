"""Exact ground truth: breadth-first distance maps, Sokoban box-goal search,
tabular all-goals Q-learning and the Q-frames they imply."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Hashable, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from qmap.envs.base import Action, Cell, EnvState, GridLevel, LevelKind, NUM_ACTIONS, move
from qmap.envs.errors import LevelError
from qmap.envs.render import parse_maze_observation, parse_sokoban_observation
from qmap.envs.sokoban import sokoban_step

logger = logging.getLogger(__name__)

UNREACHABLE = -1
CONVERGENCE_TOLERANCE = 1e-9


@dataclass
class DistanceMap:
    """Minimal step counts from one start and the optimal first actions per goal cell.

    first_actions is a bitmask: bit a is set when action a starts a shortest path.
    """
    start: Cell
    distances: np.ndarray
    first_actions: np.ndarray

    def distance(self, cell: Cell) -> int:
        return int(self.distances[cell])

    def reachable(self, cell: Cell) -> bool:
        return self.distances[cell] != UNREACHABLE

    def optimal_actions(self, cell: Cell) -> List[Action]:
        mask = int(self.first_actions[cell])
        return [action for action in Action if mask & (1 << action)]

    def feasible_mask(self) -> np.ndarray:
        """Reachable cells other than the start"""
        return self.distances >= 1

    def feasible_goals(self) -> List[Cell]:
        rows, cols = np.nonzero(self.feasible_mask())
        return [(int(r), int(c)) for r, c in zip(rows, cols)]

    def to_frame(self) -> pd.DataFrame:
        rows, cols = np.indices(self.distances.shape)
        return pd.DataFrame({
            'row': rows.reshape(-1),
            'col': cols.reshape(-1),
            'distance': self.distances.reshape(-1),
            'optimal_actions': self.first_actions.reshape(-1),
        })

    def to_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path


def _layered_search(start: Hashable, successors: Callable[[Hashable], Iterable[Tuple[int, Hashable]]],
                    max_states: Optional[int] = None) -> Tuple[Dict[Hashable, int], Dict[Hashable, int]]:
    """Breadth-first search that also collects, per state, every first action of a shortest path"""
    distances = {start: 0}
    masks = {start: 0}
    layer = [start]
    depth = 0
    while layer:
        following = []
        for state in layer:
            for action, nxt in successors(state):
                mask = (1 << action) if depth == 0 else masks[state]
                known = distances.get(nxt)
                if known is None:
                    distances[nxt] = depth + 1
                    masks[nxt] = mask
                    following.append(nxt)
                elif known == depth + 1:
                    masks[nxt] |= mask
        if max_states is not None and len(distances) > max_states:
            raise RuntimeError(f'search exceeded {max_states} states')
        layer = following
        depth += 1
    return distances, masks


def bfs_distance_map(level: GridLevel, start: Cell) -> DistanceMap:
    if level.is_wall(start):
        raise LevelError(f'start {start} is not a pathway cell')

    def successors(cell):
        for action in Action:
            nxt = move(cell, action)
            if not level.is_wall(nxt):
                yield int(action), nxt

    found, masks = _layered_search(start, successors)
    distances = np.full(level.walls.shape, UNREACHABLE, dtype=np.int32)
    first_actions = np.zeros(level.walls.shape, dtype=np.uint8)
    for cell, distance in found.items():
        distances[cell] = distance
        first_actions[cell] = masks[cell]
    return DistanceMap(start=start, distances=distances, first_actions=first_actions)


def sokoban_goal_map(level: GridLevel, state: EnvState) -> DistanceMap:
    """Fewest steps until the box rests on each cell, over joint (agent, box) states"""
    if state.box is None:
        raise LevelError('Sokoban state without a box')

    def successors(joint):
        agent, box = joint
        current = EnvState(agent=agent, box=box)
        for action in Action:
            nxt = sokoban_step(level, current, action)
            if (nxt.agent, nxt.box) != joint:
                yield int(action), (nxt.agent, nxt.box)

    cells = level.pathway_count
    found, masks = _layered_search((state.agent, state.box), successors, max_states=cells * cells)
    distances = np.full(level.walls.shape, UNREACHABLE, dtype=np.int32)
    first_actions = np.zeros(level.walls.shape, dtype=np.uint8)
    for (agent, box), distance in sorted(found.items(), key=lambda item: item[1]):
        if distances[box] == UNREACHABLE:
            distances[box] = distance
        if distances[box] == distance:
            first_actions[box] |= masks[(agent, box)]
    return DistanceMap(start=state.box, distances=distances, first_actions=first_actions)


def feasible_goal_count(goal_map: DistanceMap) -> int:
    return int(goal_map.feasible_mask().sum())


def goal_map(level: GridLevel, state: EnvState) -> DistanceMap:
    """Distance map of the tracked coordinate: the box in Sokoban, the agent elsewhere"""
    if level.kind == LevelKind.SOKOBAN:
        return sokoban_goal_map(level, state)
    return bfs_distance_map(level, state.agent)


class QTable:
    """Tabular all-goals Q-values Q[state, action, goal row, goal col] over agent cells"""

    def __init__(self, level: GridLevel, gamma: float, values: np.ndarray, cells: List[Cell], sweeps: int):
        self.level = level
        self.gamma = gamma
        self.values = values
        self.cells = cells
        self.index = {cell: i for i, cell in enumerate(cells)}
        self.sweeps = sweeps

    def qframes_at(self, cell: Cell) -> np.ndarray:
        return self.values[self.index[cell]]

    def qframes(self, obs: np.ndarray, which=None) -> np.ndarray:
        frames = []
        for frame in obs:
            _, agent = parse_maze_observation(frame[:3])
            frames.append(self.qframes_at(agent))
        return np.stack(frames).astype(np.float32)


def tabular_all_goals_q(level: GridLevel, gamma: float, tolerance: float = CONVERGENCE_TOLERANCE,
                        max_sweeps: int = 100_000) -> QTable:
    """Synchronous all-goals Q-learning sweeps until the largest change drops below tolerance"""
    cells = level.pathway_cells()
    index = {cell: i for i, cell in enumerate(cells)}
    height, width = level.walls.shape
    successor = np.zeros((len(cells), NUM_ACTIONS), dtype=np.int64)
    for i, cell in enumerate(cells):
        for action in Action:
            nxt = move(cell, action)
            successor[i, action] = index[nxt] if not level.is_wall(nxt) else i
    rows = np.array([cell[0] for cell in cells])
    cols = np.array([cell[1] for cell in cells])
    reached_rows = rows[successor]
    reached_cols = cols[successor]
    states = np.arange(len(cells))[:, None]
    actions = np.arange(NUM_ACTIONS)[None, :]

    q = np.zeros((len(cells), NUM_ACTIONS, height, width), dtype=np.float64)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        best = q.max(axis=1)
        target = gamma * best[successor]
        target[states, actions, reached_rows, reached_cols] = 1.0
        np.clip(target, 0.0, 1.0, out=target)
        change = float(np.max(np.abs(target - q))) if q.size else 0.0
        q = target
        if change < tolerance:
            break
    logger.debug(f'Tabular all-goals Q converged after {sweeps} sweeps on {len(cells)} cells')
    return QTable(level, gamma, q, cells, sweeps)


def ground_truth_qframes(level: GridLevel, state: EnvState, gamma: float) -> np.ndarray:
    """frames[a, g] = gamma ** (k - 1), k the fewest steps to g when the first step is a; 0 if unreachable"""
    frames = np.zeros((NUM_ACTIONS,) + level.walls.shape, dtype=np.float64)
    cache: Dict[Tuple, np.ndarray] = {}
    for action in Action:
        if level.kind == LevelKind.SOKOBAN:
            nxt = sokoban_step(level, state, action)
            key = (nxt.agent, nxt.box)
        else:
            nxt = EnvState(agent=move(state.agent, action))
            if level.is_wall(nxt.agent):
                nxt = EnvState(agent=state.agent)
            key = (nxt.agent,)
        if key not in cache:
            distances = goal_map(level, nxt).distances
            cache[key] = np.where(distances >= 0, gamma ** np.maximum(distances, 0).astype(np.float64), 0.0)
        frames[action] = cache[key]
    return frames


class OracleAdapter:
    """Ground-truth Q-frames for rendered observations, usable wherever a model's are"""

    def __init__(self, kind: LevelKind = LevelKind.MAZE, gamma: float = 0.9):
        self.kind = LevelKind(kind)
        self.gamma = gamma
        self.logger = logger

    def state_from_observation(self, frame: np.ndarray) -> Tuple[GridLevel, EnvState]:
        if self.kind == LevelKind.SOKOBAN:
            walls, agent, box = parse_sokoban_observation(frame)
            return GridLevel(walls=walls, kind=self.kind), EnvState(agent=agent, box=box)
        walls, agent = parse_maze_observation(frame[:3])
        return GridLevel(walls=walls, kind=self.kind), EnvState(agent=agent)

    def qframes(self, obs: np.ndarray, which=None) -> np.ndarray:
        frames = []
        for frame in obs:
            level, state = self.state_from_observation(frame)
            frames.append(ground_truth_qframes(level, state, self.gamma))
        return np.stack(frames).astype(np.float32)
