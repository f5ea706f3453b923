import enum
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from qmap.envs.errors import LevelError

Cell = Tuple[int, int]


class LevelKind(str, enum.Enum):
    MAZE = 'maze'
    SOKOBAN = 'sokoban'
    COVERAGE = 'coverage'


class Action(int, enum.Enum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


NUM_ACTIONS = len(Action)
ACTION_DELTAS = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
}
OPPOSITE = {
    Action.UP: Action.DOWN,
    Action.DOWN: Action.UP,
    Action.LEFT: Action.RIGHT,
    Action.RIGHT: Action.LEFT,
}


def move(cell: Cell, action: int) -> Cell:
    dr, dc = ACTION_DELTAS[Action(action)]
    return cell[0] + dr, cell[1] + dc


@dataclass(frozen=True, eq=False)
class GridLevel:
    """Static layout: wall mask and kind"""
    walls: np.ndarray
    kind: LevelKind
    seed: Optional[int] = None

    @property
    def height(self) -> int:
        return int(self.walls.shape[0])

    @property
    def width(self) -> int:
        return int(self.walls.shape[1])

    def inside(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_wall(self, cell: Cell) -> bool:
        return not self.inside(cell) or bool(self.walls[cell])

    def pathway_cells(self) -> List[Cell]:
        rows, cols = np.nonzero(~self.walls)
        return [(int(r), int(c)) for r, c in zip(rows, cols)]

    @property
    def pathway_count(self) -> int:
        return int((~self.walls).sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridLevel):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.walls, other.walls)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class EnvState:
    """Dynamic state: agent, optional box (Sokoban) and coins (coverage world)"""
    agent: Cell
    box: Optional[Cell] = None
    coins: Optional[np.ndarray] = None
    step_count: int = 0

    def advanced(self, **changes) -> 'EnvState':
        return replace(self, step_count=self.step_count + 1, **changes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EnvState):
            return NotImplemented
        if self.agent != other.agent or self.box != other.box or self.step_count != other.step_count:
            return False
        if self.coins is None or other.coins is None:
            return self.coins is None and other.coins is None
        return np.array_equal(self.coins, other.coins)

    __hash__ = None


def validate_state(level: GridLevel, state: EnvState) -> None:
    if level.is_wall(state.agent):
        raise LevelError(f'agent {state.agent} is not on a pathway cell')
    if state.box is not None:
        if level.is_wall(state.box):
            raise LevelError(f'box {state.box} is not on a pathway cell')
        if state.box == state.agent:
            raise LevelError(f'box and agent share cell {state.agent}')
    if state.coins is not None and state.coins.shape != level.walls.shape:
        raise LevelError(f'coin mask {state.coins.shape} does not match level {level.walls.shape}')
