"""Single-box Sokoban rooms.

Rooms come from random wall placement followed by connectivity repair. The
box is then placed by playing the game backwards from a random box/agent
pose: the agent walks and occasionally pulls the box. Every pull is a push
in the forward game, so the pre-pull box cell stays reachable.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Set, Tuple

import numpy as np

from qmap.envs.base import ACTION_DELTAS, OPPOSITE, Action, Cell, EnvState, GridLevel, LevelKind, move
from qmap.envs.errors import GenerationError, LevelError

logger = logging.getLogger(__name__)

MIN_EXTENT = 7
WALL_PROBABILITY = 0.2
PULL_PROBABILITY = 0.5
MAX_RETRIES = 100


@dataclass
class SokobanGeneration:
    level: GridLevel
    state: EnvState
    start_box: Cell
    # reverse-play moves in order: (direction the agent moved, whether it pulled the box)
    trace: List[Tuple[Action, bool]] = field(default_factory=list)
    attempts: int = 1

    def forward_actions(self) -> List[Action]:
        """Actions that undo the reverse play, ending with the box on start_box"""
        return [OPPOSITE[direction] for direction, _ in reversed(self.trace)]


def sokoban_step(level: GridLevel, state: EnvState, action: int) -> EnvState:
    destination = move(state.agent, action)
    if level.is_wall(destination):
        return state.advanced()
    if destination == state.box:
        beyond = move(state.box, action)
        if level.is_wall(beyond):
            return state.advanced()
        return state.advanced(agent=destination, box=beyond)
    return state.advanced(agent=destination)


def _components(floor: np.ndarray) -> List[Set[Cell]]:
    seen = np.zeros_like(floor)
    components = []
    for r, c in zip(*np.nonzero(floor)):
        if seen[r, c]:
            continue
        component = set()
        queue = deque([(int(r), int(c))])
        seen[r, c] = True
        while queue:
            cell = queue.popleft()
            component.add(cell)
            for dr, dc in ACTION_DELTAS.values():
                nr, nc = cell[0] + dr, cell[1] + dc
                if floor[nr, nc] and not seen[nr, nc]:
                    seen[nr, nc] = True
                    queue.append((nr, nc))
        components.append(component)
    return sorted(components, key=len, reverse=True)


def _carve_to(walls: np.ndarray, source: Set[Cell], target: Set[Cell]) -> None:
    """Open the shortest interior path from source to target"""
    height, width = walls.shape
    parents = {cell: None for cell in source}
    queue = deque(sorted(source))
    while queue:
        cell = queue.popleft()
        if cell in target:
            while cell is not None:
                walls[cell] = False
                cell = parents[cell]
            return
        for dr, dc in ACTION_DELTAS.values():
            nxt = (cell[0] + dr, cell[1] + dc)
            if 0 < nxt[0] < height - 1 and 0 < nxt[1] < width - 1 and nxt not in parents:
                parents[nxt] = cell
                queue.append(nxt)


def generate_room(rng: np.random.Generator, width: int, height: int,
                  wall_probability: float = WALL_PROBABILITY) -> np.ndarray:
    walls = np.ones((height, width), dtype=bool)
    walls[1:-1, 1:-1] = rng.random((height - 2, width - 2)) < wall_probability
    components = _components(~walls)
    while len(components) > 1:
        _carve_to(walls, components[-1], components[0])
        components = _components(~walls)
    return walls


def _reverse_play(rng: np.random.Generator, walls: np.ndarray, steps: int,
                  pull_probability: float) -> Optional[SokobanGeneration]:
    level = GridLevel(walls=walls, kind=LevelKind.SOKOBAN)
    floor = level.pathway_cells()
    box = floor[int(rng.integers(len(floor)))]
    neighbours = [move(box, a) for a in Action if not level.is_wall(move(box, a))]
    if not neighbours:
        return None
    agent = neighbours[int(rng.integers(len(neighbours)))]
    start_box = box
    trace = []
    for _ in range(steps):
        direction = Action(int(rng.integers(len(Action))))
        destination = move(agent, direction)
        if level.is_wall(destination) or destination == box:
            continue
        behind = move(agent, OPPOSITE[direction])
        pull = behind == box and rng.random() < pull_probability
        if pull:
            box = agent
        agent = destination
        trace.append((direction, pull))
    return SokobanGeneration(level=level, state=EnvState(agent=agent, box=box), start_box=start_box, trace=trace)


def generate_sokoban_with_trace(seed: int, width: int = 10, height: int = 10, min_reachable_goals: int = 1,
                                wall_probability: float = WALL_PROBABILITY, reverse_steps: Optional[int] = None,
                                pull_probability: float = PULL_PROBABILITY,
                                max_retries: int = MAX_RETRIES) -> SokobanGeneration:
    from qmap.services.oracle import feasible_goal_count, sokoban_goal_map

    if width < MIN_EXTENT or height < MIN_EXTENT:
        raise LevelError(f'Sokoban extents must be at least {MIN_EXTENT}, got {width}x{height}')
    rng = np.random.default_rng(seed)
    steps = reverse_steps if reverse_steps is not None else 2 * width * height
    for attempt in range(1, max_retries + 1):
        walls = generate_room(rng, width, height, wall_probability)
        if (~walls).sum() < 3:
            continue
        generated = _reverse_play(rng, walls, steps, pull_probability)
        if generated is None:
            continue
        goals = feasible_goal_count(sokoban_goal_map(generated.level, generated.state))
        if goals >= min_reachable_goals:
            level = GridLevel(walls=walls, kind=LevelKind.SOKOBAN, seed=seed)
            generated.level = level
            generated.attempts = attempt
            return generated
        logger.debug(f'Sokoban seed {seed}: attempt {attempt} reached {goals} goals, retrying')
    raise GenerationError(f'No Sokoban level with {min_reachable_goals} reachable goals '
                          f'after {max_retries} attempts (seed {seed}, {width}x{height})')


def sokoban_generate(seed: int, width: int = 10, height: int = 10,
                     min_reachable_goals: int = 1, **kwargs) -> Tuple[GridLevel, EnvState]:
    generated = generate_sokoban_with_trace(seed, width, height, min_reachable_goals, **kwargs)
    return generated.level, generated.state
