import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from qmap.config import settings
from qmap.envs.base import Action, Cell, EnvState, GridLevel, NUM_ACTIONS
from qmap.envs.env import SOKOBAN_TEST_STREAM, stream_seed
from qmap.envs.render import render_observation
from qmap.envs.sokoban import sokoban_generate, sokoban_step
from qmap.services.errors import ContractViolation
from qmap.services.oracle import DistanceMap, bfs_distance_map, sokoban_goal_map
from qmap.services.trainer import QFrameSource

logger = logging.getLogger(__name__)

EVALUATION_GROUPS = 10
SOKOBAN_BUDGET_FACTOR = 3.0


def greedy_action(qframes: np.ndarray, goal: Cell) -> Action:
    """Best action at the goal cell; ties go to the lowest action index"""
    return Action(int(np.argmax(qframes[:, goal[0], goal[1]])))


@dataclass
class MazeEvaluation:
    success_rate: float
    level_rates: List[float]
    # mean predicted max-Q over wall cells
    wall_value: float
    pairs: int

    def metrics(self) -> Dict[str, float]:
        return {'success_rate': self.success_rate, 'wall_value': self.wall_value}


@dataclass
class SokobanEvaluation:
    success_rate: float
    group_rates: List[float]
    goals: int
    reached: int

    def metrics(self) -> Dict[str, float]:
        return {'sokoban_success_rate': self.success_rate}


def _level_positions(level: GridLevel) -> Tuple[List[Cell], np.ndarray]:
    cells = level.pathway_cells()
    frames = np.stack([render_observation(level, EnvState(agent=cell)) for cell in cells])
    return cells, frames


def _evaluate_maze_level(source: QFrameSource, level: GridLevel,
                         oracle: Callable[[GridLevel, Cell], DistanceMap]) -> Tuple[int, int, float, int]:
    cells, obs = _level_positions(level)
    qframes = source.qframes(obs)
    if qframes.shape[-2:] != level.walls.shape:
        raise ContractViolation(f'Q-frames {qframes.shape[-2:]} do not cover the {level.walls.shape} maze')
    correct = total = 0
    for cell, frames in zip(cells, qframes):
        distance_map = oracle(level, cell)
        feasible = distance_map.feasible_mask()
        greedy = frames.argmax(axis=0)
        hits = (distance_map.first_actions.astype(np.int64) >> greedy) & 1
        correct += int(hits[feasible].sum())
        total += int(feasible.sum())
    best = qframes.max(axis=1)
    wall_total = float(best[:, level.walls].sum())
    wall_count = int(level.walls.sum()) * len(cells)
    return correct, total, wall_total, wall_count


def eval_maze_success(source: QFrameSource, test_levels: Sequence[GridLevel],
                      oracle: Callable[[GridLevel, Cell], DistanceMap] = bfs_distance_map,
                      workers: Optional[int] = None) -> MazeEvaluation:
    """Share of (level, position, feasible goal) triples whose greedy action is optimal"""
    workers = workers or settings.eval_workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda level: _evaluate_maze_level(source, level, oracle), test_levels))
    correct = sum(r[0] for r in results)
    total = sum(r[1] for r in results)
    wall_count = sum(r[3] for r in results)
    evaluation = MazeEvaluation(
        success_rate=correct / total if total else 0.0,
        level_rates=[r[0] / r[1] if r[1] else 0.0 for r in results],
        wall_value=sum(r[2] for r in results) / wall_count if wall_count else 0.0,
        pairs=total,
    )
    logger.info(f'Maze evaluation on {len(test_levels)} levels: success {evaluation.success_rate:.4f}, '
                f'wall value {evaluation.wall_value:.4f}')
    return evaluation


def held_out_sokoban_levels(seed: int, count: int, width: int = 10, height: int = 10,
                            min_reachable_goals: int = 1) -> List[Tuple[GridLevel, EnvState]]:
    """Evaluation levels drawn from a seed stream disjoint from collection episodes"""
    levels = []
    for index in range(count):
        levels.append(sokoban_generate(stream_seed(seed, SOKOBAN_TEST_STREAM, index), width, height,
                                      min_reachable_goals))
    return levels


ActionChooser = Callable[[np.ndarray, np.ndarray], np.ndarray]


def rollout_box_goals(level: GridLevel, state: EnvState, goals: Sequence[Cell], budgets: Sequence[int],
                      choose: ActionChooser) -> np.ndarray:
    """Roll out one episode per goal, all stepped together; a box already on its goal succeeds at step 0"""
    goals = [tuple(goal) for goal in goals]
    goal_array = np.array(goals)
    budgets = np.asarray(budgets)
    states = [state] * len(goals)
    done = np.zeros(len(goals), dtype=bool)
    success = np.zeros(len(goals), dtype=bool)
    steps = 0
    while not done.all():
        for i in np.nonzero(~done)[0]:
            if states[i].box == goals[i]:
                success[i] = done[i] = True
            elif steps >= budgets[i]:
                done[i] = True
        active = np.nonzero(~done)[0]
        if len(active) == 0:
            break
        obs = np.stack([render_observation(level, states[i]) for i in active])
        actions = choose(obs, goal_array[active])
        for i, action in zip(active, actions):
            states[i] = sokoban_step(level, states[i], int(action))
        steps += 1
    return success


def _sokoban_rollouts(level: GridLevel, state: EnvState, budget_factor: float,
                      choose: ActionChooser) -> Tuple[int, int]:
    distance_map = sokoban_goal_map(level, state)
    goals = distance_map.feasible_goals()
    if not goals:
        return 0, 0
    budgets = [math.floor(budget_factor * distance_map.distance(goal)) for goal in goals]
    success = rollout_box_goals(level, state, goals, budgets, choose)
    return int(success.sum()), len(goals)


def _grouped_success(levels: Sequence[Tuple[GridLevel, EnvState]], budget_factor: float,
                     choose: ActionChooser, groups: int) -> SokobanEvaluation:
    outcomes = [_sokoban_rollouts(level, state, budget_factor, choose) for level, state in levels]
    group_rates = []
    for part in np.array_split(np.arange(len(outcomes)), min(groups, len(outcomes))):
        reached = sum(outcomes[i][0] for i in part)
        total = sum(outcomes[i][1] for i in part)
        if total:
            group_rates.append(reached / total)
    return SokobanEvaluation(
        success_rate=float(np.mean(group_rates)) if group_rates else 0.0,
        group_rates=group_rates,
        goals=sum(o[1] for o in outcomes),
        reached=sum(o[0] for o in outcomes),
    )


def eval_sokoban_success(source: QFrameSource, levels: Sequence[Tuple[GridLevel, EnvState]],
                         max_steps_factor: float = SOKOBAN_BUDGET_FACTOR,
                         groups: int = EVALUATION_GROUPS) -> SokobanEvaluation:
    """Share of feasible box goals reached by greedy play within the step budget"""

    def choose(obs: np.ndarray, goals: np.ndarray) -> np.ndarray:
        qframes = source.qframes(obs)
        return qframes[np.arange(len(goals)), :, goals[:, 0], goals[:, 1]].argmax(axis=1)

    evaluation = _grouped_success(levels, max_steps_factor, choose, groups)
    logger.info(f'Sokoban evaluation on {len(levels)} levels: {evaluation.reached}/{evaluation.goals} goals, '
                f'success {evaluation.success_rate:.4f}')
    return evaluation


def random_policy_sokoban_success(levels: Sequence[Tuple[GridLevel, EnvState]], seed: int = 0,
                                  max_steps_factor: float = SOKOBAN_BUDGET_FACTOR,
                                  groups: int = EVALUATION_GROUPS) -> SokobanEvaluation:
    rng = np.random.default_rng(seed)

    def choose(obs: np.ndarray, goals: np.ndarray) -> np.ndarray:
        return rng.integers(NUM_ACTIONS, size=len(goals))

    return _grouped_success(levels, max_steps_factor, choose, groups)
