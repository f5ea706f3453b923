import numpy as np
import pytest

from qmap.envs.base import Action, LevelKind
from qmap.envs.env import episode_seed
from qmap.envs.maze import generate_padded_maze
from qmap.envs.sokoban import sokoban_generate
from qmap.models.layer import Which
from qmap.services.errors import ContractViolation
from qmap.services.evaluator import (eval_maze_success, eval_sokoban_success, greedy_action,
                                     held_out_sokoban_levels, random_policy_sokoban_success, rollout_box_goals)
from qmap.services.oracle import OracleAdapter, tabular_all_goals_q


class FixedActionSource:
    """Every goal prefers the same action"""

    def __init__(self, action, extent):
        self.action = action
        self.extent = extent

    def qframes(self, obs, which=Which.ONLINE):
        frames = np.zeros((len(obs), 4) + self.extent, dtype=np.float32)
        frames[:, self.action] = 0.5
        return frames


def test_greedy_action_ties_go_to_lowest_index():
    assert greedy_action(np.zeros((4, 3, 3)), (1, 1)) == Action.UP
    frames = np.zeros((4, 3, 3))
    frames[:, 2, 0] = [0.1, 0.9, 0.2, 0.3]
    assert greedy_action(frames, (2, 0)) == Action.DOWN


@pytest.fixture
def mazes():
    return [generate_padded_maze(seed, 8) for seed in range(3)]


def test_oracle_solves_mazes(mazes):
    evaluation = eval_maze_success(OracleAdapter(LevelKind.MAZE, 0.9), mazes, workers=2)
    assert evaluation.success_rate == 1.0
    assert evaluation.level_rates == [1.0, 1.0, 1.0]
    assert evaluation.wall_value == 0.0
    assert evaluation.pairs == sum(p * (p - 1) for p in (level.pathway_count for level in mazes))


def test_tabular_q_solves_its_maze(mazes):
    table = tabular_all_goals_q(mazes[0], 0.9)
    assert eval_maze_success(table, mazes[:1]).success_rate == 1.0


def test_fixed_action_falls_short(mazes):
    evaluation = eval_maze_success(FixedActionSource(Action.RIGHT, (8, 8)), mazes)
    assert 0.0 < evaluation.success_rate < 1.0
    assert evaluation.metrics()['wall_value'] == pytest.approx(0.5)


def test_frames_must_cover_the_maze(mazes):
    with pytest.raises(ContractViolation):
        eval_maze_success(FixedActionSource(Action.UP, (4, 4)), mazes)


def test_oracle_pushes_box_to_every_goal(sokoban_corridor, corner_deadlock):
    evaluation = eval_sokoban_success(OracleAdapter(LevelKind.SOKOBAN, 0.9), [sokoban_corridor, corner_deadlock])
    assert evaluation.goals == 3
    assert evaluation.reached == 3
    # the deadlocked level has no goals and forms no group
    assert evaluation.group_rates == [1.0]
    assert evaluation.success_rate == 1.0


def test_wrong_direction_never_pushes(sokoban_corridor):
    evaluation = eval_sokoban_success(FixedActionSource(Action.LEFT, (3, 7)), [sokoban_corridor])
    assert evaluation.reached == 0 and evaluation.success_rate == 0.0


def test_box_on_goal_succeeds_at_step_zero(sokoban_corridor):
    level, state = sokoban_corridor
    calls = []

    def choose(obs, goals):
        calls.append(len(goals))
        return np.full(len(goals), int(Action.LEFT))

    success = rollout_box_goals(level, state, [state.box, (1, 3)], [0, 2], choose)
    assert success.tolist() == [True, False]
    # only the unreached goal was ever stepped
    assert calls == [1, 1]


def test_random_policy_floor_is_seeded(sokoban_corridor):
    first = random_policy_sokoban_success([sokoban_corridor], seed=1)
    second = random_policy_sokoban_success([sokoban_corridor], seed=1)
    assert first.reached == second.reached
    assert 0.0 <= first.success_rate <= 1.0


def test_held_out_levels_are_reproducible_and_distinct():
    levels = held_out_sokoban_levels(0, 2)
    again = held_out_sokoban_levels(0, 2)
    assert all(a[0] == b[0] and a[1] == b[1] for a, b in zip(levels, again))
    training_level, _ = sokoban_generate(episode_seed(0, 0))
    assert levels[0][0] != training_level
