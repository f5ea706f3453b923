from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmap.envs.base import Action, EnvState, GridLevel, LevelKind, move
from qmap.envs.coverage import COIN_REWARD, coverage_step, coverage_world_generate
from qmap.envs.env import CoverageEnv, MazeEnv, SokobanEnv, episode_seed, stream_seed
from qmap.envs.errors import LevelError
from qmap.envs.level_io import level_from_text, level_to_text, read_ppm, write_level, read_level, write_ppm
from qmap.envs.maze import generate_padded_maze, maze_generate, maze_step, maze_tree_counts
from qmap.envs.render import (MAZE_COLORS, SOKOBAN_COLORS, goal_conditioned_input, parse_maze_observation,
                              parse_sokoban_observation, render_observation)
from qmap.envs.sokoban import generate_sokoban_with_trace, sokoban_generate, sokoban_step
from qmap.services.oracle import sokoban_goal_map


def connected(level: GridLevel) -> bool:
    cells = level.pathway_cells()
    seen = {cells[0]}
    queue = deque([cells[0]])
    while queue:
        cell = queue.popleft()
        for action in Action:
            nxt = move(cell, action)
            if not level.is_wall(nxt) and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(cells)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), size=st.sampled_from([5, 7, 9, 11, 15]))
def test_maze_is_a_spanning_tree(seed, size):
    level = maze_generate(seed, size, size)
    pathways, edges = maze_tree_counts(level)
    assert edges == pathways - 1
    assert connected(level)
    assert level.walls[0].all() and level.walls[-1].all()


def test_maze_pathway_counts_in_band():
    counts = [generate_padded_maze(seed, 16).pathway_count for seed in range(30)]
    assert all(90 <= count <= 125 for count in counts)
    # a 7x7 cell lattice: 49 cells joined by 48 carved walls
    assert set(counts) == {97}


def test_maze_is_deterministic():
    assert maze_generate(7, 11, 11) == maze_generate(7, 11, 11)
    assert generate_padded_maze(7, 16).walls.shape == (16, 16)


def test_even_maze_extent_rejected():
    with pytest.raises(LevelError):
        maze_generate(0, 10, 11)


def test_maze_step_rules(l_corridor):
    level, state = l_corridor
    assert maze_step(level, state, Action.UP).agent == state.agent
    moved = maze_step(level, state, Action.RIGHT)
    assert moved.agent == (1, 2)
    assert moved.step_count == 1


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), actions=st.lists(st.integers(0, 3), max_size=60))
def test_maze_agent_never_enters_walls(seed, actions):
    level = generate_padded_maze(seed, 8)
    state = EnvState(agent=level.pathway_cells()[0])
    for action in actions:
        state = maze_step(level, state, action)
        assert not level.is_wall(state.agent)


def test_sokoban_push_and_blocked_push(sokoban_corridor):
    level, state = sokoban_corridor
    pushed = sokoban_step(level, state, Action.RIGHT)
    assert (pushed.agent, pushed.box) == ((1, 2), (1, 3))
    blocked = EnvState(agent=(1, 4), box=(1, 5))
    after = sokoban_step(level, blocked, Action.RIGHT)
    assert (after.agent, after.box) == ((1, 4), (1, 5))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 500), actions=st.lists(st.integers(0, 3), min_size=100, max_size=100))
def test_sokoban_box_and_agent_stay_apart(seed, actions):
    level, state = sokoban_generate(seed)
    for action in actions:
        state = sokoban_step(level, state, action)
        assert state.agent != state.box
        assert not level.is_wall(state.agent) and not level.is_wall(state.box)


@pytest.mark.parametrize('seed', [0, 1, 2, 3, 4])
def test_sokoban_generation_replays_to_start(seed):
    generated = generate_sokoban_with_trace(seed)
    state = generated.state
    for action in generated.forward_actions():
        state = sokoban_step(generated.level, state, action)
    assert state.box == generated.start_box


def test_sokoban_generation_is_deterministic_and_solvable():
    level, state = sokoban_generate(11, min_reachable_goals=3)
    again_level, again_state = sokoban_generate(11, min_reachable_goals=3)
    assert level == again_level and state == again_state
    assert len(sokoban_goal_map(level, state).feasible_goals()) >= 3


def test_coverage_world_coins():
    level, state = coverage_world_generate(3, 32, 32, coin_density=0.0)
    assert not state.coins.any()
    pathways, edges = maze_tree_counts(level)
    assert edges == pathways - 1

    level, state = coverage_world_generate(3, 32, 32, coin_density=0.3)
    eligible = level.pathway_count - 1
    sigma = np.sqrt(eligible * 0.3 * 0.7)
    assert abs(state.coins.sum() - 0.3 * eligible) <= 3 * sigma
    assert not state.coins[state.agent]
    assert not state.coins[level.walls].any()


def test_coin_pickup_rewards_once():
    walls = np.ones((3, 5), dtype=bool)
    walls[1, 1:4] = False
    coins = np.zeros_like(walls)
    coins[1, 2] = True
    level = GridLevel(walls=walls, kind=LevelKind.COVERAGE)
    state = EnvState(agent=(1, 1), coins=coins)
    state, reward = coverage_step(level, state, Action.RIGHT)
    assert reward == COIN_REWARD
    state, _ = coverage_step(level, state, Action.LEFT)
    _, reward = coverage_step(level, state, Action.RIGHT)
    assert reward == 0.0


def test_render_colors(l_corridor):
    level, state = l_corridor
    frame = render_observation(level, state, goal=(3, 3))
    assert frame.dtype == np.float32 and frame.shape == (3, 5, 5)
    assert tuple(frame[:, 1, 2]) == MAZE_COLORS['background']
    assert tuple(frame[:, 1, 1]) == MAZE_COLORS['agent']
    assert tuple(frame[:, 3, 3]) == MAZE_COLORS['goal']
    assert tuple(frame[:, 0, 0]) == MAZE_COLORS['wall']
    np.testing.assert_array_equal(frame, render_observation(level, state, goal=(3, 3)))
    with pytest.raises(LevelError):
        render_observation(level, state, goal=(0, 0))


def test_render_sokoban_and_parse(sokoban_corridor):
    level, state = sokoban_corridor
    frame = render_observation(level, state)
    assert tuple(frame[:, 1, 2]) == SOKOBAN_COLORS['box']
    assert tuple(frame[:, 1, 1]) == SOKOBAN_COLORS['agent']
    walls, agent, box = parse_sokoban_observation(frame)
    np.testing.assert_array_equal(walls, level.walls)
    assert (agent, box) == (state.agent, state.box)
    with pytest.raises(LevelError):
        render_observation(level, state, goal=(1, 4))


def test_parse_maze_observation(l_corridor):
    level, state = l_corridor
    walls, agent = parse_maze_observation(render_observation(level, state))
    np.testing.assert_array_equal(walls, level.walls)
    assert agent == state.agent


def test_goal_conditioned_input(l_corridor, sokoban_corridor):
    level, state = l_corridor
    obs = render_observation(level, state)[None].repeat(2, axis=0)
    marked = goal_conditioned_input(obs, np.array([[3, 3], [1, 1]]), LevelKind.MAZE)
    assert tuple(marked[0, :, 3, 3]) == MAZE_COLORS['goal']
    # the agent pixel wins over the goal pixel
    np.testing.assert_array_equal(marked[1], obs[1])

    level, state = sokoban_corridor
    obs = render_observation(level, state)[None]
    planes = goal_conditioned_input(obs, np.array([[1, 4]]), LevelKind.SOKOBAN)
    assert planes.shape == (1, 4, 3, 7)
    assert planes[0, 3].sum() == 1.0 and planes[0, 3, 1, 4] == 1.0


def test_level_text_round_trip(tmp_path):
    level, state = coverage_world_generate(5, 20, 18, 0.2)
    path = write_level(tmp_path / 'world.level', level, state)
    loaded_level, loaded_state = read_level(path)
    assert loaded_level == level and loaded_level.seed == 5
    assert loaded_state == EnvState(agent=state.agent, coins=state.coins)
    assert level_to_text(loaded_level, loaded_state) == level_to_text(level, state)


def test_level_text_errors():
    with pytest.raises(LevelError):
        level_from_text('')
    with pytest.raises(LevelError):
        level_from_text('maze 3 3 -\n###\n#.#\n###\n')
    with pytest.raises(LevelError):
        level_from_text('maze 3 3 -\n###\n#x#\n###\n')


def test_ppm_round_trip(tmp_path, sokoban_corridor):
    frame = render_observation(*sokoban_corridor)
    path = write_ppm(tmp_path / 'frame.ppm', frame)
    assert path.read_bytes().startswith(b'P6')
    np.testing.assert_array_equal(read_ppm(path), frame)


def test_maze_env_resets_to_start(l_corridor):
    level, _ = l_corridor
    env = MazeEnv(level, start=(1, 1))
    env.step(Action.RIGHT)
    result = env.step(Action.RIGHT)
    assert result.position == (1, 3) and not result.truncated
    env.reset()
    assert env.position == (1, 1)
    assert parse_maze_observation(env.place((3, 3)))[1] == (3, 3)


def test_coverage_env_truncates_episode():
    env = CoverageEnv(0, 17, 17, episode_steps=5)
    results = [env.step(Action.UP) for _ in range(5)]
    assert [r.truncated for r in results] == [False] * 4 + [True]


def test_sokoban_env_episodes_are_seeded():
    env = SokobanEnv(4, episode_steps=3)
    first = render_observation(env.level, env.state)
    assert env.position == env.state.box
    env.reset()
    assert env.episode == 1
    np.testing.assert_array_equal(env.start_episode(0), first)


def test_seed_streams_are_distinct():
    assert episode_seed(0, 1) == episode_seed(0, 1)
    assert stream_seed(0, 5, 0) != stream_seed(0, 6, 0)
    assert episode_seed(0, 0) != stream_seed(0, 5, 0)
