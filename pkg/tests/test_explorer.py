import numpy as np
import pandas as pd
import pytest

from qmap.envs.base import Action, LevelKind
from qmap.envs.env import CoverageEnv, MazeEnv
from qmap.models.layer import Which
from qmap.models.pair import ModelPair
from qmap.models.presets import preset
from qmap.models.training import ExplorePolicy, TrajectoryEnd
from qmap.schemas.training import ExplorationConfig, TrainingConfig
from qmap.services.combined import combined_agent_run, start_probability
from qmap.services.explorer import (CoverageRecord, Explorer, coverage_experiment, run_goal_trajectory,
                                    sample_exploration_goal)
from qmap.services.oracle import OracleAdapter
from qmap.services.replay import ReplayBuffer
from qmap.services.trainer import QMapTrainer

GAMMA = 0.9


class ZeroSource:
    def __init__(self, extent):
        self.extent = extent

    def qframes(self, obs, which=Which.ONLINE):
        return np.zeros((len(obs), 4) + self.extent, dtype=np.float32)


def test_value_window_bounds():
    low, high = ExplorationConfig().value_window
    assert low == pytest.approx(GAMMA ** 29)
    assert high == pytest.approx(GAMMA ** 14)


def test_goal_sampling_window():
    cfg = ExplorationConfig()
    rng = np.random.default_rng(0)
    assert sample_exploration_goal(np.zeros((4, 6, 6)), cfg, rng) is None

    frames = np.zeros((4, 6, 6))
    frames[2, 4, 1] = GAMMA ** 19
    frames[0, 0, 0] = GAMMA ** 5  # too close
    frames[1, 5, 5] = GAMMA ** 40  # too far
    assert sample_exploration_goal(frames, cfg, rng) == ((4, 1), 20)


def test_goal_sampling_first_action_filter():
    cfg = ExplorationConfig()
    frames = np.zeros((4, 6, 6))
    frames[2, 4, 1] = GAMMA ** 19
    frames[3, 1, 4] = GAMMA ** 20
    rng = np.random.default_rng(1)
    assert sample_exploration_goal(frames, cfg, rng, first_action=Action.LEFT) == ((4, 1), 20)
    assert sample_exploration_goal(frames, cfg, rng, first_action=Action.RIGHT) == ((1, 4), 21)
    assert sample_exploration_goal(frames, cfg, rng, first_action=Action.UP) is None


def test_goal_sampling_is_uniform_over_candidates():
    frames = np.zeros((4, 4, 4))
    frames[0, 1, 1] = frames[0, 2, 2] = GAMMA ** 20
    rng = np.random.default_rng(2)
    picks = {sample_exploration_goal(frames, ExplorationConfig(), rng)[0] for _ in range(50)}
    assert picks == {(1, 1), (2, 2)}


def test_trajectory_stops_at_budget(l_corridor):
    env = MazeEnv(l_corridor[0], start=(1, 1))
    trajectory = run_goal_trajectory(env, ZeroSource((5, 5)), (3, 3), 20, ExplorationConfig(),
                                     np.random.default_rng(0))
    assert trajectory.steps == 30
    assert trajectory.end == TrajectoryEnd.BUDGET


def test_trajectory_respects_limit(l_corridor):
    env = MazeEnv(l_corridor[0], start=(1, 1))
    trajectory = run_goal_trajectory(env, ZeroSource((5, 5)), (3, 3), 20, ExplorationConfig(),
                                     np.random.default_rng(0), limit=5)
    assert trajectory.steps == 5


def test_adjacent_goal_reached_in_one_step(l_corridor):
    env = MazeEnv(l_corridor[0], start=(1, 1))
    buffer = ReplayBuffer(env.shape)
    trajectory = run_goal_trajectory(env, OracleAdapter(LevelKind.MAZE, GAMMA), (1, 2), 1,
                                     ExplorationConfig(), np.random.default_rng(0), buffer=buffer)
    assert trajectory.end == TrajectoryEnd.REACHED
    assert trajectory.steps == 1
    assert len(buffer) == 1
    assert tuple(buffer.gather(np.array([0])).reached[0]) == (1, 2)


def test_trajectory_ends_with_episode():
    env = CoverageEnv(0, 17, 17, episode_steps=3)
    trajectory = run_goal_trajectory(env, ZeroSource((17, 17)), (0, 0), 20, ExplorationConfig(),
                                     np.random.default_rng(0))
    assert trajectory.end == TrajectoryEnd.TRUNCATED
    assert trajectory.steps == 3
    assert env.state.step_count == 0


def test_oracle_goal_trajectories_arrive_on_time():
    env = CoverageEnv(2, 17, 17, episode_steps=None)
    cfg = ExplorationConfig(k_min=3, k_max=6, eps_start=0.0, eps_end=0.0)
    explorer = Explorer(env, ReplayBuffer(env.shape), cfg, horizon=200, seed=0,
                        source=OracleAdapter(LevelKind.COVERAGE, GAMMA))
    for _ in range(5):
        trajectory = explorer.goal_trajectory()
        assert trajectory.end == TrajectoryEnd.REACHED
        assert trajectory.steps == trajectory.predicted_steps
        assert 3 <= trajectory.steps <= 6
    assert explorer.exploration_steps == explorer.total_steps == len(explorer.buffer)


def test_coverage_record():
    record = CoverageRecord.create((3, 3), seed=4)
    record.visit((1, 1), 1)
    record.visit((1, 1), 2)
    record.visit((1, 2), 3)
    assert record.cumulative == [1, 1, 2]
    assert record.first_visit[1, 2] == 3
    curve = record.curve()
    assert list(curve.columns) == ['step', 'unique_cells', 'seed']
    assert curve['seed'].unique().tolist() == [4]


def coverage_env():
    return CoverageEnv(0, 17, 17, episode_steps=None)


def test_random_coverage_is_seeded(tmp_path):
    first = coverage_experiment(coverage_env, ExplorePolicy.RANDOM, 200, seeds=[0, 1])
    second = coverage_experiment(coverage_env, ExplorePolicy.RANDOM, 200, seeds=[0, 1])
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.first_visit, b.first_visit)
    record = first[0]
    level = coverage_env().level
    assert len(record.cumulative) == 200
    assert np.all(np.diff(record.cumulative) >= 0)
    assert record.unique <= level.pathway_count
    assert not (record.first_visit[level.walls] >= 0).any()
    path = record.to_csv(tmp_path / 'first_visit.csv')
    assert pd.read_csv(path, header=None).shape == (17, 17)


def test_random_goal_coverage_needs_trainer():
    with pytest.raises(ValueError):
        coverage_experiment(coverage_env, ExplorePolicy.RANDOM_GOAL, 10, seeds=[0])


def test_random_goal_coverage_uses_whole_budget():
    spec = preset('scaled-coverage-qmap-compress', 24, 24, scale=0.125)

    def make_trainer(buffer, seed):
        return QMapTrainer(ModelPair(spec, seed=seed), buffer, TrainingConfig(batch=8))

    records = coverage_experiment(lambda: CoverageEnv(0, 24, 24, episode_steps=None), ExplorePolicy.RANDOM_GOAL,
                                  40, seeds=[3], make_trainer=make_trainer)
    assert len(records[0].cumulative) == 40


def test_start_probability():
    assert start_probability(0.0, 0, 10.0) == 0.0
    assert start_probability(10.0, 5, 5.0) == 1.0
    assert start_probability(7.0, 5, 4.0) == 0.5
    assert start_probability(3.0, 8, 4.0) == 0.0


def test_scheduled_exploration_integral():
    cfg = ExplorationConfig()
    assert cfg.scheduled_exploration_steps(0, 100) == 0.0
    assert cfg.scheduled_exploration_steps(100, 100) == pytest.approx(52.5)
    assert cfg.scheduled_exploration_steps(120, 100) == pytest.approx(53.5)
    assert cfg.epsilon_at(50, 100) == pytest.approx(0.075)


def combined_pairs(extent=24):
    qmap = ModelPair(preset('scaled-coverage-qmap-compress', extent, extent, scale=0.125), seed=0)
    task = ModelPair(preset('scaled-coverage-task-dqn', extent, extent, scale=0.125), seed=1)
    return task, qmap


def test_combined_agent_without_exploration_follows_task():
    env = CoverageEnv(0, 24, 24, episode_steps=None)
    task, qmap = combined_pairs()
    cfg = ExplorationConfig(schedule_start=0.0, schedule_end=0.0)
    run = combined_agent_run(env, task, qmap, cfg, steps=30, seed=0)
    assert run.exploration_steps == 0
    assert run.trajectories == 0
    assert run.realized_share == 0.0
    assert len(run.rewards) == 30
    assert len(run.record.cumulative) == 30


def test_combined_agent_is_seeded():
    cfg = ExplorationConfig(schedule_start=0.5, schedule_end=0.5)
    runs = []
    for _ in range(2):
        task, qmap = combined_pairs()
        runs.append(combined_agent_run(CoverageEnv(1, 24, 24, episode_steps=None), task, qmap, cfg,
                                       steps=40, seed=2))
    np.testing.assert_array_equal(runs[0].record.first_visit, runs[1].record.first_visit)
    assert runs[0].exploration_steps == runs[1].exploration_steps
    assert runs[0].scheduled_share == pytest.approx(0.5)


def test_combined_agent_realized_share_tracks_schedule():
    task, qmap = combined_pairs()
    # no learning: only the start-probability controller steers exploration
    cfg = ExplorationConfig(learning_starts=10 ** 9)
    run = combined_agent_run(CoverageEnv(0, 24, 24, episode_steps=None), task, qmap, cfg, steps=2_000, seed=0)
    assert run.steps == len(run.rewards) == 2_000
    assert run.scheduled_share == pytest.approx(0.525)
    assert abs(run.realized_share - run.scheduled_share) <= 0.05
