"""Task learner plus Q-map exploration sharing one replay buffer.

Free steps either start a goal trajectory or follow the task learner. The
chance of starting a trajectory is steered so that realized exploration
tracks the scheduled amount.
"""
import logging
from collections import deque
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from qmap.envs.env import GridEnv
from qmap.models.layer import Which
from qmap.models.pair import ModelPair
from qmap.schemas.training import ExplorationConfig, TrainingConfig
from qmap.services.explorer import CoverageRecord, Explorer
from qmap.services.replay import ReplayBuffer
from qmap.services.trainer import QMapTrainer, TaskTrainer

logger = logging.getLogger(__name__)


@dataclass
class CombinedRun:
    record: CoverageRecord
    # cumulative environment reward after each step
    rewards: np.ndarray
    episode_returns: List[float]
    exploration_steps: int
    scheduled_steps: float
    steps: int
    trajectories: int

    @property
    def realized_share(self) -> float:
        return self.exploration_steps / self.steps if self.steps else 0.0

    @property
    def scheduled_share(self) -> float:
        return self.scheduled_steps / self.steps if self.steps else 0.0


def start_probability(scheduled: float, explored: int, mean_length: float) -> float:
    """clamp((scheduled exploration so far - realized) / mean trajectory length, 0, 1)"""
    return float(np.clip((scheduled - explored) / max(mean_length, 1.0), 0.0, 1.0))


def combined_agent_run(env: GridEnv, task_pair: ModelPair, qmap_pair: ModelPair, cfg: ExplorationConfig,
                       steps: int, training: Optional[TrainingConfig] = None, seed: int = 0) -> CombinedRun:
    training = training or TrainingConfig()
    buffer = ReplayBuffer(env.shape, seed=seed, capacity=training.buffer_capacity)
    trainers = [TaskTrainer(task_pair, buffer, training), QMapTrainer(qmap_pair, buffer, training)]
    explorer = Explorer(env, buffer, cfg, steps, seed, source=qmap_pair, trainers=trainers)
    lengths = deque([(cfg.k_min + cfg.k_max) / 2.0], maxlen=cfg.trajectory_window)

    while explorer.remaining > 0:
        scheduled = cfg.scheduled_exploration_steps(explorer.total_steps, steps)
        p = start_probability(scheduled, explorer.exploration_steps, float(np.mean(lengths)))
        task_action = int(np.argmax(task_pair.qvalues(env.observation()[None], Which.ONLINE)[0]))
        if p > 0.0 and explorer.rng.random() < p:
            aligned = explorer.rng.random() < cfg.goal_align_prob
            trajectory = explorer.goal_trajectory(task_action if aligned else None)
            if trajectory is None:
                explorer.random_step()
            else:
                lengths.append(trajectory.steps)
        else:
            explorer.act(task_action)

    returns = list(explorer.episode_returns)
    if explorer.episode_return:
        returns.append(explorer.episode_return)
    run = CombinedRun(record=explorer.record, rewards=np.asarray(explorer.reward_trace), episode_returns=returns,
                      exploration_steps=explorer.exploration_steps,
                      scheduled_steps=cfg.scheduled_exploration_steps(steps, steps), steps=steps,
                      trajectories=len(explorer.trajectories))
    logger.info(f'Combined agent: {run.realized_share:.3f} exploration share '
                f'(scheduled {run.scheduled_share:.3f}), return {explorer.total_reward:.2f}')
    return run
