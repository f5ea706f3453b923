"""All-goals training: target Q-frames, masked updates and goal relabeling.

Anything with a ``qframes(obs, which)`` method can serve as the evaluator of
next observations: a ModelPair, a GoalInInputAdapter, a tabular QTable or
the ground-truth OracleAdapter.
"""
import logging
from typing import Any, Dict, List, Optional, Protocol, Tuple

import numpy as np

from qmap.engine.ops import masked_mse_loss
from qmap.envs.base import LevelKind
from qmap.envs.render import MAZE_COLORS, SOKOBAN_COLORS, goal_conditioned_input
from qmap.models.layer import OutputKind, Which
from qmap.models.pair import ModelPair
from qmap.models.training import Relabel
from qmap.schemas.training import TrainingConfig
from qmap.services.errors import ContractViolation
from qmap.services.oracle import OracleAdapter, goal_map
from qmap.services.replay import ReplayBuffer, TransitionBatch

logger = logging.getLogger(__name__)

# goal-in-input evaluation rows per forward pass
ADAPTER_CHUNK = 1_024
# feasible-goal masks kept per distinct frame
FEASIBLE_CACHE_SIZE = 4_096


class QFrameSource(Protocol):
    def qframes(self, obs: np.ndarray, which: Which = Which.ONLINE) -> np.ndarray:
        ...


def shift_target_frame(frame: np.ndarray, drow: int, dcol: int) -> np.ndarray:
    """Move content by (-drow, -dcol) over the last two axes, zero-filling vacated cells"""
    shifted = np.zeros_like(frame)
    height, width = frame.shape[-2:]
    if abs(drow) >= height or abs(dcol) >= width:
        return shifted
    src_rows = slice(max(drow, 0), height + min(drow, 0))
    dst_rows = slice(max(-drow, 0), height + min(-drow, 0))
    src_cols = slice(max(dcol, 0), width + min(dcol, 0))
    dst_cols = slice(max(-dcol, 0), width + min(-dcol, 0))
    shifted[..., dst_rows, dst_cols] = frame[..., src_rows, src_cols]
    return shifted


def scale_coordinates(coords: np.ndarray, obs_extent: Tuple[int, int], frame_extent: Tuple[int, int]) -> np.ndarray:
    """floor(coordinate * frame extent / observation extent), per axis"""
    coords = np.asarray(coords, dtype=np.int64)
    if tuple(obs_extent) == tuple(frame_extent):
        return coords
    scale = np.asarray(frame_extent, dtype=np.int64)
    return np.floor_divide(coords * scale, np.asarray(obs_extent, dtype=np.int64))


def bootstrap_values(next_q: np.ndarray, next_q_online: Optional[np.ndarray]) -> np.ndarray:
    """Per-goal value of the next state: double-Q selection when online values are given, else max"""
    if next_q_online is None:
        return next_q.max(axis=1)
    choice = next_q_online.argmax(axis=1)
    return np.take_along_axis(next_q, choice[:, None], axis=1)[:, 0]


def compute_target_qframes(source: QFrameSource, batch: TransitionBatch, cfg: TrainingConfig,
                           stats: Optional[Dict[str, int]] = None) -> np.ndarray:
    """One target frame per sample: best next value, clipped, discounted, shifted, reached cell set to 1"""
    if len(batch) == 0:
        raise ValueError('empty batch')
    next_q = source.qframes(batch.next_obs, Which.TARGET)
    next_online = source.qframes(batch.next_obs, Which.ONLINE) if cfg.double_q else None
    frames = np.clip(bootstrap_values(next_q, next_online), cfg.clip_low, cfg.clip_high) * cfg.gamma

    obs_extent = batch.obs.shape[-2:]
    frame_extent = frames.shape[-2:]
    shifts = scale_coordinates(batch.shifts, obs_extent, frame_extent)
    for i in np.nonzero(np.any(shifts != 0, axis=1))[0]:
        frames[i] = shift_target_frame(frames[i], int(shifts[i, 0]), int(shifts[i, 1]))

    reached = scale_coordinates(batch.reached, obs_extent, frame_extent)
    inside = ((reached[:, 0] >= 0) & (reached[:, 0] < frame_extent[0])
              & (reached[:, 1] >= 0) & (reached[:, 1] < frame_extent[1]))
    rows = np.nonzero(inside)[0]
    frames[rows, reached[rows, 0], reached[rows, 1]] = 1.0
    skipped = int(len(batch) - len(rows))
    if skipped:
        logger.warning(f'{skipped} reached coordinates fell outside the shifted frame')
        if stats is not None:
            stats['skipped_reached'] = stats.get('skipped_reached', 0) + skipped
    return frames.astype(np.float32)


def tracked_cells(obs: np.ndarray, kind: LevelKind) -> Tuple[np.ndarray, np.ndarray]:
    """Wall masks (N, H, W) and tracked coordinates (N, 2) read off a batch of frames"""
    colors = SOKOBAN_COLORS if kind == LevelKind.SOKOBAN else MAZE_COLORS
    tracked_color = colors['box'] if kind == LevelKind.SOKOBAN else colors['agent']
    rgb = obs[:, :3]
    walls = np.all(rgb == np.asarray(colors['wall'], dtype=obs.dtype)[None, :, None, None], axis=1)
    hits = np.all(rgb == np.asarray(tracked_color, dtype=obs.dtype)[None, :, None, None], axis=1)
    flat = hits.reshape(len(obs), -1).argmax(axis=1)
    cells = np.stack(np.unravel_index(flat, obs.shape[-2:]), axis=1)
    return walls, cells


class GoalInInputAdapter:
    """Q-frames of a goal-in-input network, one replicated observation per goal cell"""

    def __init__(self, pair: ModelPair, kind: LevelKind):
        if pair.spec.output != OutputKind.QVECTOR:
            raise ContractViolation(f'{pair.spec.name} already outputs Q-frames')
        self.pair = pair
        self.kind = LevelKind(kind)

    def qframes(self, obs: np.ndarray, which: Which = Which.ONLINE) -> np.ndarray:
        n, _, height, width = obs.shape
        goals = np.stack(np.unravel_index(np.arange(height * width), (height, width)), axis=1)
        rows = np.repeat(np.arange(n), height * width)
        all_goals = np.tile(goals, (n, 1))
        values = np.empty((len(rows), self.pair.spec.num_actions), dtype=np.float32)
        for start in range(0, len(rows), ADAPTER_CHUNK):
            part = slice(start, start + ADAPTER_CHUNK)
            inputs = goal_conditioned_input(obs[rows[part], :3], all_goals[part], self.kind)
            values[part] = self.pair.qvalues(inputs, which)
        return values.reshape(n, height, width, -1).transpose(0, 3, 1, 2)


def goal_qframes(pair: ModelPair, obs: np.ndarray, kind: LevelKind, which: Which = Which.ONLINE) -> np.ndarray:
    return GoalInInputAdapter(pair, kind).qframes(obs, which)


class Trainer:
    """Shared update loop: sample, build targets, masked regression, Adam, periodic sync"""

    def __init__(self, pair: ModelPair, buffer: ReplayBuffer, cfg: TrainingConfig):
        self.pair = pair
        self.buffer = buffer
        self.cfg = cfg
        self.losses: List[float] = []
        self.stats: Dict[str, int] = {'skipped_reached': 0}
        self.logger = logger

    @property
    def updates(self) -> int:
        return self.pair.updates

    def _targets(self, batch: TransitionBatch) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(network input, full target tensor, taken actions)"""
        raise NotImplementedError

    def _sample(self) -> TransitionBatch:
        if len(self.buffer) < self.cfg.batch:
            raise ValueError(f'buffer holds {len(self.buffer)} transitions, batch needs {self.cfg.batch}')
        return self.buffer.sample(self.cfg.batch)

    def train_step(self) -> float:
        inputs, target, actions = self._targets(self._sample())
        network = self.pair.network
        q, cache = network.forward(self.pair.online, inputs, keep_cache=True)
        full_target = q.copy()
        rows = np.arange(len(actions))
        full_target[rows, actions] = target
        loss, q_grad = masked_mse_loss(q, full_target, actions)
        grads = network.backward(self.pair.online, cache, q_grad)
        self.pair.apply_gradients(grads)
        if self.pair.updates % self.cfg.target_sync_period == 0:
            self.pair.sync_target()
        self.losses.append(loss)
        return loss

    def train(self, updates: int) -> List[float]:
        return [self.train_step() for _ in range(updates)]

    def state(self) -> Dict[str, Any]:
        """Counters and RNG states needed to resume bit-identically"""
        return {
            'sampler_state': self.buffer.sampler.bit_generator.state,
            'stats': dict(self.stats),
        }

    def restore(self, state: Dict[str, Any]) -> None:
        if state.get('sampler_state'):
            self.buffer.sampler.bit_generator.state = state['sampler_state']
        self.stats.update(state.get('stats', {}))


class QMapTrainer(Trainer):
    def __init__(self, pair: ModelPair, buffer: ReplayBuffer, cfg: TrainingConfig):
        if pair.spec.output != OutputKind.QFRAMES:
            raise ContractViolation(f'{pair.spec.name} is not a Q-map preset')
        if tuple(pair.spec.input_shape) != tuple(buffer.obs_shape):
            raise ContractViolation(f'preset {pair.spec.name} expects {pair.spec.input_shape}, '
                                    f'dataset holds {buffer.obs_shape}')
        super().__init__(pair, buffer, cfg)

    def _targets(self, batch: TransitionBatch):
        return batch.obs, compute_target_qframes(self.pair, batch, self.cfg, self.stats), batch.actions


def qmap_train_step(pair: ModelPair, buffer: ReplayBuffer, cfg: TrainingConfig) -> Tuple[float, ModelPair]:
    loss = QMapTrainer(pair, buffer, cfg).train_step()
    return loss, pair


class BaselineTrainer(Trainer):
    """Goal-in-input network trained on relabeled goals"""

    def __init__(self, pair: ModelPair, buffer: ReplayBuffer, cfg: TrainingConfig, kind: LevelKind, seed: int = 0):
        if pair.spec.output != OutputKind.QVECTOR:
            raise ContractViolation(f'{pair.spec.name} is not a goal-in-input preset')
        if tuple(pair.spec.input_shape[1:]) != tuple(buffer.obs_shape[1:]):
            raise ContractViolation(f'preset {pair.spec.name} expects {pair.spec.input_shape[1:]} frames, '
                                    f'dataset holds {buffer.obs_shape[1:]}')
        super().__init__(pair, buffer, cfg)
        self.kind = LevelKind(kind)
        self.relabel_rng = np.random.default_rng([seed, 2])
        self.oracle = OracleAdapter(self.kind)
        self._feasible: Dict[bytes, np.ndarray] = {}

    def _sample(self) -> TransitionBatch:
        if self.cfg.relabel == Relabel.ALL_GOALS:
            return self.buffer.sample(1)
        return super()._sample()

    def relabel(self, batch: TransitionBatch) -> Tuple[TransitionBatch, np.ndarray]:
        """Attach goals: every cell for all-goals, one random feasible cell per sample otherwise"""
        height, width = batch.obs.shape[-2:]
        if self.cfg.relabel == Relabel.ALL_GOALS:
            goals = np.stack(np.unravel_index(np.arange(height * width), (height, width)), axis=1)
            return batch.take(np.zeros(len(goals), dtype=np.int64)), goals

        walls, tracked = tracked_cells(batch.obs, self.kind)
        goals = np.empty((len(batch), 2), dtype=np.int64)
        for i in range(len(batch)):
            cells = np.argwhere(self.feasible_goals(batch.obs[i]))
            if not len(cells):
                # deadlocked box: no destination is reachable
                candidates = ~walls[i]
                candidates[tracked[i, 0], tracked[i, 1]] = False
                cells = np.argwhere(candidates)
            goals[i] = cells[int(self.relabel_rng.integers(len(cells)))]
        return batch, goals

    def feasible_goals(self, frame: np.ndarray) -> np.ndarray:
        """Cells the tracked coordinate can be moved to, excluding where it stands"""
        key = frame[:3].tobytes()
        mask = self._feasible.get(key)
        if mask is None:
            level, state = self.oracle.state_from_observation(frame[:3])
            mask = goal_map(level, state).feasible_mask()
            if len(self._feasible) >= FEASIBLE_CACHE_SIZE:
                self._feasible.pop(next(iter(self._feasible)))
            self._feasible[key] = mask
        return mask

    def goal_targets(self, batch: TransitionBatch, goals: np.ndarray) -> np.ndarray:
        next_inputs = goal_conditioned_input(batch.next_obs, goals, self.kind)
        next_q = self.pair.qvalues(next_inputs, Which.TARGET)
        if self.cfg.double_q:
            choice = self.pair.qvalues(next_inputs, Which.ONLINE).argmax(axis=1)
            best = next_q[np.arange(len(choice)), choice]
        else:
            best = next_q.max(axis=1)
        target = np.clip(best, self.cfg.clip_low, self.cfg.clip_high) * self.cfg.gamma
        success = np.all(batch.reached == goals, axis=1)
        target[success] = 1.0
        return target.astype(np.float32)

    def _targets(self, batch: TransitionBatch):
        batch, goals = self.relabel(batch)
        inputs = goal_conditioned_input(batch.obs, goals, self.kind)
        return inputs, self.goal_targets(batch, goals), batch.actions

    def state(self) -> Dict[str, Any]:
        state = super().state()
        state['relabel_state'] = self.relabel_rng.bit_generator.state
        return state

    def restore(self, state: Dict[str, Any]) -> None:
        super().restore(state)
        if state.get('relabel_state'):
            self.relabel_rng.bit_generator.state = state['relabel_state']


def baseline_train_step(pair: ModelPair, buffer: ReplayBuffer, cfg: TrainingConfig, kind: LevelKind,
                        seed: int = 0) -> Tuple[float, ModelPair]:
    loss = BaselineTrainer(pair, buffer, cfg, kind, seed).train_step()
    return loss, pair


class TaskTrainer(Trainer):
    """One-step DQN on environment reward, without terminal states"""

    def __init__(self, pair: ModelPair, buffer: ReplayBuffer, cfg: TrainingConfig):
        if pair.spec.output != OutputKind.QVECTOR:
            raise ContractViolation(f'{pair.spec.name} is not a per-action Q-network')
        super().__init__(pair, buffer, cfg)

    def _targets(self, batch: TransitionBatch):
        next_q = self.pair.qvalues(batch.next_obs, Which.TARGET)
        if self.cfg.double_q:
            choice = self.pair.qvalues(batch.next_obs, Which.ONLINE).argmax(axis=1)
            best = next_q[np.arange(len(choice)), choice]
        else:
            best = next_q.max(axis=1)
        target = batch.rewards + self.cfg.gamma * best
        return batch.obs, target.astype(np.float32), batch.actions
