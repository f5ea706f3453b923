"""Transition storage with uniform sampling.

Observations are kept quantized to 8 bits; rendered frames only hold 0 and 1
so nothing is lost. Buffers are unlimited by default or a ring when given a
capacity.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from qmap.envs.base import Cell
from qmap.schemas.checkpoint import BufferManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'buffer.json'
INITIAL_ROOM = 1_024
# name -> (on-disk dtype, per-transition shape, or None for the observation shape)
FIELDS: Dict[str, Tuple[np.dtype, Optional[Tuple[int, ...]]]] = {
    'obs': (np.dtype('u1'), None),
    'next_obs': (np.dtype('u1'), None),
    'actions': (np.dtype('u1'), ()),
    'reached': (np.dtype('<i2'), (2,)),
    'shifts': (np.dtype('<i2'), (2,)),
    'rewards': (np.dtype('<f4'), ()),
}


def quantize(frames: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize(frames: np.ndarray) -> np.ndarray:
    return frames.astype(np.float32) / 255.0


@dataclass
class TransitionBatch:
    obs: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    reached: np.ndarray
    shifts: np.ndarray
    rewards: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    def take(self, rows: np.ndarray) -> 'TransitionBatch':
        return TransitionBatch(obs=self.obs[rows], actions=self.actions[rows], next_obs=self.next_obs[rows],
                               reached=self.reached[rows], shifts=self.shifts[rows], rewards=self.rewards[rows],
                               indices=self.indices[rows])


class ReplayBuffer:
    def __init__(self, obs_shape: Tuple[int, int, int], seed: int = 0, capacity: Optional[int] = None):
        self.obs_shape = tuple(obs_shape)
        self.seed = seed
        self.capacity = capacity
        self.count = 0
        self.next_index = 0
        self.sampler = np.random.default_rng(seed)
        self.logger = logger
        self._arrays = {name: self._empty(name, capacity or INITIAL_ROOM) for name in FIELDS}

    def _empty(self, name: str, rows: int) -> np.ndarray:
        dtype, shape = FIELDS[name]
        return np.zeros((rows,) + (self.obs_shape if shape is None else shape), dtype=dtype)

    def __len__(self) -> int:
        return self.count

    @property
    def has_reward(self) -> bool:
        return bool(np.any(self._arrays['rewards'][:self.count]))

    def _reserve(self, extra: int) -> None:
        room = self._arrays['actions'].shape[0]
        if self.capacity is not None or self.count + extra <= room:
            return
        while room < self.count + extra:
            room *= 2
        for name, array in self._arrays.items():
            grown = self._empty(name, room)
            grown[:self.count] = array[:self.count]
            self._arrays[name] = grown

    def add(self, obs: np.ndarray, action: int, next_obs: np.ndarray, reached: Cell,
            shift: Tuple[int, int] = (0, 0), reward: float = 0.0) -> None:
        self.extend(obs[None], np.array([action]), next_obs[None], np.array([reached]),
                    np.array([shift]), np.array([reward], dtype=np.float32))

    def extend(self, obs: np.ndarray, actions: np.ndarray, next_obs: np.ndarray, reached: np.ndarray,
               shifts: Optional[np.ndarray] = None, rewards: Optional[np.ndarray] = None) -> None:
        n = len(actions)
        if tuple(obs.shape[1:]) != self.obs_shape or tuple(next_obs.shape[1:]) != self.obs_shape:
            raise ValueError(f'observations {obs.shape[1:]} do not match buffer shape {self.obs_shape}')
        values = {
            'obs': quantize(obs),
            'next_obs': quantize(next_obs),
            'actions': np.asarray(actions, dtype=np.uint8),
            'reached': np.asarray(reached, dtype=np.int16).reshape(n, 2),
            'shifts': np.zeros((n, 2), dtype=np.int16) if shifts is None else np.asarray(shifts, dtype=np.int16),
            'rewards': np.zeros(n, dtype=np.float32) if rewards is None else np.asarray(rewards, dtype=np.float32),
        }
        if self.capacity is None:
            self._reserve(n)
            rows = np.arange(self.count, self.count + n)
            self.count += n
            self.next_index = self.count
        else:
            rows = (self.next_index + np.arange(n)) % self.capacity
            self.next_index = int((self.next_index + n) % self.capacity)
            self.count = min(self.count + n, self.capacity)
        for name, value in values.items():
            self._arrays[name][rows] = value

    def gather(self, indices: np.ndarray) -> TransitionBatch:
        indices = np.asarray(indices, dtype=np.int64)
        return TransitionBatch(
            obs=dequantize(self._arrays['obs'][indices]),
            actions=self._arrays['actions'][indices].astype(np.int64),
            next_obs=dequantize(self._arrays['next_obs'][indices]),
            reached=self._arrays['reached'][indices].astype(np.int64),
            shifts=self._arrays['shifts'][indices].astype(np.int64),
            rewards=self._arrays['rewards'][indices].copy(),
            indices=indices,
        )

    def sample(self, batch: int) -> TransitionBatch:
        if self.count == 0:
            raise ValueError('cannot sample from an empty replay buffer')
        return self.gather(self.sampler.integers(self.count, size=batch))

    def save(self, directory) -> Path:
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        manifest = BufferManifest(count=self.count, capacity=self.capacity, obs_shape=self.obs_shape,
                                  seed=self.seed, next_index=self.next_index,
                                  sampler_state=self.sampler.bit_generator.state, has_reward=self.has_reward)
        for name, array in self._arrays.items():
            np.ascontiguousarray(array[:self.count]).tofile(path / f'{name}.bin')
        (path / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2))
        self.logger.info(f'Saved replay buffer with {self.count} transitions to {path}')
        return path

    @classmethod
    def load(cls, directory) -> 'ReplayBuffer':
        path = Path(directory)
        manifest = BufferManifest.model_validate_json((path / MANIFEST_NAME).read_text())
        buffer = cls(manifest.obs_shape, seed=manifest.seed, capacity=manifest.capacity)
        rows = max(manifest.count, manifest.capacity or 0, 1)
        for name in FIELDS:
            array = buffer._empty(name, rows)
            data = np.fromfile(path / f'{name}.bin', dtype=FIELDS[name][0])
            array[:manifest.count] = data.reshape((manifest.count,) + array.shape[1:])
            buffer._arrays[name] = array
        buffer.count = manifest.count
        buffer.next_index = manifest.next_index
        if manifest.sampler_state:
            buffer.sampler.bit_generator.state = manifest.sampler_state
        return buffer
