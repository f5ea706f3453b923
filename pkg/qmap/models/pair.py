import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from qmap.engine.checkpoint import load_checkpoint, save_checkpoint
from qmap.engine.network import Network
from qmap.engine.optim import OptimizerState, adam_step
from qmap.engine.params import ParamStore
from qmap.models.layer import OutputKind, Which
from qmap.schemas.checkpoint import CheckpointManifest, OptimizerManifest
from qmap.schemas.layer import ArchitectureSpec

logger = logging.getLogger(__name__)


class ModelPair:
    """Online and target parameters of one architecture plus optimizer state"""

    def __init__(self, spec: ArchitectureSpec, seed: int = 0, learning_rate: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.spec = spec
        self.seed = seed
        self.network = Network(spec)
        self.online = self.network.init_params(seed)
        self.target = self.online.copy()
        self.optimizer = OptimizerState.create(self.online, learning_rate, beta1, beta2, epsilon)
        self.updates = 0
        self.manifest: Optional[CheckpointManifest] = None
        self.logger = logger

    @property
    def output_kind(self) -> OutputKind:
        return self.spec.output

    def params(self, which: Which = Which.ONLINE) -> ParamStore:
        return self.online if Which(which) == Which.ONLINE else self.target

    def forward(self, obs: np.ndarray, which: Which = Which.ONLINE) -> np.ndarray:
        q, _ = self.network.forward(self.params(which), obs.astype(np.float32, copy=False))
        return q

    def qframes(self, obs: np.ndarray, which: Which = Which.ONLINE) -> np.ndarray:
        """(N, A, Hg, Wg) Q-frames for a batch of observations"""
        if self.spec.output != OutputKind.QFRAMES:
            raise ValueError(f'{self.spec.name} outputs Q-vectors; wrap it in a GoalInInputAdapter for Q-frames')
        return self.forward(obs, which)

    def qvalues(self, obs: np.ndarray, which: Which = Which.ONLINE) -> np.ndarray:
        if self.spec.output != OutputKind.QVECTOR:
            raise ValueError(f'{self.spec.name} outputs Q-frames, not Q-vectors')
        return self.forward(obs, which)

    def apply_gradients(self, grads: ParamStore) -> None:
        adam_step(self.online, grads, self.optimizer)
        self.updates += 1

    def sync_target(self) -> 'ModelPair':
        self.target.assign(self.online)
        self.logger.debug(f'{self.spec.name}: target synced at update {self.updates}')
        return self

    def save(self, directory, extra: Optional[Dict[str, Any]] = None) -> Path:
        manifest = CheckpointManifest(
            spec_name=self.spec.name,
            architecture=self.spec,
            seed=self.seed,
            step=self.updates,
            optimizer=OptimizerManifest(
                learning_rate=self.optimizer.learning_rate,
                beta1=self.optimizer.beta1,
                beta2=self.optimizer.beta2,
                epsilon=self.optimizer.epsilon,
                step=self.optimizer.step,
            ),
            extra=extra or {},
        )
        return save_checkpoint(directory, manifest, {
            'online': self.online,
            'target': self.target,
            'adam_m': self.optimizer.m,
            'adam_v': self.optimizer.v,
        })

    @classmethod
    def load(cls, directory, expected_spec: Optional[str] = None) -> 'ModelPair':
        manifest, stores = load_checkpoint(directory)
        if expected_spec is not None and manifest.spec_name != expected_spec:
            raise ValueError(f'Checkpoint holds {manifest.spec_name}, not {expected_spec}')
        optimizer = manifest.optimizer
        pair = cls(manifest.architecture, seed=manifest.seed,
                   learning_rate=optimizer.learning_rate if optimizer else 1e-4,
                   beta1=optimizer.beta1 if optimizer else 0.9,
                   beta2=optimizer.beta2 if optimizer else 0.999,
                   epsilon=optimizer.epsilon if optimizer else 1e-8)
        for store_name, target in (('online', pair.online), ('target', pair.target),
                                   ('adam_m', pair.optimizer.m), ('adam_v', pair.optimizer.v)):
            if store_name in stores:
                target.assign(stores[store_name])
        pair.optimizer.step = optimizer.step if optimizer else 0
        pair.updates = manifest.step
        pair.manifest = manifest
        return pair


def sync_target(pair: ModelPair) -> ModelPair:
    return pair.sync_target()
