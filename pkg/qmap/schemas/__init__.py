from .layer import LayerSpec, ArchitectureSpec
from .checkpoint import CheckpointManifest, BufferManifest
from .training import TrainingConfig, ExplorationConfig
from .run import RunConfig

__all__ = [
    'LayerSpec', 'ArchitectureSpec',
    'CheckpointManifest', 'BufferManifest',
    'TrainingConfig', 'ExplorationConfig',
    'RunConfig'
]
