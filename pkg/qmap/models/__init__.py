from .layer import LayerKind, Padding, OutputKind, Which
from .training import Command, ExplorePolicy, Relabel, TrajectoryEnd

__all__ = [
    'LayerKind', 'Padding', 'OutputKind', 'Which',
    'Command', 'ExplorePolicy', 'Relabel', 'TrajectoryEnd'
]
