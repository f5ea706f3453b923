"""Architecture presets.

Parameter counts of the full-width presets:

    maze-goal-in-input      ~857K
    maze-qmap-compress      ~1,255K
    maze-qmap-nocompress    ~730K
    sokoban-goal-in-input   ~688K
    sokoban-qmap            ~626K
"""
import logging
from typing import Callable, Dict, List, Optional, Tuple

from qmap.models.layer import LayerKind, OutputKind, Padding
from qmap.schemas.layer import ArchitectureSpec, LayerSpec

logger = logging.getLogger(__name__)

SCALED_PREFIX = 'scaled-'
DEFAULT_SCALE = 0.5
NUM_ACTIONS = 4


def conv(filters: int, kernel: int, stride: int, padding: Padding = Padding.SAME) -> LayerSpec:
    return LayerSpec(kind=LayerKind.CONV, filters=filters, kernel=kernel, stride=stride, padding=padding)


def deconv(filters: int, kernel: int, stride: int, padding: Padding = Padding.SAME) -> LayerSpec:
    return LayerSpec(kind=LayerKind.DECONV, filters=filters, kernel=kernel, stride=stride, padding=padding)


def dense(units: int, reshape: Optional[Tuple[int, int, int]] = None) -> LayerSpec:
    return LayerSpec(kind=LayerKind.DENSE, filters=units, reshape=reshape)


ELU = LayerSpec(kind=LayerKind.ELU)


def activated(*specs: LayerSpec) -> List[LayerSpec]:
    """Each layer followed by an ELU"""
    chain = []
    for spec in specs:
        chain.extend([spec, ELU])
    return chain


def branch(*specs: LayerSpec) -> List[LayerSpec]:
    """ELU after every layer except the branch output"""
    return activated(*specs[:-1]) + [specs[-1]]


def _maze_goal_in_input(height: int, width: int) -> ArchitectureSpec:
    return ArchitectureSpec(
        name='maze-goal-in-input',
        input_shape=(3, height, width),
        torso=activated(conv(64, 4, 2), conv(64, 4, 2), dense(512)),
        advantage=branch(dense(256), dense(NUM_ACTIONS)),
        value=branch(dense(256), dense(1)),
        output=OutputKind.QVECTOR,
    )


def _maze_qmap_compress(height: int, width: int) -> ArchitectureSpec:
    if height % 4 or width % 4:
        raise ValueError(f'maze-qmap-compress needs extents divisible by 4, got {height}x{width}')
    bottleneck = (64, height // 4, width // 4)
    return ArchitectureSpec(
        name='maze-qmap-compress',
        input_shape=(3, height, width),
        torso=activated(conv(64, 4, 2), conv(64, 4, 2), dense(512), dense(64 * (height // 4) * (width // 4), bottleneck)),
        advantage=branch(deconv(64, 4, 2), deconv(NUM_ACTIONS, 4, 2)),
        value=branch(deconv(64, 4, 2), deconv(1, 4, 2)),
        output=OutputKind.QFRAMES,
    )


def _maze_qmap_nocompress(height: int, width: int) -> ArchitectureSpec:
    """Four hidden deconvolutions per branch: 729,861 parameters at 16x16.

    With three per branch the network drops to about 599K, too far below the
    ~800K this architecture is sized at.
    """
    return ArchitectureSpec(
        name='maze-qmap-nocompress',
        input_shape=(3, height, width),
        torso=activated(*[conv(64, 4, 1)] * 4),
        advantage=branch(*[deconv(64, 4, 1)] * 4, deconv(NUM_ACTIONS, 4, 1)),
        value=branch(*[deconv(64, 4, 1)] * 4, deconv(1, 4, 1)),
        output=OutputKind.QFRAMES,
    )


def _sokoban_goal_in_input(height: int, width: int) -> ArchitectureSpec:
    # RGB frame plus a one-hot goal plane
    return ArchitectureSpec(
        name='sokoban-goal-in-input',
        input_shape=(4, height, width),
        torso=activated(*[conv(64, 5, 1)] * 5, *[conv(64, 5, 1, Padding.VALID)] * 2, dense(256)),
        advantage=[dense(NUM_ACTIONS)],
        output=OutputKind.QVECTOR,
    )


def _sokoban_qmap(height: int, width: int) -> ArchitectureSpec:
    return ArchitectureSpec(
        name='sokoban-qmap',
        input_shape=(3, height, width),
        torso=activated(*[conv(64, 5, 1)] * 7),
        advantage=[conv(NUM_ACTIONS, 5, 1)],
        output=OutputKind.QFRAMES,
    )


def _coverage_qmap_compress(height: int, width: int) -> ArchitectureSpec:
    """Observation at full resolution, Q-frames at half resolution"""
    if height % 8 or width % 8:
        raise ValueError(f'coverage-qmap-compress needs extents divisible by 8, got {height}x{width}')
    bottleneck = (32, height // 8, width // 8)
    return ArchitectureSpec(
        name='coverage-qmap-compress',
        input_shape=(3, height, width),
        torso=activated(conv(32, 4, 2), conv(32, 4, 2), conv(64, 4, 2), dense(512),
                        dense(32 * (height // 8) * (width // 8), bottleneck)),
        advantage=branch(deconv(32, 4, 2), deconv(NUM_ACTIONS, 4, 2)),
        value=branch(deconv(32, 4, 2), deconv(1, 4, 2)),
        output=OutputKind.QFRAMES,
    )


def _coverage_task_dqn(height: int, width: int) -> ArchitectureSpec:
    return ArchitectureSpec(
        name='coverage-task-dqn',
        input_shape=(3, height, width),
        torso=activated(conv(32, 4, 2), conv(64, 4, 2), conv(64, 4, 2), dense(256)),
        advantage=[dense(NUM_ACTIONS)],
        value=[dense(1)],
        output=OutputKind.QVECTOR,
    )


PRESETS: Dict[str, Tuple[Callable[[int, int], ArchitectureSpec], Tuple[int, int]]] = {
    'maze-goal-in-input': (_maze_goal_in_input, (16, 16)),
    'maze-qmap-compress': (_maze_qmap_compress, (16, 16)),
    'maze-qmap-nocompress': (_maze_qmap_nocompress, (16, 16)),
    'sokoban-goal-in-input': (_sokoban_goal_in_input, (10, 10)),
    'sokoban-qmap': (_sokoban_qmap, (10, 10)),
    'coverage-qmap-compress': (_coverage_qmap_compress, (32, 32)),
    'coverage-task-dqn': (_coverage_task_dqn, (32, 32)),
}

# preset families that take goal pixels or goal planes in their input
GOAL_IN_INPUT = {'maze-goal-in-input', 'sokoban-goal-in-input'}


def _scale_layer(spec: LayerSpec, factor: float, is_output: bool) -> LayerSpec:
    if spec.kind == LayerKind.ELU or is_output:
        return spec
    if spec.reshape is not None:
        channels, h, w = spec.reshape
        channels = max(1, int(round(channels * factor)))
        return spec.model_copy(update={'filters': channels * h * w, 'reshape': (channels, h, w)})
    return spec.model_copy(update={'filters': max(1, int(round(spec.filters * factor)))})


def _scale_chain(chain: List[LayerSpec], factor: float, has_output: bool) -> List[LayerSpec]:
    last = max(i for i, spec in enumerate(chain) if spec.kind != LayerKind.ELU)
    return [_scale_layer(spec, factor, has_output and i == last) for i, spec in enumerate(chain)]


def scale_spec(spec: ArchitectureSpec, factor: float) -> ArchitectureSpec:
    """Multiply hidden widths by factor, keeping every output shape"""
    if factor <= 0:
        raise ValueError(f'scale factor must be positive, got {factor}')
    return spec.model_copy(update={
        'name': f'{SCALED_PREFIX}{spec.name}',
        'torso': _scale_chain(spec.torso, factor, has_output=False),
        'advantage': _scale_chain(spec.advantage, factor, has_output=True),
        'value': _scale_chain(spec.value, factor, has_output=True) if spec.value is not None else None,
    })


def base_name(name: str) -> str:
    return name[len(SCALED_PREFIX):] if name.startswith(SCALED_PREFIX) else name


def is_goal_in_input(name: str) -> bool:
    return base_name(name) in GOAL_IN_INPUT


def preset(name: str, height: Optional[int] = None, width: Optional[int] = None,
           scale: Optional[float] = None) -> ArchitectureSpec:
    """Look up an architecture by name; 'scaled-<name>' multiplies hidden widths by scale"""
    base = base_name(name)
    if base not in PRESETS:
        raise ValueError(f'Unknown preset {name!r}; choose from {sorted(PRESETS)} or scaled-<preset>')
    builder, (default_h, default_w) = PRESETS[base]
    spec = builder(height or default_h, width or default_w)
    if name.startswith(SCALED_PREFIX):
        spec = scale_spec(spec, DEFAULT_SCALE if scale is None else scale)
    # composing the chain validates the shape algebra
    from qmap.engine.network import Network
    Network(spec)
    return spec
