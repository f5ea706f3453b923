import logging
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from qmap.engine import layers
from qmap.engine.errors import ShapeError
from qmap.models.layer import LayerKind
from qmap.schemas.layer import LayerSpec

logger = logging.getLogger(__name__)

# std of a unit normal truncated at two standard deviations
TRUNCATED_STD = 0.87962566103423978
INIT_SCALE = 1.0


class ParamStore:
    """Ordered named arrays (weights and biases) of one network"""

    def __init__(self, arrays: Optional[Dict[str, np.ndarray]] = None):
        self._arrays: Dict[str, np.ndarray] = dict(arrays or {})

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self._arrays[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self) -> List[str]:
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def layer(self, prefix: str) -> Dict[str, np.ndarray]:
        """The ParamStore slice of one layer, keyed 'weight'/'bias'"""
        slice_ = {}
        for key in ('weight', 'bias'):
            name = f'{prefix}.{key}'
            if name in self._arrays:
                slice_[key] = self._arrays[name]
        return slice_

    @property
    def size(self) -> int:
        return int(sum(array.size for array in self._arrays.values()))

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self._arrays.values())).dtype if self._arrays else np.dtype(np.float32)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: array.shape for name, array in self._arrays.items()}

    def copy(self) -> 'ParamStore':
        return ParamStore({name: array.copy() for name, array in self._arrays.items()})

    def astype(self, dtype) -> 'ParamStore':
        return ParamStore({name: array.astype(dtype) for name, array in self._arrays.items()})

    def zeros_like(self) -> 'ParamStore':
        return ParamStore({name: np.zeros_like(array) for name, array in self._arrays.items()})

    def assign(self, other: 'ParamStore') -> None:
        """Overwrite every array in place with the other store's values"""
        if other.shapes() != self.shapes():
            raise ShapeError('parameter stores do not match')
        for name, array in self._arrays.items():
            np.copyto(array, other[name])

    def identical(self, other: 'ParamStore') -> bool:
        if self.names() != other.names():
            return False
        return all(
            self._arrays[name].dtype == other[name].dtype and np.array_equal(self._arrays[name], other[name])
            for name in self._arrays
        )


def _truncated_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float) -> np.ndarray:
    values = rng.standard_normal(shape)
    outside = np.abs(values) > 2.0
    while outside.any():
        values[outside] = rng.standard_normal(int(outside.sum()))
        outside = np.abs(values) > 2.0
    return values * std


def fan_in(spec: LayerSpec, weight_shape: Tuple[int, ...]) -> float:
    if spec.kind == LayerKind.DENSE:
        return float(weight_shape[1])
    if spec.kind == LayerKind.CONV:
        return float(weight_shape[1] * spec.kernel * spec.kernel)
    # each deconv output cell sees about kernel^2 / stride^2 taps per input channel
    return float(weight_shape[0] * spec.kernel * spec.kernel) / float(spec.stride * spec.stride)


def nominal_variance(spec: LayerSpec, weight_shape: Tuple[int, ...]) -> float:
    return INIT_SCALE / max(fan_in(spec, weight_shape), 1.0)


def init_params(specs: Sequence[LayerSpec], input_shape: Tuple[int, ...],
                seed: Union[int, np.random.Generator], prefix: str = 'layers') -> ParamStore:
    """Fan-in scaled truncated-normal weights and zero biases, float32"""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    store = ParamStore()
    shape = tuple(input_shape)
    for i, spec in enumerate(specs):
        try:
            shapes = layers.param_shapes(spec, shape)
            next_shape = layers.output_shape(spec, shape)
        except ShapeError as e:
            raise ShapeError(f'incompatible layer chain: {e}', layer=f'{prefix}[{i}]', actual=shape) from e
        if shapes:
            std = np.sqrt(nominal_variance(spec, shapes['weight'])) / TRUNCATED_STD
            store[f'{prefix}.{i}.weight'] = _truncated_normal(rng, shapes['weight'], std).astype(np.float32)
            store[f'{prefix}.{i}.bias'] = np.zeros(shapes['bias'], dtype=np.float32)
        shape = next_shape
    return store
