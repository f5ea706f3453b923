import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from qmap.engine import layers
from qmap.engine.errors import ShapeError
from qmap.engine.ops import dueling_backward, dueling_combine
from qmap.engine.params import ParamStore, init_params
from qmap.models.layer import OutputKind
from qmap.schemas.layer import ArchitectureSpec, LayerSpec

logger = logging.getLogger(__name__)


class ForwardCache:
    """Layer inputs recorded by a forward pass, consumed by backward"""

    def __init__(self):
        self.inputs: Dict[str, List[np.ndarray]] = {}
        self.branch_shapes: Dict[str, Tuple[int, ...]] = {}


class Network:
    """Torso followed by an advantage branch and an optional value branch"""

    def __init__(self, spec: ArchitectureSpec):
        self.spec = spec
        self.logger = logger
        self.layer_evaluations = 0
        self.shapes: Dict[str, List[Tuple[int, ...]]] = {}
        self.output_shape = self._infer_shapes()

    def _chain_shapes(self, name: str, chain: List[LayerSpec], in_shape: Tuple[int, ...]) -> List[Tuple[int, ...]]:
        shapes = [tuple(in_shape)]
        for i, layer in enumerate(chain):
            try:
                shapes.append(layers.output_shape(layer, shapes[-1]))
            except ShapeError as e:
                raise ShapeError(f'{self.spec.name}: {e}', layer=f'{name}[{i}]', actual=shapes[-1]) from e
        return shapes

    def _infer_shapes(self) -> Tuple[int, ...]:
        torso = self._chain_shapes('torso', self.spec.torso, self.spec.input_shape)
        self.shapes['torso'] = torso
        advantage = self._chain_shapes('advantage', self.spec.advantage, torso[-1])
        self.shapes['advantage'] = advantage
        adv_out = advantage[-1]
        if self.spec.value is not None:
            value = self._chain_shapes('value', self.spec.value, torso[-1])
            self.shapes['value'] = value
            if value[-1][0] != 1 or value[-1][1:] != adv_out[1:]:
                raise ShapeError(f'{self.spec.name}: value branch does not match advantage branch',
                                 layer='value', expected=(1,) + tuple(adv_out[1:]), actual=value[-1])

        actions = self.spec.num_actions
        if self.spec.output == OutputKind.QFRAMES:
            if len(adv_out) != 3 or adv_out[0] != actions:
                raise ShapeError(f'{self.spec.name}: Q-frame output must be (actions, height, width)',
                                 layer='advantage', expected=(actions, 'Hg', 'Wg'), actual=adv_out)
            return tuple(adv_out)
        if tuple(adv_out) != (actions,):
            raise ShapeError(f'{self.spec.name}: Q-vector output must be (actions,)',
                             layer='advantage', expected=(actions,), actual=adv_out)
        return (actions,)

    def init_params(self, seed: int) -> ParamStore:
        rng = np.random.default_rng(seed)
        store = ParamStore()
        for name, chain in self.spec.branches():
            for key, array in init_params(chain, self.shapes[name][0], rng, prefix=name).items():
                store[key] = array
        return store

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        result = {}
        for name, chain in self.spec.branches():
            for i, layer in enumerate(chain):
                for key, shape in layers.param_shapes(layer, self.shapes[name][i]).items():
                    result[f'{name}.{i}.{key}'] = shape
        return result

    def param_count(self) -> int:
        return int(sum(np.prod(shape) for shape in self.param_shapes().values()))

    def _run_chain(self, name: str, chain: List[LayerSpec], params: ParamStore, x: np.ndarray,
                   cache: Optional[ForwardCache]) -> np.ndarray:
        inputs = []
        for i, layer in enumerate(chain):
            inputs.append(x)
            x = layers.forward_layer(layer, params.layer(f'{name}.{i}'), x, index=f'{name}[{i}]')
            self.layer_evaluations += 1
        if cache is not None:
            cache.inputs[name] = inputs
        return x

    def forward(self, params: ParamStore, x: np.ndarray, keep_cache: bool = False) -> Tuple[np.ndarray, Optional[ForwardCache]]:
        """Q-values for a batch: (N, A, Hg, Wg) frames or (N, A) vectors"""
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeError(f'{self.spec.name}: wrong observation shape', layer='input',
                             expected=('N',) + tuple(self.spec.input_shape), actual=x.shape)
        cache = ForwardCache() if keep_cache else None
        features = self._run_chain('torso', self.spec.torso, params, x, cache)
        advantage = self._run_chain('advantage', self.spec.advantage, params, features, cache)
        if self.spec.value is None:
            return advantage, cache

        value = self._run_chain('value', self.spec.value, params, features, cache)
        if self.spec.output == OutputKind.QVECTOR:
            q = dueling_combine(value.reshape(-1, 1, 1, 1), advantage.reshape(advantage.shape + (1, 1)))
            return q.reshape(advantage.shape), cache
        return dueling_combine(value, advantage), cache

    def _backprop_chain(self, name: str, chain: List[LayerSpec], params: ParamStore, cache: ForwardCache,
                        grad: np.ndarray, grads: ParamStore) -> np.ndarray:
        inputs = cache.inputs[name]
        for i in reversed(range(len(chain))):
            grad, layer_grads = layers.backward_layer(chain[i], params.layer(f'{name}.{i}'), inputs[i], grad,
                                                      index=f'{name}[{i}]')
            for key, value in layer_grads.items():
                grads[f'{name}.{i}.{key}'] = value
        return grad

    def backward(self, params: ParamStore, cache: ForwardCache, q_grad: np.ndarray) -> ParamStore:
        """Parameter gradients of a scalar loss given dLoss/dQ"""
        grads = ParamStore()
        if self.spec.value is None:
            features_grad = self._backprop_chain('advantage', self.spec.advantage, params, cache, q_grad, grads)
        else:
            if self.spec.output == OutputKind.QVECTOR:
                value_grad, adv_grad = dueling_backward(q_grad.reshape(q_grad.shape + (1, 1)))
                value_grad = value_grad.reshape(-1, 1)
                adv_grad = adv_grad.reshape(q_grad.shape)
            else:
                value_grad, adv_grad = dueling_backward(q_grad)
            features_grad = self._backprop_chain('advantage', self.spec.advantage, params, cache, adv_grad, grads)
            features_grad = features_grad + self._backprop_chain('value', self.spec.value, params, cache,
                                                                 value_grad, grads)
        self._backprop_chain('torso', self.spec.torso, params, cache, features_grad, grads)
        # keep the store in parameter order
        return ParamStore({name: grads[name] for name in params if name in grads})
