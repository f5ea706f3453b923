"""Central finite-difference checks in 64-bit shadow precision."""
import logging
from typing import Callable, Dict, Optional

import numpy as np

from qmap.engine import layers
from qmap.engine.network import Network
from qmap.engine.params import ParamStore
from qmap.schemas.layer import LayerSpec

logger = logging.getLogger(__name__)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _sample_indices(size: int, samples: Optional[int], rng: np.random.Generator) -> np.ndarray:
    if samples is None or samples >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=samples, replace=False))


def numeric_gradient(loss: Callable[[], float], array: np.ndarray, indices: np.ndarray, step: float) -> np.ndarray:
    flat = array.reshape(-1)
    result = np.zeros(len(indices), dtype=np.float64)
    for k, index in enumerate(indices):
        original = flat[index]
        flat[index] = original + step
        plus = loss()
        flat[index] = original - step
        minus = loss()
        flat[index] = original
        result[k] = (plus - minus) / (2.0 * step)
    return result


def check_layer(spec: LayerSpec, params: Optional[Dict[str, np.ndarray]], x: np.ndarray, seed: int = 0,
                step: float = 1e-3, samples: Optional[int] = None) -> Dict[str, float]:
    """Relative errors of backward_layer against finite differences"""
    rng = np.random.default_rng(seed)
    x = x.astype(np.float64)
    params = {key: value.astype(np.float64) for key, value in (params or {}).items()}
    out = layers.forward_layer(spec, params, x)
    projection = rng.standard_normal(out.shape)

    def loss() -> float:
        return float(np.sum(layers.forward_layer(spec, params, x) * projection))

    input_grad, param_grads = layers.backward_layer(spec, params, x, projection)
    errors = {}
    indices = _sample_indices(x.size, samples, rng)
    errors['input'] = relative_error(input_grad.reshape(-1)[indices], numeric_gradient(loss, x, indices, step))
    for key, array in params.items():
        indices = _sample_indices(array.size, samples, rng)
        errors[key] = relative_error(param_grads[key].reshape(-1)[indices],
                                     numeric_gradient(loss, array, indices, step))
    return errors


def check_network(network: Network, params: ParamStore, x: np.ndarray, seed: int = 0, step: float = 1e-3,
                  samples: Optional[int] = 20) -> Dict[str, float]:
    """Relative error per parameter array for a whole composed network"""
    rng = np.random.default_rng(seed)
    shadow = params.astype(np.float64)
    x = x.astype(np.float64)
    q, cache = network.forward(shadow, x, keep_cache=True)
    projection = rng.standard_normal(q.shape)
    grads = network.backward(shadow, cache, projection)

    def loss() -> float:
        return float(np.sum(network.forward(shadow, x)[0] * projection))

    errors = {}
    for name in shadow:
        array = shadow[name]
        indices = _sample_indices(array.size, samples, rng)
        errors[name] = relative_error(grads[name].reshape(-1)[indices], numeric_gradient(loss, array, indices, step))
    worst = max(errors, key=errors.get)
    logger.debug(f'{network.spec.name}: worst gradient error {errors[worst]:.2e} at {worst}')
    return errors
