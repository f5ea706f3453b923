from dataclasses import dataclass
from typing import Tuple

import numpy as np

from qmap.engine.errors import ShapeError
from qmap.engine.params import ParamStore


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators mirroring a ParamStore"""
    m: ParamStore
    v: ParamStore
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0

    @classmethod
    def create(cls, params: ParamStore, learning_rate: float = 1e-4, beta1: float = 0.9,
               beta2: float = 0.999, epsilon: float = 1e-8) -> 'OptimizerState':
        return cls(m=params.zeros_like(), v=params.zeros_like(), learning_rate=learning_rate,
                   beta1=beta1, beta2=beta2, epsilon=epsilon)

    def copy(self) -> 'OptimizerState':
        return OptimizerState(self.m.copy(), self.v.copy(), self.learning_rate, self.beta1,
                              self.beta2, self.epsilon, self.step)


def adam_step(params: ParamStore, grads: ParamStore, state: OptimizerState) -> Tuple[ParamStore, OptimizerState]:
    """Bias-corrected adaptive-moment update, applied in place"""
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name in grads:
        param = params[name]
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeError('gradient does not match parameter', layer=name, expected=param.shape, actual=grad.shape)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(grad)
        m_hat = m / correction1
        v_hat = v / correction2
        param -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(param.dtype)
    return params, state
