from .errors import ShapeError
from .layers import forward_layer, backward_layer
from .ops import dueling_combine, masked_mse_loss
from .optim import OptimizerState, adam_step
from .params import ParamStore, init_params
from .network import Network

__all__ = [
    'ShapeError', 'forward_layer', 'backward_layer',
    'dueling_combine', 'masked_mse_loss',
    'OptimizerState', 'adam_step',
    'ParamStore', 'init_params', 'Network'
]
