from typing import Tuple

import numpy as np

from qmap.engine.errors import ShapeError


def dueling_combine(value_frame: np.ndarray, advantage_frames: np.ndarray) -> np.ndarray:
    """Q[a] = V + A[a] - mean over actions of A, cell by cell.

    Both inputs are (batch, channels, height, width); the value has a single
    channel. The goal-in-input networks pass 1x1 spatial extents.
    """
    if value_frame.ndim != 4 or advantage_frames.ndim != 4:
        raise ShapeError('dueling inputs must be 4-d', actual=value_frame.shape)
    if value_frame.shape[1] != 1:
        raise ShapeError('value branch must have one channel', expected=(1,), actual=(value_frame.shape[1],))
    if value_frame.shape[0] != advantage_frames.shape[0] or value_frame.shape[2:] != advantage_frames.shape[2:]:
        raise ShapeError('value and advantage extents differ',
                         expected=advantage_frames.shape[:1] + advantage_frames.shape[2:],
                         actual=value_frame.shape[:1] + value_frame.shape[2:])
    return value_frame + advantage_frames - advantage_frames.mean(axis=1, keepdims=True)


def dueling_backward(q_grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients for (value_frame, advantage_frames) given the gradient of Q"""
    value_grad = q_grad.sum(axis=1, keepdims=True)
    advantage_grad = q_grad - q_grad.mean(axis=1, keepdims=True)
    return value_grad, advantage_grad


def masked_mse_loss(pred: np.ndarray, target: np.ndarray, action_mask: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean squared error on the taken action's channel only.

    pred and target are (batch, actions, ...); action_mask holds one action
    index per sample. The mean runs over the selected elements.
    """
    if pred.shape != target.shape:
        raise ShapeError('prediction and target shapes differ', expected=pred.shape, actual=target.shape)
    actions = np.asarray(action_mask, dtype=np.int64).reshape(-1)
    if actions.shape[0] != pred.shape[0]:
        raise ShapeError('one action per sample is required', expected=(pred.shape[0],), actual=actions.shape)
    num_actions = pred.shape[1]
    if actions.size and (actions.min() < 0 or actions.max() >= num_actions):
        raise ValueError(f'action index out of range for {num_actions} action channels')

    rows = np.arange(pred.shape[0])
    diff = pred[rows, actions] - target[rows, actions]
    count = diff.size
    loss = float(np.sum(diff.astype(np.float64) ** 2) / count)

    grad = np.zeros_like(pred)
    grad[rows, actions] = (2.0 / count) * diff
    return loss, grad
