"""Forward and backward passes for the four layer kinds.

Tensors are numpy arrays in (batch, channels, height, width) order, or
(batch, features) after a dense layer without reshape. Computation follows
the dtype of the input, so float64 inputs and parameters give the 64-bit
shadow evaluation used by the gradient checks.

Weight layouts:
    conv    (filters, in_channels, kernel, kernel)
    deconv  (in_channels, filters, kernel, kernel), the transpose of the conv
            mapping filters -> in_channels with the same kernel
    dense   (units, in_features)
"""
import logging
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from qmap.engine.errors import ShapeError
from qmap.models.layer import LayerKind, Padding
from qmap.schemas.layer import LayerSpec

logger = logging.getLogger(__name__)

LayerParams = Optional[Dict[str, np.ndarray]]


class ConvGeometry(NamedTuple):
    height: int
    width: int
    out_height: int
    out_width: int
    top: int
    bottom: int
    left: int
    right: int


def _axis_geometry(size: int, kernel: int, stride: int, padding: Padding) -> Tuple[int, int, int]:
    if padding == Padding.SAME:
        out = -(-size // stride)
        total = max((out - 1) * stride + kernel - size, 0)
        # even kernels put the extra cell on the bottom/right
        before = total // 2
        return out, before, total - before
    if size < kernel:
        return 0, 0, 0
    return (size - kernel) // stride + 1, 0, 0


def conv_geometry(height: int, width: int, kernel: int, stride: int, padding: Padding) -> ConvGeometry:
    out_h, top, bottom = _axis_geometry(height, kernel, stride, padding)
    out_w, left, right = _axis_geometry(width, kernel, stride, padding)
    return ConvGeometry(height, width, out_h, out_w, top, bottom, left, right)


def deconv_extent(size: int, kernel: int, stride: int, padding: Padding) -> int:
    if padding == Padding.SAME:
        return size * stride
    return (size - 1) * stride + kernel


def _im2col(x: np.ndarray, kernel: int, stride: int, geom: ConvGeometry) -> np.ndarray:
    n, c = x.shape[:2]
    padded = np.pad(x, ((0, 0), (0, 0), (geom.top, geom.bottom), (geom.left, geom.right)))
    windows = sliding_window_view(padded, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :geom.out_height, :geom.out_width]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * geom.out_height * geom.out_width, c * kernel * kernel)


def _col2im(cols: np.ndarray, shape: Tuple[int, ...], kernel: int, stride: int, geom: ConvGeometry) -> np.ndarray:
    """Scatter-add columns laid out contiguously as (n, c, k, k, out_h, out_w)"""
    n, c, h, w = shape
    cols = np.ascontiguousarray(cols).reshape(n, c, kernel, kernel, geom.out_height, geom.out_width)
    padded = np.zeros((n, c, h + geom.top + geom.bottom, w + geom.left + geom.right), dtype=cols.dtype)
    row_span = stride * geom.out_height
    col_span = stride * geom.out_width
    for i in range(kernel):
        for j in range(kernel):
            padded[:, :, i:i + row_span:stride, j:j + col_span:stride] += cols[:, :, i, j]
    return padded[:, :, geom.top:geom.top + h, geom.left:geom.left + w]


def conv2d(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray], stride: int, padding: Padding) -> np.ndarray:
    filters, _, kernel, _ = weight.shape
    geom = conv_geometry(x.shape[2], x.shape[3], kernel, stride, padding)
    cols = _im2col(x, kernel, stride, geom)
    out = cols @ weight.reshape(filters, -1).T
    out = out.reshape(x.shape[0], geom.out_height, geom.out_width, filters).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_transpose(y: np.ndarray, weight: np.ndarray, out_shape: Tuple[int, ...], stride: int,
                     padding: Padding) -> np.ndarray:
    """Adjoint of conv2d with respect to its input"""
    filters, _, kernel, _ = weight.shape
    geom = conv_geometry(out_shape[2], out_shape[3], kernel, stride, padding)
    # (c*k*k, filters) @ (n, filters, h*w) keeps each sample's columns contiguous
    cols = np.matmul(weight.reshape(filters, -1).T, y.reshape(y.shape[0], filters, -1))
    return _col2im(cols, out_shape, kernel, stride, geom)


def conv2d_weight_grad(x: np.ndarray, y_grad: np.ndarray, kernel: int, stride: int, padding: Padding) -> np.ndarray:
    filters = y_grad.shape[1]
    geom = conv_geometry(x.shape[2], x.shape[3], kernel, stride, padding)
    cols = _im2col(x, kernel, stride, geom)
    grad = y_grad.transpose(0, 2, 3, 1).reshape(-1, filters)
    return (grad.T @ cols).reshape(filters, x.shape[1], kernel, kernel)


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0)))


def output_shape(spec: LayerSpec, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    """Per-sample output shape of a layer (no batch axis)"""
    if spec.kind == LayerKind.ELU:
        return tuple(in_shape)
    if spec.kind == LayerKind.DENSE:
        return tuple(spec.reshape) if spec.reshape is not None else (spec.filters,)
    if len(in_shape) != 3:
        raise ShapeError(f'{spec.kind.value} needs a (channels, height, width) input', actual=in_shape)
    _, h, w = in_shape
    if spec.kind == LayerKind.CONV:
        geom = conv_geometry(h, w, spec.kernel, spec.stride, spec.padding)
        if geom.out_height < 1 or geom.out_width < 1:
            raise ShapeError('input smaller than the kernel', expected=(spec.kernel, spec.kernel), actual=(h, w))
        return spec.filters, geom.out_height, geom.out_width
    return (spec.filters,
            deconv_extent(h, spec.kernel, spec.stride, spec.padding),
            deconv_extent(w, spec.kernel, spec.stride, spec.padding))


def param_shapes(spec: LayerSpec, in_shape: Tuple[int, ...]) -> Dict[str, Tuple[int, ...]]:
    if spec.kind == LayerKind.ELU:
        return {}
    if spec.kind == LayerKind.DENSE:
        return {'weight': (spec.filters, int(np.prod(in_shape))), 'bias': (spec.filters,)}
    channels = in_shape[0]
    k = spec.kernel
    if spec.kind == LayerKind.CONV:
        return {'weight': (spec.filters, channels, k, k), 'bias': (spec.filters,)}
    return {'weight': (channels, spec.filters, k, k), 'bias': (spec.filters,)}


def _check_input(spec: LayerSpec, params: LayerParams, x: np.ndarray, index: Optional[str]) -> None:
    if spec.kind == LayerKind.ELU:
        return
    if params is None or 'weight' not in params:
        raise ShapeError(f'{spec.kind.value} layer has no parameters', layer=index)
    weight = params['weight']
    if spec.kind == LayerKind.DENSE:
        features = int(np.prod(x.shape[1:]))
        if weight.shape[1] != features:
            raise ShapeError('dense input features mismatch', layer=index,
                             expected=(weight.shape[1],), actual=(features,))
        return
    if x.ndim != 4:
        raise ShapeError(f'{spec.kind.value} expects a 4-d batch', layer=index,
                         expected=('N', weight.shape[1 if spec.kind == LayerKind.CONV else 0], 'H', 'W'),
                         actual=x.shape)
    channels = weight.shape[1] if spec.kind == LayerKind.CONV else weight.shape[0]
    if x.shape[1] != channels:
        raise ShapeError('channel count mismatch', layer=index,
                         expected=(channels,) + tuple(x.shape[2:]), actual=x.shape[1:])


def forward_layer(spec: LayerSpec, params: LayerParams, x: np.ndarray, index: Optional[str] = None) -> np.ndarray:
    _check_input(spec, params, x, index)
    if spec.kind == LayerKind.ELU:
        return elu(x)
    if spec.kind == LayerKind.DENSE:
        flat = x.reshape(x.shape[0], -1)
        out = flat @ params['weight'].T + params['bias']
        if spec.reshape is not None:
            out = out.reshape((x.shape[0],) + tuple(spec.reshape))
        return out
    if spec.kind == LayerKind.CONV:
        geom = conv_geometry(x.shape[2], x.shape[3], spec.kernel, spec.stride, spec.padding)
        if geom.out_height < 1 or geom.out_width < 1:
            raise ShapeError('input smaller than the kernel', layer=index,
                             expected=(spec.kernel, spec.kernel), actual=x.shape[2:])
        return conv2d(x, params['weight'], params['bias'], spec.stride, spec.padding)
    out_shape = (x.shape[0], spec.filters,
                 deconv_extent(x.shape[2], spec.kernel, spec.stride, spec.padding),
                 deconv_extent(x.shape[3], spec.kernel, spec.stride, spec.padding))
    out = conv2d_transpose(x, params['weight'], out_shape, spec.stride, spec.padding)
    return np.ascontiguousarray(out + params['bias'][None, :, None, None])


def backward_layer(spec: LayerSpec, params: LayerParams, x: np.ndarray, output_grad: np.ndarray,
                   index: Optional[str] = None) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Gradients of a downstream scalar with respect to the layer input and parameters"""
    _check_input(spec, params, x, index)
    expected = (x.shape[0],) + output_shape(spec, x.shape[1:])
    if output_grad.shape != expected:
        raise ShapeError('output gradient shape mismatch', layer=index, expected=expected, actual=output_grad.shape)

    if spec.kind == LayerKind.ELU:
        slope = np.where(x >= 0, 1.0, np.exp(np.minimum(x, 0))).astype(x.dtype)
        return output_grad * slope, {}

    if spec.kind == LayerKind.DENSE:
        flat = x.reshape(x.shape[0], -1)
        grad = output_grad.reshape(x.shape[0], -1)
        return ((grad @ params['weight']).reshape(x.shape),
                {'weight': grad.T @ flat, 'bias': grad.sum(axis=0)})

    bias_grad = output_grad.sum(axis=(0, 2, 3))
    if spec.kind == LayerKind.CONV:
        input_grad = conv2d_transpose(output_grad, params['weight'], x.shape, spec.stride, spec.padding)
        weight_grad = conv2d_weight_grad(x, output_grad, spec.kernel, spec.stride, spec.padding)
        return input_grad, {'weight': weight_grad, 'bias': bias_grad}

    # deconv: the forward map is conv2d_transpose, so its input gradient is conv2d
    input_grad = conv2d(output_grad, params['weight'], None, spec.stride, spec.padding)
    weight_grad = conv2d_weight_grad(output_grad, x, spec.kernel, spec.stride, spec.padding)
    return input_grad, {'weight': weight_grad, 'bias': bias_grad}
