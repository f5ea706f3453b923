import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmap.engine import layers
from qmap.engine.errors import ShapeError
from qmap.engine.gradcheck import check_layer, check_network
from qmap.engine.network import Network
from qmap.engine.ops import dueling_combine, masked_mse_loss
from qmap.engine.optim import OptimizerState, adam_step
from qmap.engine.params import ParamStore, init_params, nominal_variance
from qmap.models.layer import Padding

from conftest import ELU, conv, deconv, dense

GRADIENT_TOLERANCE = 1e-4


def nested_loop_conv(x, weight, bias, stride, padding):
    filters, channels, kernel, _ = weight.shape
    geom = layers.conv_geometry(x.shape[2], x.shape[3], kernel, stride, padding)
    padded = np.pad(x, ((0, 0), (0, 0), (geom.top, geom.bottom), (geom.left, geom.right)))
    out = np.zeros((x.shape[0], filters, geom.out_height, geom.out_width))
    for n in range(x.shape[0]):
        for f in range(filters):
            for i in range(geom.out_height):
                for j in range(geom.out_width):
                    window = padded[n, :, i * stride:i * stride + kernel, j * stride:j * stride + kernel]
                    out[n, f, i, j] = np.sum(window * weight[f]) + bias[f]
    return out


def test_conv_matches_nested_loop():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 3, 16, 16))
    weight = rng.standard_normal((4, 3, 4, 4))
    bias = rng.standard_normal(4)
    out = layers.conv2d(x, weight, bias, 1, Padding.SAME)
    assert out.shape == (1, 4, 16, 16)
    np.testing.assert_allclose(out, nested_loop_conv(x, weight, bias, 1, Padding.SAME), atol=1e-5)


@pytest.mark.parametrize('stride,padding', [(2, Padding.SAME), (1, Padding.VALID), (2, Padding.VALID)])
def test_strided_and_valid_conv_match_nested_loop(stride, padding):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 2, 9, 7))
    weight = rng.standard_normal((3, 2, 3, 3))
    bias = rng.standard_normal(3)
    np.testing.assert_allclose(layers.conv2d(x, weight, bias, stride, padding),
                               nested_loop_conv(x, weight, bias, stride, padding), atol=1e-9)


def nested_loop_conv_transpose(y, weight, out_shape, stride, padding):
    _, channels, kernel, _ = weight.shape
    geom = layers.conv_geometry(out_shape[2], out_shape[3], kernel, stride, padding)
    padded = np.zeros((out_shape[0], channels, out_shape[2] + geom.top + geom.bottom + kernel,
                       out_shape[3] + geom.left + geom.right + kernel))
    for n in range(y.shape[0]):
        for f in range(y.shape[1]):
            for i in range(y.shape[2]):
                for j in range(y.shape[3]):
                    rows = slice(i * stride, i * stride + kernel)
                    cols = slice(j * stride, j * stride + kernel)
                    padded[n, :, rows, cols] += y[n, f, i, j] * weight[f]
    return padded[:, :, geom.top:geom.top + out_shape[2], geom.left:geom.left + out_shape[3]]


@pytest.mark.parametrize('stride,padding', [(1, Padding.SAME), (2, Padding.SAME), (2, Padding.VALID)])
def test_conv_transpose_matches_nested_loop(stride, padding):
    rng = np.random.default_rng(4)
    out_shape = (2, 3, 8, 6)
    weight = rng.standard_normal((5, 3, 4, 4))
    geom = layers.conv_geometry(8, 6, 4, stride, padding)
    y = rng.standard_normal((2, 5, geom.out_height, geom.out_width))
    np.testing.assert_allclose(layers.conv2d_transpose(y, weight, out_shape, stride, padding),
                               nested_loop_conv_transpose(y, weight, out_shape, stride, padding), atol=1e-9)


def test_identity_kernel_is_identity():
    x = np.random.default_rng(2).standard_normal((2, 3, 6, 6))
    weight = np.eye(3).reshape(3, 3, 1, 1)
    spec = conv(3, 1, 1)
    out = layers.forward_layer(spec, {'weight': weight, 'bias': np.zeros(3)}, x)
    np.testing.assert_array_equal(out, x)


def test_elu_reference_points():
    values = layers.elu(np.array([0.0, 1.0, -50.0]))
    assert values[0] == 0.0
    assert values[1] == 1.0
    assert values[2] == pytest.approx(-1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    height=st.integers(4, 9),
    width=st.integers(4, 9),
    kernel=st.integers(1, 4),
    stride=st.integers(1, 3),
    padding=st.sampled_from([Padding.SAME, Padding.VALID]),
    seed=st.integers(0, 2 ** 16),
)
def test_conv_adjoint_identity(height, width, kernel, stride, padding, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, height, width))
    weight = rng.standard_normal((4, 3, kernel, kernel))
    y = layers.conv2d(x, weight, None, stride, padding)
    g = rng.standard_normal(y.shape)
    lhs = np.sum(y * g)
    rhs = np.sum(x * layers.conv2d_transpose(g, weight, x.shape, stride, padding))
    assert lhs == pytest.approx(rhs, rel=1e-4, abs=1e-8)


def test_deconv_doubles_extent():
    spec = deconv(5, 4, 2)
    assert layers.output_shape(spec, (64, 4, 4)) == (5, 8, 8)
    assert layers.output_shape(deconv(5, 4, 2, Padding.VALID), (64, 4, 4)) == (5, 10, 10)


def test_zero_output_gradient_gives_zero_gradients():
    rng = np.random.default_rng(3)
    spec = conv(2, 3, 1)
    params = {'weight': rng.standard_normal((2, 3, 3, 3)), 'bias': rng.standard_normal(2)}
    x = rng.standard_normal((1, 3, 5, 5))
    input_grad, grads = layers.backward_layer(spec, params, x, np.zeros((1, 2, 5, 5)))
    assert not input_grad.any()
    assert not grads['weight'].any() and not grads['bias'].any()


def test_dense_weight_gradient_by_hand():
    x = np.array([[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]])
    grad_out = np.array([[0.5, -1.0], [2.0, 1.0]])
    params = {'weight': np.zeros((2, 3)), 'bias': np.zeros(2)}
    _, grads = layers.backward_layer(dense(2), params, x, grad_out)
    for i in range(2):
        for j in range(3):
            assert grads['weight'][i, j] == pytest.approx(sum(x[n, j] * grad_out[n, i] for n in range(2)))
    np.testing.assert_allclose(grads['bias'], grad_out.sum(axis=0))


@pytest.mark.parametrize('spec,in_shape', [
    (conv(3, 3, 1), (2, 6, 6)),
    (conv(3, 4, 2), (2, 7, 6)),
    (conv(3, 3, 1, Padding.VALID), (2, 6, 6)),
    (deconv(3, 4, 2), (2, 3, 3)),
    (deconv(2, 3, 1, Padding.VALID), (2, 4, 4)),
    (dense(5), (2, 3, 3)),
    (dense(12, (3, 2, 2)), (6,)),
    (ELU, (2, 4, 4)),
])
def test_layer_gradients_match_finite_differences(spec, in_shape):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2,) + in_shape)
    # keep elu inputs off the kink at 0
    x = x + np.where(x >= 0, 0.05, -0.05)
    shapes = layers.param_shapes(spec, in_shape)
    params = {key: rng.standard_normal(shape) * 0.5 for key, shape in shapes.items()}
    errors = check_layer(spec, params, x, seed=5)
    assert max(errors.values()) < GRADIENT_TOLERANCE, errors


def test_network_gradients_match_finite_differences(tiny_qmap_spec, tiny_vector_spec):
    for spec in (tiny_qmap_spec, tiny_vector_spec):
        network = Network(spec)
        params = network.init_params(seed=0)
        x = np.random.default_rng(6).random((2,) + spec.input_shape)
        errors = check_network(network, params, x, seed=7, step=1e-5, samples=10)
        assert max(errors.values()) < GRADIENT_TOLERANCE, (spec.name, errors)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 16), actions=st.integers(2, 5), extent=st.integers(1, 4))
def test_dueling_mean_over_actions_is_value(seed, actions, extent):
    rng = np.random.default_rng(seed)
    value = rng.standard_normal((3, 1, extent, extent))
    advantage = rng.standard_normal((3, actions, extent, extent))
    q = dueling_combine(value, advantage)
    np.testing.assert_allclose(q.mean(axis=1, keepdims=True), value, atol=1e-6)


def test_dueling_direct_formula():
    value = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    advantage = np.array([[[[0.5, 0.0], [1.0, -1.0]], [[1.5, 2.0], [-1.0, 1.0]]]])
    q = dueling_combine(value, advantage)
    for a in range(2):
        for r in range(2):
            for c in range(2):
                expected = value[0, 0, r, c] + advantage[0, a, r, c] - advantage[0, :, r, c].mean()
                assert q[0, a, r, c] == pytest.approx(expected)
    constant = np.full((1, 2, 2, 2), 0.7)
    np.testing.assert_allclose(dueling_combine(value, constant), np.repeat(value, 2, axis=1))


def test_dueling_rejects_multichannel_value():
    with pytest.raises(ShapeError):
        dueling_combine(np.zeros((1, 2, 3, 3)), np.zeros((1, 4, 3, 3)))


def test_masked_mse_single_element():
    pred = np.array([[0.5, 0.3]])
    target = np.array([[0.9, -4.0]])
    loss, grad = masked_mse_loss(pred, target, np.array([0]))
    assert loss == pytest.approx(0.16)
    assert grad[0, 0] == pytest.approx(-0.8)
    assert grad[0, 1] == 0.0


def test_masked_mse_ignores_other_channels():
    rng = np.random.default_rng(8)
    pred = rng.standard_normal((4, 4, 3, 3))
    target = pred.copy()
    target[:, 2] += 10.0
    actions = np.array([0, 1, 3, 1])
    loss, grad = masked_mse_loss(pred, target, actions)
    assert loss == 0.0
    assert not grad.any()


def test_adam_zero_gradient_leaves_parameters():
    params = ParamStore({'w': np.array([1.0, -2.0])})
    state = OptimizerState.create(params)
    adam_step(params, ParamStore({'w': np.zeros(2)}), state)
    np.testing.assert_array_equal(params['w'], [1.0, -2.0])


def test_adam_first_step_moves_by_learning_rate():
    params = ParamStore({'w': np.array([1.0, -2.0, 0.5])})
    state = OptimizerState.create(params, learning_rate=1e-3)
    adam_step(params, ParamStore({'w': np.array([0.3, -5.0, 2.0])}), state)
    np.testing.assert_allclose(params['w'], [1.0 - 1e-3, -2.0 + 1e-3, 0.5 - 1e-3], atol=1e-8)


def test_adam_three_step_reference_trace():
    # minimise w^2 from w = 1
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    params = ParamStore({'w': np.array([1.0])})
    state = OptimizerState.create(params, lr, b1, b2, eps)
    w, m, v = 1.0, 0.0, 0.0
    for t in range(1, 4):
        g = 2.0 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        adam_step(params, ParamStore({'w': 2.0 * params['w']}), state)
        assert params['w'][0] == pytest.approx(w, abs=1e-10)
    assert state.step == 3


def test_init_is_seeded():
    specs = [conv(8, 3, 1), ELU, dense(4)]
    first = init_params(specs, (3, 6, 6), seed=1)
    assert first.identical(init_params(specs, (3, 6, 6), seed=1))
    assert not first.identical(init_params(specs, (3, 6, 6), seed=2))
    assert not first['layers.0.bias'].any()


def test_init_variance_close_to_nominal():
    spec = conv(64, 4, 1)
    store = init_params([spec], (64, 8, 8), seed=3)
    weight = store['layers.0.weight']
    nominal = nominal_variance(spec, weight.shape)
    assert abs(weight.var() / nominal - 1.0) < 0.2


def test_network_rejects_wrong_observation(tiny_qmap_spec):
    network = Network(tiny_qmap_spec)
    params = network.init_params(seed=0)
    with pytest.raises(ShapeError):
        network.forward(params, np.zeros((1, 3, 6, 6), dtype=np.float32))
