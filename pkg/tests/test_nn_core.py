import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from midlab.errors import MissingCacheError, NonFiniteError, ShapeError
from midlab.nn_core import (
    AdamState,
    Layer,
    Network,
    adam_step,
    bce_loss,
    gradient_check,
    quadratic_loss,
    random_architecture,
    softmax_cross_entropy,
)


def single(weight, bias, act, slope=0.2):
    return Network([Layer(np.asarray(weight, float), np.asarray(bias, float), act, slope)])


def central_difference_grads(net, loss, x, h=1e-5):
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        flat, gf = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            s = flat[i]
            flat[i] = s + h
            lp = loss(net(x))[0]
            flat[i] = s - h
            lm = loss(net(x))[0]
            flat[i] = s
            gf[i] = (lp - lm) / (2 * h)
        out.append(g)
    return out


# ---- forward ------------------------------------------------------------------


def test_identity_layer_passes_input_through():
    x = np.array([[1.5, -2.0], [0.25, 3.0]])
    net = single(np.eye(2), np.zeros(2), "identity")
    np.testing.assert_array_equal(net(x), x)


def test_sigmoid_of_zero_weights_is_half():
    net = single(np.zeros((3, 2)), np.zeros(2), "sigmoid")
    x = np.random.default_rng(0).normal(size=(5, 3)) * 100
    np.testing.assert_array_equal(net(x), np.full((5, 2), 0.5))


def test_leaky_relu_slope():
    net = single(np.eye(2), np.zeros(2), "leaky_relu")
    np.testing.assert_allclose(net(np.array([[-1.0, 2.0]])), [[-0.2, 2.0]], rtol=0, atol=1e-15)


def test_default_slope_is_point_two():
    net = Network.build([2, 3, 1], "leaky_relu", np.random.default_rng(0))
    assert all(l.slope == 0.2 for l in net.layers)


def test_forward_rejects_wrong_width():
    net = Network.build([3, 4, 1], "tanh", np.random.default_rng(0))
    with pytest.raises(ShapeError, match=r"expects \(n, 3\)"):
        net(np.zeros((2, 2)))


def test_layers_must_compose():
    a = Layer(np.zeros((2, 3)), np.zeros(3))
    b = Layer(np.zeros((4, 1)), np.zeros(1))
    with pytest.raises(ShapeError):
        Network([a, b])


def test_forward_is_deterministic():
    rng = np.random.default_rng(3)
    net = Network.build([2, 8, 8, 3], ["leaky_relu", "tanh", "sigmoid"], rng)
    x = rng.normal(size=(17, 2))
    assert net(x).tobytes() == net(x).tobytes()


def test_glorot_init_bounds_and_zero_bias():
    net = Network.build([10, 6], "identity", np.random.default_rng(1))
    limit = np.sqrt(6 / 16)
    assert np.all(np.abs(net.layers[0].weight) <= limit)
    assert np.all(net.layers[0].bias == 0)
    assert net.param_count == 66


# ---- backward -------------------------------------------------------------------


def test_zero_upstream_gives_zero_gradients():
    rng = np.random.default_rng(0)
    net = Network.build([3, 5, 2], ["tanh", "sigmoid"], rng)
    out, cache = net.forward(rng.normal(size=(4, 3)))
    grads, dx = net.backward(cache, np.zeros_like(out))
    assert all(np.all(g == 0) for g in grads)
    assert np.all(dx == 0)


def test_linear_layer_weight_gradient_is_outer_product():
    # y = x W (row convention), so dL/dW = x^T g
    rng = np.random.default_rng(1)
    w = rng.normal(size=(3, 2))
    net = single(w, np.zeros(2), "identity")
    x = rng.normal(size=(1, 3))
    g = rng.normal(size=(1, 2))
    _, cache = net.forward(x)
    grads, dx = net.backward(cache, g)
    np.testing.assert_allclose(grads[0], x.T @ g, rtol=1e-15)
    np.testing.assert_allclose(grads[1], g, rtol=1e-15)
    np.testing.assert_allclose(dx, g @ w.T, rtol=1e-15)


def test_backward_without_cache_is_rejected():
    net = Network.build([2, 1], "identity", np.random.default_rng(0))
    with pytest.raises(MissingCacheError):
        net.backward(None, np.zeros((1, 1)))


def test_gradient_shapes_match_parameters():
    rng = np.random.default_rng(2)
    net = Network.build([2, 4, 3], "leaky_relu", rng)
    out, cache = net.forward(rng.normal(size=(6, 2)))
    grads, _ = net.backward(cache, np.ones_like(out))
    assert [g.shape for g in grads] == [p.shape for p in net.params()]


def test_two_layer_net_matches_finite_differences():
    rng = np.random.default_rng(4)
    net = Network.build([3, 6, 2], ["tanh", "identity"], rng)
    x = rng.normal(size=(8, 3))
    target = rng.normal(size=(8, 2))
    loss = lambda o: quadratic_loss(o, target)
    out, cache = net.forward(x)
    analytic, _ = net.backward(cache, loss(out)[1])
    numeric = central_difference_grads(net, loss, x)
    for a, n in zip(analytic, numeric):
        rel = np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))
        assert rel.max() < 1e-4


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    net = Network.build([2, 5, 1], ["leaky_relu", "sigmoid"], rng)
    x = rng.normal(size=(4, 2))
    out, cache = net.forward(x)
    _, dx = net.backward(cache, np.ones_like(out))
    h = 1e-6
    for i in range(4):
        for j in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            fd = (net(xp).sum() - net(xm).sum()) / (2 * h)
            assert abs(fd - dx[i, j]) < 1e-7


# ---- losses -------------------------------------------------------------------


def test_softmax_cross_entropy_gradient():
    rng = np.random.default_rng(6)
    logits = rng.normal(size=(5, 3))
    labels = np.array([0, 2, 1, 1, 0])
    _, g = softmax_cross_entropy(logits, labels)
    h = 1e-6
    for i in range(5):
        for j in range(3):
            lp, lm = logits.copy(), logits.copy()
            lp[i, j] += h
            lm[i, j] -= h
            fd = (softmax_cross_entropy(lp, labels)[0] - softmax_cross_entropy(lm, labels)[0]) / (2 * h)
            assert abs(fd - g[i, j]) < 1e-8


def test_bce_at_half_is_log_two():
    value, _ = bce_loss(np.full((4, 1), 0.5), 1.0)
    assert value == pytest.approx(np.log(2), abs=1e-15)


# ---- Adam ---------------------------------------------------------------------


def test_adam_zero_gradients_exact_noop():
    rng = np.random.default_rng(0)
    net = Network.build([2, 4, 1], "tanh", rng)
    before = [p.copy() for p in net.params()]
    state = AdamState.for_network(net)
    for _ in range(10):
        adam_step(net, [np.zeros_like(p) for p in net.params()], state)
    assert state.step == 10
    for b, p in zip(before, net.params()):
        assert b.tobytes() == p.tobytes()


@pytest.mark.parametrize("g", [3.0, -0.01, 1e4])
def test_adam_first_step_moves_by_learning_rate(g):
    net = single([[1.0]], [0.0], "identity")
    state = AdamState.for_network(net, learning_rate=0.0002)
    adam_step(net, [np.array([[g]]), np.zeros((1, 1))], state)
    # m_hat / sqrt(v_hat) = g / |g| on the first step, up to epsilon
    assert net.layers[0].weight[0, 0] == pytest.approx(1.0 - 0.0002 * np.sign(g), abs=1e-9)


def test_adam_constant_positive_gradient_decreases_monotonically():
    # oracle: simulate the recurrence directly
    lr, b1, b2, eps = 0.0002, 0.5, 0.999, 1e-8
    m = v = 0.0
    theta = [1.0]
    for t in range(1, 101):
        m = b1 * m + (1 - b1) * 0.7
        v = b2 * v + (1 - b2) * 0.49
        theta.append(theta[-1] - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps))
    net = single([[1.0]], [0.0], "identity")
    state = AdamState.for_network(net, lr, b1, b2, eps)
    path = [1.0]
    for _ in range(100):
        adam_step(net, [np.array([[0.7]]), np.zeros((1, 1))], state)
        path.append(net.layers[0].weight[0, 0])
    assert np.all(np.diff(path) < 0)
    np.testing.assert_allclose(path, theta, rtol=0, atol=1e-14)


def test_adam_rejects_nonfinite_gradient():
    net = single([[1.0]], [0.0], "identity")
    state = AdamState.for_network(net)
    with pytest.raises(NonFiniteError) as info:
        adam_step(net, [np.array([[np.nan]]), np.zeros((1, 1))], state)
    assert info.value.diagnostics["parameter"] == 0
    assert state.step == 0
    assert net.layers[0].weight[0, 0] == 1.0


def test_adam_rejects_shape_mismatch():
    net = single([[1.0]], [0.0], "identity")
    with pytest.raises(ShapeError):
        adam_step(net, [np.zeros((2, 1)), np.zeros((1, 1))], AdamState.for_network(net))


# ---- gradient_check -------------------------------------------------------------


def test_gradcheck_linear_quadratic_is_nearly_exact():
    rng = np.random.default_rng(7)
    net = Network.build([3, 4, 2], "identity", rng)
    x, target = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    assert gradient_check(net, lambda o: quadratic_loss(o, target), x, 1e-5) < 1e-7


def test_gradcheck_tanh_sigmoid_net():
    rng = np.random.default_rng(8)
    net = Network.build([2, 6, 3], ["tanh", "sigmoid"], rng)
    x, target = rng.normal(size=(5, 2)), rng.normal(size=(5, 3))
    assert gradient_check(net, lambda o: quadratic_loss(o, target), x, 1e-5) < 1e-4


def test_gradcheck_zero_network_symmetric_loss():
    net = Network.build([2, 3, 1], "tanh", np.random.default_rng(0))
    for p in net.params():
        p[...] = 0.0
    x = np.random.default_rng(1).normal(size=(4, 2))
    # loss symmetric in the output about 0: both gradients vanish
    loss = lambda o: quadratic_loss(o, np.zeros_like(o))
    out, cache = net.forward(x)
    grads, _ = net.backward(cache, loss(out)[1])
    assert all(np.all(g == 0) for g in grads)
    assert gradient_check(net, loss, x, 1e-5) == 0.0


def test_gradcheck_restores_parameters():
    rng = np.random.default_rng(9)
    net = Network.build([2, 3, 1], "sigmoid", rng)
    before = [p.copy() for p in net.params()]
    gradient_check(net, lambda o: quadratic_loss(o, np.ones_like(o)), rng.normal(size=(3, 2)))
    assert all(b.tobytes() == p.tobytes() for b, p in zip(before, net.params()))


def test_gradcheck_rejects_nonpositive_step():
    net = single([[1.0]], [0.0], "identity")
    with pytest.raises(ValueError):
        gradient_check(net, lambda o: quadratic_loss(o, o * 0), np.ones((1, 1)), 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradcheck_property_random_architectures(seed):
    rng = np.random.default_rng(seed)
    sizes, acts = random_architecture(rng)
    net = Network.build(sizes, acts, rng)
    for l in net.layers:
        l.bias[...] = rng.normal(0.0, 0.1, size=l.bias.shape)
    x = rng.normal(size=(6, sizes[0]))
    target = rng.normal(size=(6, sizes[-1]))
    assert gradient_check(net, lambda o: quadratic_loss(o, target), x, 1e-5) < 1e-4
