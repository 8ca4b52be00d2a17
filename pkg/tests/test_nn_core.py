import numpy as np
import pytest

from lalr.losses import LossSpec
from lalr.nn import (
    LINEAR,
    RELU,
    SOFTSIGN,
    Gradients,
    LayerSpec,
    Network,
    NetworkSpec,
    apply_update,
    backward,
    forward,
    init_network,
    mlp_spec,
)

from conftest import away_from_kinks, differentiable_case, numeric_gradients, random_net_and_batch


def test_init_zero_hidden_shapes():
    net = init_network(NetworkSpec(3, (), 1, LINEAR), seed=7)
    assert len(net.weights) == 1
    assert net.weights[0].shape == (3, 1)
    np.testing.assert_array_equal(net.biases[0], np.zeros(1))


def test_init_deterministic():
    spec = mlp_spec(4, [8, 3], output_activation=SOFTSIGN)
    a, b = init_network(spec, 123), init_network(spec, 123)
    for w1, w2 in zip(a.weights, b.weights):
        np.testing.assert_array_equal(w1, w2)
    c = init_network(spec, 124)
    assert any(not np.array_equal(w1, w3) for w1, w3 in zip(a.weights, c.weights))


def test_init_two_hidden_benchmark_shapes():
    # two hidden layers of 20 and 15 units on an 8-feature input
    net = init_network(mlp_spec(8, [20, 15]), seed=0)
    assert [w.shape for w in net.weights] == [(8, 20), (20, 15), (15, 1)]


def test_init_glorot_bounds():
    net = init_network(mlp_spec(30, [10]), seed=5)
    for w, (fan_in, fan_out) in zip(net.weights, net.spec.layer_dims):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        assert np.all(np.abs(w) <= bound)
        assert np.abs(w).max() > 0.5 * bound  # actually fills the range


def test_spec_validation():
    with pytest.raises(ValueError):
        NetworkSpec(0, (), 1)
    with pytest.raises(ValueError):
        LayerSpec(0, RELU)
    with pytest.raises(ValueError):
        LayerSpec(4, RELU, dropout=1.0)


def test_forward_single_linear_layer_is_matrix_product():
    net = init_network(NetworkSpec(2, (), 2, LINEAR), seed=3)
    X = np.array([[1.0, 2.0]])
    trace = forward(net, X)
    np.testing.assert_allclose(trace.output, X @ net.weights[0] + net.biases[0], rtol=0, atol=0)
    np.testing.assert_array_equal(trace.activations[0], X)


def test_forward_eval_ignores_dropout():
    spec_dropped = NetworkSpec(3, (LayerSpec(6, RELU, dropout=0.5),), 1, LINEAR)
    spec_plain = NetworkSpec(3, (LayerSpec(6, RELU, dropout=0.0),), 1, LINEAR)
    X = np.random.default_rng(0).normal(size=(10, 3))
    out_dropped = forward(init_network(spec_dropped, 9), X, mode="eval").output
    out_plain = forward(init_network(spec_plain, 9), X, mode="eval").output
    np.testing.assert_array_equal(out_dropped, out_plain)


def test_forward_train_dropout_masks_deterministic():
    spec = NetworkSpec(3, (LayerSpec(50, RELU, dropout=0.5),), 1, LINEAR)
    net = init_network(spec, 1)
    X = np.random.default_rng(2).normal(size=(20, 3))
    t1 = forward(net, X, mode="train", seed=42)
    t2 = forward(net, X, mode="train", seed=42)
    np.testing.assert_array_equal(t1.output, t2.output)
    np.testing.assert_array_equal(t1.masks[0], t2.masks[0])
    t3 = forward(net, X, mode="train", seed=43)
    assert not np.array_equal(t1.masks[0], t3.masks[0])
    # inverted dropout: kept entries scaled by 1/(1 - rate)
    kept = t1.masks[0][t1.masks[0] > 0]
    np.testing.assert_array_equal(kept, np.full_like(kept, 2.0))


def test_forward_output_shape_contract():
    net = init_network(mlp_spec(5, [7], output_dim=3), seed=0)
    X = np.random.default_rng(1).normal(size=(64, 5))
    assert forward(net, X).output.shape == (64, 3)


def test_forward_dimension_mismatch():
    net = init_network(mlp_spec(5, [4]), seed=0)
    with pytest.raises(ValueError):
        forward(net, np.zeros((3, 4)))


def test_backward_zero_output_gradient():
    net = init_network(mlp_spec(3, [4, 4]), seed=2)
    X = np.random.default_rng(3).normal(size=(6, 3))
    grads = backward(net, forward(net, X), np.zeros((6, 1)))
    assert all(np.all(g == 0) for g in grads.d_weights)
    assert all(np.all(g == 0) for g in grads.d_biases)


def test_backward_linear_layer_closed_form():
    # for a single affine layer, dE/dW = X^T dE_dA exactly
    net = init_network(NetworkSpec(3, (), 1, LINEAR), seed=4)
    X = np.random.default_rng(5).normal(size=(8, 3))
    dE_dA = np.random.default_rng(6).normal(size=(8, 1))
    grads = backward(net, forward(net, X), dE_dA)
    np.testing.assert_allclose(grads.d_weights[0], X.T @ dE_dA, rtol=1e-15, atol=0)
    np.testing.assert_allclose(grads.d_biases[0], dE_dA.sum(axis=0), rtol=1e-15, atol=0)


def test_backward_shape_mismatch():
    net = init_network(mlp_spec(3, [4]), seed=2)
    X = np.zeros((5, 3))
    with pytest.raises(ValueError):
        backward(net, forward(net, X), np.zeros((4, 1)))


def test_backward_matches_finite_differences(rng):
    # independent central-difference oracle over every parameter
    from lalr.losses import loss_grad

    checked = 0
    while checked < 30:
        loss_kind = ("mse", "mae", "check")[checked % 3]
        tau = 0.3 if loss_kind == "check" else None
        loss = LossSpec(loss_kind, tau)
        net, X, Y = random_net_and_batch(rng)
        if not differentiable_case(net, X):
            continue
        if loss_kind != "mse" and not away_from_kinks(net, X, Y):
            continue
        trace = forward(net, X)
        analytic = backward(net, trace, loss_grad(loss, trace.output, Y))
        numeric_w, numeric_b = numeric_gradients(net, X, Y, loss)
        for a, n in zip(analytic.d_weights, numeric_w):
            np.testing.assert_allclose(a, n, rtol=1e-6, atol=1e-9)
        for a, n in zip(analytic.d_biases, numeric_b):
            np.testing.assert_allclose(a, n, rtol=1e-6, atol=1e-9)
        checked += 1


def test_backward_with_dropout_masks(rng):
    # gradient of the *sampled* train-mode network also passes the oracle:
    # fold the fixed mask into an equivalent eval-mode check by scaling
    spec = NetworkSpec(3, (LayerSpec(5, RELU, dropout=0.4),), 1, LINEAR)
    net = init_network(spec, 8)
    X = rng.normal(size=(6, 3))
    Y = rng.normal(size=(6, 1))
    trace = forward(net, X, mode="train", seed=99)
    from lalr.losses import loss_grad

    loss = LossSpec("mse")
    analytic = backward(net, trace, loss_grad(loss, trace.output, Y))
    # numeric check on the last layer only: loss as a function of W2 with the
    # mask held fixed is loss(masked_hidden @ W2 + b2)
    h = 1e-6
    masked_hidden = trace.activations[1]
    W2 = net.weights[1]
    num = np.zeros_like(W2)
    from lalr.losses import loss_value

    for idx in np.ndindex(*W2.shape):
        for sign in (1, -1):
            W = W2.copy()
            W[idx] += sign * h
            out = masked_hidden @ W + net.biases[1]
            num[idx] += sign * loss_value(loss, out, Y)
    num /= 2 * h
    np.testing.assert_allclose(analytic.d_weights[1], num, rtol=1e-6, atol=1e-9)


def test_apply_update_zero_lr_is_identity():
    net = init_network(mlp_spec(2, [3]), seed=0)
    grads = backward(net, forward(net, np.ones((2, 2))), np.ones((2, 1)))
    updated = apply_update(net, grads, 0.0)
    for w1, w2 in zip(net.weights, updated.weights):
        np.testing.assert_array_equal(w1, w2)


def test_apply_update_arithmetic():
    net = Network(NetworkSpec(1, (), 1, LINEAR), (np.array([[1.0]]),), (np.array([0.0]),))
    grads = Gradients((np.array([[0.5]]),), (np.array([0.25]),))
    updated = apply_update(net, grads, 2.0)
    assert updated.weights[0][0, 0] == 0.0
    assert updated.biases[0][0] == -0.5


def test_apply_update_two_steps_equal_summed_gradients():
    net = init_network(mlp_spec(3, [4]), seed=1)
    X = np.random.default_rng(7).normal(size=(5, 3))
    g1 = backward(net, forward(net, X), np.ones((5, 1)))
    g2 = backward(net, forward(net, X), np.full((5, 1), 0.5))
    seq = apply_update(apply_update(net, g1, 0.125), g2, 0.125)
    summed = Gradients(
        tuple(a + b for a, b in zip(g1.d_weights, g2.d_weights)),
        tuple(a + b for a, b in zip(g1.d_biases, g2.d_biases)),
    )
    once = apply_update(net, summed, 0.125)
    for w1, w2 in zip(seq.weights, once.weights):
        np.testing.assert_allclose(w1, w2, rtol=1e-12, atol=1e-15)


def test_apply_update_rejects_bad_inputs():
    net = init_network(mlp_spec(2, []), seed=0)
    grads = Gradients((np.zeros((2, 1)),), (np.zeros(1),))
    with pytest.raises(ValueError):
        apply_update(net, grads, float("nan"))
    bad = Gradients((np.zeros((3, 1)),), (np.zeros(1),))
    with pytest.raises(ValueError):
        apply_update(net, bad, 0.1)


def test_network_validation():
    spec = NetworkSpec(2, (), 1, LINEAR)
    with pytest.raises(ValueError):
        Network(spec, (np.zeros((3, 1)),), (np.zeros(1),))
    with pytest.raises(ValueError):
        Network(spec, (np.full((2, 1), np.inf),), (np.zeros(1),))


def test_forward_trace_bit_identical_across_runs():
    spec = NetworkSpec(4, (LayerSpec(6, RELU, dropout=0.3), LayerSpec(5, SOFTSIGN)), 2, LINEAR)
    net = init_network(spec, 33)
    X = np.random.default_rng(12).normal(size=(17, 4))
    t1 = forward(net, X, mode="train", seed=5)
    t2 = forward(net, X, mode="train", seed=5)
    for a1, a2 in zip(t1.activations, t2.activations):
        np.testing.assert_array_equal(a1, a2)
    for z1, z2 in zip(t1.pre_activations, t2.pre_activations):
        np.testing.assert_array_equal(z1, z2)


def test_digest_tracks_parameters():
    net = init_network(mlp_spec(2, [3]), seed=0)
    same = init_network(mlp_spec(2, [3]), seed=0)
    other = init_network(mlp_spec(2, [3]), seed=1)
    assert net.digest() == same.digest()
    assert net.digest() != other.digest()
