import numpy as np
import pytest

from lalr.lipschitz import (
    LipschitzInputs,
    UnsupportedLossError,
    constant_policy,
    lalr_policy,
    learning_rate,
    lipschitz_constant,
    penultimate_max,
)
from lalr.losses import LossSpec, loss_grad
from lalr.nn import (
    LINEAR,
    RELU,
    SOFTSIGN,
    LayerSpec,
    NetworkSpec,
    apply_update,
    backward,
    forward,
    init_network,
)


def _zero_hidden_net(d):
    return init_network(NetworkSpec(d, (), 1, LINEAR), seed=0)


class TestPenultimateMax:
    def test_inputs_are_penultimate_without_hidden_layers(self):
        X = np.array([[0.5, -2.0, 1.0], [0.3, 1.5, -0.7]])
        assert penultimate_max(_zero_hidden_net(3), X) == 2.0

    def test_all_zero(self):
        assert penultimate_max(_zero_hidden_net(2), np.zeros((4, 2))) == 0.0

    def test_standardized_input_max(self):
        X = np.array([[3.1], [-1.0], [0.2]])
        assert penultimate_max(_zero_hidden_net(1), X) == 3.1

    def test_hidden_layer_against_manual_chain(self):
        # independent oracle: replicate relu(X W1 + b1) with plain numpy
        spec = NetworkSpec(3, (LayerSpec(5, RELU),), 1, SOFTSIGN)
        net = init_network(spec, 17)
        X = np.random.default_rng(8).normal(0, 2, (40, 3))
        hidden = np.maximum(X @ net.weights[0] + net.biases[0], 0.0)
        assert penultimate_max(net, X) == np.abs(hidden).max()

    def test_dropout_never_applies(self):
        spec = NetworkSpec(3, (LayerSpec(5, RELU, dropout=0.9),), 1, SOFTSIGN)
        spec_plain = NetworkSpec(3, (LayerSpec(5, RELU, dropout=0.0),), 1, SOFTSIGN)
        X = np.random.default_rng(9).normal(size=(30, 3))
        assert penultimate_max(init_network(spec, 3), X) == \
            penultimate_max(init_network(spec_plain, 3), X)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            penultimate_max(_zero_hidden_net(2), np.zeros((0, 2)))

    def test_subsample_bounds_full_max(self):
        X = np.random.default_rng(10).normal(0, 1, (1000, 2))
        full = penultimate_max(_zero_hidden_net(2), X)
        sub = penultimate_max(_zero_hidden_net(2), X, subsample=100, seed=0)
        assert sub <= full


class TestLipschitzConstant:
    def test_mae_single_output(self):
        inp = LipschitzInputs(2.0, 256, 1, LossSpec("mae"))
        assert lipschitz_constant(inp) == 0.0078125

    def test_mae_multi_output(self):
        inp = LipschitzInputs(2.0, 64, 2, LossSpec("mae"))
        assert lipschitz_constant(inp) == 0.015625

    def test_check(self):
        inp = LipschitzInputs(2.0, 64, 1, LossSpec("check", 0.95))
        assert lipschitz_constant(inp) == 0.0296875

    def test_check_symmetric_tau(self):
        low = lipschitz_constant(LipschitzInputs(2.0, 64, 1, LossSpec("check", 0.05)))
        high = lipschitz_constant(LipschitzInputs(2.0, 64, 1, LossSpec("check", 0.95)))
        assert low == high

    def test_mse_unsupported(self):
        with pytest.raises(UnsupportedLossError):
            lipschitz_constant(LipschitzInputs(2.0, 64, 1, LossSpec("mse")))

    def test_scaling_homogeneity(self):
        # degree 1 in kz, degree -1 in m; exact with power-of-two factors
        base = lipschitz_constant(LipschitzInputs(1.5, 32, 1, LossSpec("mae")))
        assert lipschitz_constant(LipschitzInputs(3.0, 32, 1, LossSpec("mae"))) == 2.0 * base
        assert lipschitz_constant(LipschitzInputs(1.5, 64, 1, LossSpec("mae"))) == 0.5 * base

    def test_validation(self):
        with pytest.raises(ValueError):
            LipschitzInputs(-1.0, 8, 1, LossSpec("mae"))
        with pytest.raises(ValueError):
            LipschitzInputs(1.0, 0, 1, LossSpec("mae"))


class TestLearningRate:
    def test_constant_ignores_lipschitz(self):
        policy = constant_policy(0.1)
        for L in (0.0, 1e-9, 5.0):
            assert learning_rate(policy, L) == (0.1, False)

    def test_lalr_clamps_to_max(self):
        eta, clamped = learning_rate(lalr_policy(eta_max=10.0), 0.0078125)
        assert (eta, clamped) == (10.0, True)  # 1/L = 128

    def test_lalr_unclamped(self):
        eta, clamped = learning_rate(lalr_policy(eta_max=10.0, eta_min=1e-4), 0.15)
        assert clamped is False
        assert eta == pytest.approx(6.666666666666667, rel=1e-15)

    def test_degenerate_zero(self):
        eta, clamped = learning_rate(lalr_policy(eta_max=10.0), 0.0)
        assert (eta, clamped) == (10.0, True)

    def test_clamps_to_min(self):
        eta, clamped = learning_rate(lalr_policy(eta_max=10.0, eta_min=1e-4), 1e9)
        assert (eta, clamped) == (1e-4, True)

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            constant_policy(-0.1)
        with pytest.raises(ValueError):
            lalr_policy(eta_max=1e-5, eta_min=1e-4)


def _last_layer_per_example_max(net, X, Y, loss):
    """Maximum over examples/units of the chain-rule product
    |dE/da| * |act'| * |penultimate activation| for the output layer."""
    trace = forward(net, X)
    g = loss_grad(loss, trace.output, Y)
    dz = np.abs(g * trace.act_derivs[-1])
    return float((dz.max(axis=1) * np.abs(trace.penultimate).max(axis=1)).max())


@pytest.mark.parametrize("loss", [LossSpec("mae"), LossSpec("check", 0.05),
                                  LossSpec("check", 0.5), LossSpec("check", 0.95)],
                         ids=lambda s: s.label())
def test_last_layer_gradient_bound(loss, rng):
    # the chain-rule product for any single example never exceeds the
    # closed-form Lipschitz constant computed from that batch's activations
    for _ in range(25):
        m = int(rng.choice([4, 16, 64]))
        d = int(rng.integers(2, 6))
        h = int(rng.integers(3, 12))
        spec = NetworkSpec(d, (LayerSpec(h, RELU),), 1, SOFTSIGN)
        net = init_network(spec, int(rng.integers(0, 2**31)))
        X = rng.normal(0, 1.5, (m, d))
        Y = rng.normal(0, 1, (m, 1))
        kz = penultimate_max(net, X)
        L = lipschitz_constant(LipschitzInputs(kz, m, 1, loss))
        assert _last_layer_per_example_max(net, X, Y, loss) <= L + 1e-9


def test_step_equivalence_tau_half(rng):
    # check(0.5) halves the gradient and doubles the unclamped rate, so one
    # adaptive step is identical to the MAE step
    policy = lalr_policy(eta_max=1e12, eta_min=1e-12)
    for _ in range(10):
        net, X, Y = _random_pair(rng)
        trace = forward(net, X)
        kz = penultimate_max(net, X)
        stepped = {}
        for loss in (LossSpec("mae"), LossSpec("check", 0.5)):
            L = lipschitz_constant(LipschitzInputs(kz, X.shape[0], 1, loss))
            eta, _ = learning_rate(policy, L)
            grads = backward(net, trace, loss_grad(loss, trace.output, Y))
            stepped[loss.kind] = apply_update(net, grads, eta)
        for w1, w2 in zip(stepped["mae"].weights, stepped["check"].weights):
            assert np.max(np.abs(w1 - w2)) <= 1e-12
        for b1, b2 in zip(stepped["mae"].biases, stepped["check"].biases):
            assert np.max(np.abs(b1 - b2)) <= 1e-12


def _random_pair(rng):
    d = int(rng.integers(2, 5))
    m = int(rng.integers(4, 33))
    spec = NetworkSpec(d, (LayerSpec(int(rng.integers(3, 9)), RELU),), 1, SOFTSIGN)
    net = init_network(spec, int(rng.integers(0, 2**31)))
    return net, rng.normal(0, 1, (m, d)), rng.normal(0, 1, (m, 1))
