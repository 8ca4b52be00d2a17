"""Shared fixtures and independent oracle helpers for the test suite.

The gradient oracle here must stay independent of the backprop path it
checks: it only ever calls the forward pass and the loss value functions,
never `backward`.
"""

from __future__ import annotations

import numpy as np
import pytest

from lalr.losses import LossSpec, loss_value
from lalr.nn import (
    LEAKY_RELU,
    LINEAR,
    RELU,
    SOFTPLUS,
    SOFTSIGN,
    Activation,
    LayerSpec,
    Network,
    NetworkSpec,
    forward,
    init_network,
)

ALL_ACTIVATIONS = (RELU, LEAKY_RELU, SOFTSIGN, SOFTPLUS, LINEAR)


def numeric_gradients(net: Network, X: np.ndarray, Y: np.ndarray, loss: LossSpec,
                      h: float = 1e-6):
    """Central finite differences of the loss over every parameter.

    Returns (d_weights, d_biases) lists shaped like the network parameters.
    Eval-mode forward only; independent of analytic backprop.
    """

    def loss_of(weights, biases):
        probe = Network(net.spec, tuple(weights), tuple(biases))
        return loss_value(loss, forward(probe, X, mode="eval").output, Y)

    d_weights, d_biases = [], []
    for layer in range(net.n_layers):
        dW = np.zeros_like(net.weights[layer])
        for idx in np.ndindex(*net.weights[layer].shape):
            w_plus = [w.copy() for w in net.weights]
            w_minus = [w.copy() for w in net.weights]
            w_plus[layer][idx] += h
            w_minus[layer][idx] -= h
            dW[idx] = (loss_of(w_plus, net.biases) - loss_of(w_minus, net.biases)) / (2 * h)
        d_weights.append(dW)
        db = np.zeros_like(net.biases[layer])
        for idx in np.ndindex(*net.biases[layer].shape):
            b_plus = [b.copy() for b in net.biases]
            b_minus = [b.copy() for b in net.biases]
            b_plus[layer][idx] += h
            b_minus[layer][idx] -= h
            db[idx] = (loss_of(net.weights, b_plus) - loss_of(net.weights, b_minus)) / (2 * h)
        d_biases.append(db)
    return d_weights, d_biases


def random_net_and_batch(rng: np.random.Generator, loss_kind: str = "mse",
                         max_batch: int = 12, output_activation: Activation | None = None):
    """Small random dropout-free network plus a matching batch."""
    d = int(rng.integers(1, 5))
    n = int(rng.integers(1, 3))
    m = int(rng.integers(1, max_batch + 1))
    depth = int(rng.integers(0, 3))
    hidden = tuple(
        LayerSpec(int(rng.integers(2, 7)), rng.choice(ALL_ACTIVATIONS))
        for _ in range(depth)
    )
    out_act = output_activation if output_activation is not None \
        else rng.choice((LINEAR, SOFTSIGN, SOFTPLUS))
    spec = NetworkSpec(d, hidden, n, out_act)
    net = init_network(spec, int(rng.integers(0, 2**31)))
    X = rng.normal(0.0, 1.0, (m, d))
    Y = rng.normal(0.0, 1.0, (m, n))
    return net, X, Y


def away_from_kinks(net: Network, X, Y, margin: float = 1e-3) -> bool:
    """True when every residual is safely away from the nondifferentiable
    points of MAE/check losses."""
    pred = forward(net, X, mode="eval").output
    return bool(np.all(np.abs(Y - pred) > margin))


def differentiable_case(net: Network, X, margin: float = 1e-4) -> bool:
    """True when no pre-activation sits near a point where the activation
    loses smoothness (relu family: gradient kink; softsign: curvature jump),
    so a central-difference probe keeps its full accuracy order."""
    trace = forward(net, X, mode="eval")
    for layer, act in enumerate(net.spec.activations):
        if act.kind in ("relu", "leaky_relu", "softsign"):
            if np.any(np.abs(trace.pre_activations[layer]) <= margin):
                return False
    return True


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
