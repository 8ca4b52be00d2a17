"""Minimal deterministic feed-forward regression engine.

Dense layers only, float64 throughout, explicit seeds everywhere. The
forward pass records every pre-activation and activation so the learning
rate machinery can inspect the layer feeding the output ("penultimate"
activations) and backprop can run without re-tracing.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Activation",
    "RELU",
    "LEAKY_RELU",
    "SOFTSIGN",
    "SOFTPLUS",
    "LINEAR",
    "LayerSpec",
    "NetworkSpec",
    "Network",
    "ForwardTrace",
    "Gradients",
    "activation_eval",
    "init_network",
    "forward",
    "backward",
    "apply_update",
]

_KINDS = ("relu", "leaky_relu", "softsign", "softplus", "linear")


@dataclass(frozen=True)
class Activation:
    """Elementwise activation. ``slope`` only matters for leaky_relu.

    Every kind here has |derivative| <= 1 whenever slope <= 1, which the
    learning-rate bound relies on.
    """

    kind: str
    slope: float = 0.3

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "leaky_relu" and not np.isfinite(self.slope):
            raise ValueError("leaky_relu slope must be finite")

    def eval(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (value, derivative), both elementwise over ``z``."""
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "relu":
            # derivative at z == 0 is defined as 0
            d = (z > 0).astype(np.float64)
            return np.maximum(z, 0.0), d
        if self.kind == "leaky_relu":
            d = np.where(z > 0, 1.0, self.slope)
            return np.where(z > 0, z, self.slope * z), d
        if self.kind == "softsign":
            denom = 1.0 + np.abs(z)
            return z / denom, 1.0 / denom**2
        if self.kind == "softplus":
            # log(1 + e^z) and its sigmoid, both overflow-free for large |z|
            value = np.logaddexp(0.0, z)
            t = np.exp(-np.abs(z))
            d = np.where(z >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
            return value, d
        return z.copy(), np.ones_like(z)


RELU = Activation("relu")
LEAKY_RELU = Activation("leaky_relu", 0.3)
SOFTSIGN = Activation("softsign")
SOFTPLUS = Activation("softplus")
LINEAR = Activation("linear")


def activation_eval(activation: Activation, z: float) -> tuple[float, float]:
    """Scalar convenience wrapper: (value, derivative) at ``z``."""
    value, d = activation.eval(np.asarray([z], dtype=np.float64))
    return float(value[0]), float(d[0])


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: Activation
    dropout: float = 0.0

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("layer width must be a positive integer")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a dense regressor.

    ``hidden`` may be empty, in which case the network is a single
    affine layer from inputs to outputs.
    """

    input_dim: int
    hidden: tuple[LayerSpec, ...]
    output_dim: int = 1
    output_activation: Activation = LINEAR

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be a positive integer")
        if self.output_dim < 1:
            raise ValueError("output_dim must be a positive integer")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per affine layer, input to output."""
        widths = [self.input_dim] + [h.width for h in self.hidden] + [self.output_dim]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def activations(self) -> list[Activation]:
        return [h.activation for h in self.hidden] + [self.output_activation]

    @property
    def dropouts(self) -> list[float]:
        # output layer never has dropout
        return [h.dropout for h in self.hidden] + [0.0]

    @property
    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims)


def mlp_spec(input_dim, hidden_widths, output_dim=1, hidden_activation=RELU,
             output_activation=LINEAR, dropout=0.0) -> NetworkSpec:
    """Shorthand for the common uniform-activation architecture."""
    layers = tuple(LayerSpec(w, hidden_activation, dropout) for w in hidden_widths)
    return NetworkSpec(input_dim, layers, output_dim, output_activation)


@dataclass(frozen=True)
class Network:
    """Weights and biases for a NetworkSpec. Treated as immutable; updates
    produce new Network values."""

    spec: NetworkSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = self.spec.layer_dims
        if len(self.weights) != len(dims) or len(self.biases) != len(dims):
            raise ValueError("layer count mismatch between spec and parameters")
        for (fi, fo), w, b in zip(dims, self.weights, self.biases):
            if w.shape != (fi, fo) or b.shape != (fo,):
                raise ValueError(f"parameter shape mismatch: expected {(fi, fo)}, got {w.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("network parameters must be finite")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def digest(self) -> str:
        """SHA-256 over all parameter bytes; stable identity for a state."""
        h = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(w).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer record of one forward pass over a batch.

    ``activations[0]`` is the input batch; ``activations[l]`` for l >= 1 is
    layer l's output after any dropout. ``masks[l-1]`` holds the inverted
    dropout mask applied to layer l (None in eval mode or when rate is 0).
    ``act_derivs`` carries the activation derivatives at each layer's
    pre-activations so backprop need not re-evaluate them.
    """

    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]
    masks: tuple[np.ndarray | None, ...]
    act_derivs: tuple[np.ndarray, ...]

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]

    @property
    def penultimate(self) -> np.ndarray:
        """Activations feeding the output layer; the input itself when
        there are no hidden layers."""
        return self.activations[-2]


@dataclass(frozen=True)
class Gradients:
    d_weights: tuple[np.ndarray, ...]
    d_biases: tuple[np.ndarray, ...]

    def max_abs(self) -> float:
        return max(
            max((float(np.max(np.abs(g))) for g in self.d_weights if g.size), default=0.0),
            max((float(np.max(np.abs(g))) for g in self.d_biases if g.size), default=0.0),
        )

    def norm(self) -> float:
        total = sum(float(np.sum(g * g)) for g in self.d_weights)
        total += sum(float(np.sum(g * g)) for g in self.d_biases)
        return float(np.sqrt(total))


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.

    Same (spec, seed) gives bit-identical parameters.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(spec, tuple(weights), tuple(biases))


def forward(net: Network, X: np.ndarray, mode: str = "eval", seed: int = 0) -> ForwardTrace:
    """Run the batch ``X`` (m x input_dim) through the network.

    In train mode, inverted dropout (scale by 1/(1-rate)) draws masks from
    ``seed``; in eval mode dropout layers are the identity.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.spec.input_dim:
        raise ValueError(
            f"input batch must be m x {net.spec.input_dim}, got shape {X.shape}"
        )
    rng = np.random.default_rng(seed) if mode == "train" else None

    pre, acts, masks, derivs = [], [X], [], []
    a = X
    for w, b, act, rate in zip(net.weights, net.biases, net.spec.activations, net.spec.dropouts):
        z = a @ w + b
        a, d = act.eval(z)
        mask = None
        if mode == "train" and rate > 0.0:
            keep = rng.random(a.shape) >= rate
            mask = keep / (1.0 - rate)
            a = a * mask
        pre.append(z)
        acts.append(a)
        masks.append(mask)
        derivs.append(d)
    return ForwardTrace(tuple(pre), tuple(acts), tuple(masks), tuple(derivs))


def backward(net: Network, trace: ForwardTrace, dE_dA: np.ndarray) -> Gradients:
    """Exact gradients of the scalar loss whose output gradient is ``dE_dA``.

    ``dE_dA`` must match the last activation's shape (m x output_dim) and
    already carry the loss's own normalization; backward only applies the
    chain rule through the traced layers (dropout masks included).
    """
    dE_dA = np.asarray(dE_dA, dtype=np.float64)
    if dE_dA.shape != trace.output.shape:
        raise ValueError(
            f"output gradient shape {dE_dA.shape} != activation shape {trace.output.shape}"
        )
    n_layers = net.n_layers
    d_weights: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]

    delta = dE_dA
    for l in range(n_layers - 1, -1, -1):
        mask = trace.masks[l]
        if mask is not None:
            delta = delta * mask
        dz = delta * trace.act_derivs[l]
        d_weights[l] = trace.activations[l].T @ dz
        d_biases[l] = dz.sum(axis=0)
        if l > 0:
            delta = dz @ net.weights[l].T
    return Gradients(tuple(d_weights), tuple(d_biases))


def _trusted_network(spec: NetworkSpec, weights, biases) -> Network:
    # construction path for shapes already known to be valid; skips the
    # per-parameter validation scan that dominates tight update loops
    net = object.__new__(Network)
    object.__setattr__(net, "spec", spec)
    object.__setattr__(net, "weights", weights)
    object.__setattr__(net, "biases", biases)
    return net


def apply_update(net: Network, grads: Gradients, lr: float) -> Network:
    """Plain gradient step: params - lr * grads, as a new Network.

    The result is not re-validated (training loops call this once per
    batch); non-finite parameters surface through the trainer's loss guard.
    """
    if not np.isfinite(lr):
        raise ValueError(f"learning rate must be finite, got {lr}")
    if len(grads.d_weights) != len(net.weights) or any(
        w.shape != g.shape for w, g in zip(net.weights, grads.d_weights)
    ):
        raise ValueError("gradient shapes do not match network parameters")
    weights = tuple(w - lr * g for w, g in zip(net.weights, grads.d_weights))
    biases = tuple(b - lr * g for b, g in zip(net.biases, grads.d_biases))
    return _trusted_network(net.spec, weights, biases)
