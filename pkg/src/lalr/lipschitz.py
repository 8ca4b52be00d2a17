"""Lipschitz constants of the training losses and the adaptive learning rate.

The losses in this package are Lipschitz in the network output, and the
output-layer gradient factorizes through the activations feeding the output
layer. Writing K_z for the largest absolute value of those activations over
the training data, the loss Lipschitz constants are

    MAE               K_z / (m * n)      (n = 1 gives K_z / m)
    check loss (tau)  K_z * max(tau, 1 - tau) / (m * n)

with m the configured batch size and n the number of output columns. The
adaptive policy sets the learning rate to 1/L at the start of every epoch,
clamped into [eta_min, eta_max].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import LossSpec
from .nn import Network, forward

__all__ = [
    "UnsupportedLossError",
    "LipschitzInputs",
    "LrPolicy",
    "constant_policy",
    "lalr_policy",
    "penultimate_max",
    "lipschitz_constant",
    "learning_rate",
]

DEFAULT_ETA_MAX = 10.0
DEFAULT_ETA_MIN = 1e-4


class UnsupportedLossError(ValueError):
    """Raised when no closed-form Lipschitz constant is available."""


@dataclass(frozen=True)
class LipschitzInputs:
    kz: float
    batch_size: int
    n_outputs: int
    loss: LossSpec

    def __post_init__(self):
        if self.kz < 0 or not np.isfinite(self.kz):
            raise ValueError(f"kz must be finite and >= 0, got {self.kz}")
        if self.batch_size < 1 or self.n_outputs < 1:
            raise ValueError("batch_size and n_outputs must be >= 1")


@dataclass(frozen=True)
class LrPolicy:
    """Learning-rate policy: constant eta, or adaptive 1/L with clamping."""

    kind: str  # "constant" | "lalr"
    eta: float = 0.0
    eta_min: float = DEFAULT_ETA_MIN
    eta_max: float = DEFAULT_ETA_MAX

    def __post_init__(self):
        if self.kind == "constant":
            # eta = 0 is allowed as the degenerate "frozen parameters" rate
            if not (np.isfinite(self.eta) and self.eta >= 0):
                raise ValueError(f"constant policy needs eta >= 0, got {self.eta}")
        elif self.kind == "lalr":
            if not 0 < self.eta_min <= self.eta_max:
                raise ValueError(
                    f"lalr policy needs 0 < eta_min <= eta_max, got [{self.eta_min}, {self.eta_max}]"
                )
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    def label(self) -> str:
        return f"constant({self.eta:g})" if self.kind == "constant" else "lalr"


def constant_policy(eta: float) -> LrPolicy:
    return LrPolicy("constant", eta=eta)


def lalr_policy(eta_max: float = DEFAULT_ETA_MAX, eta_min: float = DEFAULT_ETA_MIN) -> LrPolicy:
    return LrPolicy("lalr", eta_min=eta_min, eta_max=eta_max)


def penultimate_max(net: Network, X_train: np.ndarray, subsample: int | None = None,
                    seed: int = 0) -> float:
    """K_z: largest |activation| feeding the output layer, over the data.

    Runs in eval mode (dropout off) since the bound concerns the deployed
    forward map. With no hidden layers the activations feeding the output
    are the inputs themselves. ``subsample`` caps the number of rows used
    (an approximation for very large sets); None means the full set.
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    if X_train.ndim != 2 or X_train.shape[0] == 0:
        raise ValueError("X_train must be a non-empty 2-d matrix")
    if subsample is not None and subsample < X_train.shape[0]:
        rows = np.random.default_rng(seed).choice(X_train.shape[0], size=subsample, replace=False)
        X_train = X_train[rows]
    if net.n_layers == 1:
        return float(np.max(np.abs(X_train)))
    trace = forward(net, X_train, mode="eval")
    return float(np.max(np.abs(trace.penultimate)))


def lipschitz_constant(inp: LipschitzInputs) -> float:
    """Closed-form loss Lipschitz constant; no form exists for MSE."""
    m, n = inp.batch_size, inp.n_outputs
    if inp.loss.kind == "mae":
        return inp.kz / (m * n)
    if inp.loss.kind == "check":
        tau = inp.loss.tau
        return inp.kz * max(tau, 1.0 - tau) / (m * n)
    raise UnsupportedLossError(
        f"no closed-form Lipschitz constant for loss {inp.loss.kind!r}"
    )


def learning_rate(policy: LrPolicy, lipschitz: float) -> tuple[float, bool]:
    """Epoch learning rate under ``policy`` given the Lipschitz constant.

    Returns (eta, clamped). Constant policies never clamp. For the adaptive
    policy eta = 1/L clipped into [eta_min, eta_max]; a degenerate L = 0
    yields eta_max (reported as clamped).
    """
    if lipschitz < 0 or not np.isfinite(lipschitz):
        raise ValueError(f"Lipschitz constant must be finite and >= 0, got {lipschitz}")
    if policy.kind == "constant":
        return policy.eta, False
    if lipschitz == 0.0:
        return policy.eta_max, True
    eta = 1.0 / lipschitz
    if eta > policy.eta_max:
        return policy.eta_max, True
    if eta < policy.eta_min:
        return policy.eta_min, True
    return eta, False
