"""Loss values and output-layer gradients for regression training.

All losses normalize by m*n (batch rows times output columns), so the
single-output forms reduce to the usual 1/m averages. The check (quantile)
loss works on the residual e = target - prediction:

    rho_tau(e) = tau * e        if e >= 0
                 -(1 - tau) * e otherwise

so tau=0.5 gives exactly half the MAE. Multi-output check loss divides by
m*n as well; with one output column this is the familiar 1/m form.

Gradients are taken with respect to the prediction and are valid
subgradients at the kinks: sign(0) := 0 for MAE, and the check gradient at
e = 0 uses the e >= 0 branch (-tau).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LossSpec",
    "loss_and_grad",
    "mae",
    "mae_grad",
    "check_loss",
    "check_grad",
    "mse",
    "mse_grad",
    "loss_value",
    "loss_grad",
]


@dataclass(frozen=True)
class LossSpec:
    """Tagged loss choice: 'mae', 'mse', or 'check' (which needs tau)."""

    kind: str
    tau: float | None = None

    def __post_init__(self):
        if self.kind not in ("mae", "mse", "check"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "check":
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise ValueError(f"check loss needs tau in (0, 1), got {self.tau}")
        elif self.tau is not None:
            raise ValueError(f"tau is only meaningful for check loss, got kind={self.kind!r}")

    def label(self) -> str:
        return f"check({self.tau:g})" if self.kind == "check" else self.kind


def _paired(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if pred.ndim == 1:
        pred = pred[:, None]
        target = target[:, None]
    return pred, target


def mae(pred, target) -> float:
    """Mean absolute error, averaged over all m*n entries."""
    pred, target = _paired(pred, target)
    return float(np.sum(np.abs(pred - target)) / pred.size)


def mae_grad(pred, target) -> np.ndarray:
    """d(mae)/d(pred): sign(pred - target)/(m*n), with sign(0) = 0."""
    pred, target = _paired(pred, target)
    return np.sign(pred - target) / pred.size


def check_loss(pred, target, tau: float) -> float:
    """Mean check (pinball) loss at quantile level tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    pred, target = _paired(pred, target)
    e = target - pred
    rho = np.where(e >= 0, tau * e, (tau - 1.0) * e)
    return float(np.sum(rho) / pred.size)


def check_grad(pred, target, tau: float) -> np.ndarray:
    """d(check_loss)/d(pred): -tau/(m*n) where e >= 0, (1-tau)/(m*n) where e < 0."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    pred, target = _paired(pred, target)
    e = target - pred
    return np.where(e >= 0, -tau, 1.0 - tau) / pred.size


def mse(pred, target) -> float:
    """Mean squared error over all m*n entries."""
    pred, target = _paired(pred, target)
    d = pred - target
    return float(np.sum(d * d) / pred.size)


def mse_grad(pred, target) -> np.ndarray:
    pred, target = _paired(pred, target)
    return 2.0 * (pred - target) / pred.size


def loss_value(spec: LossSpec, pred, target) -> float:
    if spec.kind == "mae":
        return mae(pred, target)
    if spec.kind == "mse":
        return mse(pred, target)
    return check_loss(pred, target, spec.tau)


def loss_grad(spec: LossSpec, pred, target) -> np.ndarray:
    if spec.kind == "mae":
        return mae_grad(pred, target)
    if spec.kind == "mse":
        return mse_grad(pred, target)
    return check_grad(pred, target, spec.tau)


def loss_and_grad(spec: LossSpec, pred, target) -> tuple[float, np.ndarray]:
    """Value and gradient from one residual pass (the trainer's hot path).

    Produces exactly the same numbers as calling loss_value and loss_grad
    separately.
    """
    pred, target = _paired(pred, target)
    size = pred.size
    if spec.kind == "mae":
        d = pred - target
        return float(np.sum(np.abs(d)) / size), np.sign(d) / size
    if spec.kind == "mse":
        d = pred - target
        return float(np.sum(d * d) / size), 2.0 * d / size
    tau = spec.tau
    e = target - pred
    nonneg = e >= 0
    rho = np.where(nonneg, tau * e, (tau - 1.0) * e)
    return float(np.sum(rho) / size), np.where(nonneg, -tau, 1.0 - tau) / size
