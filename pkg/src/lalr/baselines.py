"""Linear reference fits and information-criterion scoring.

OLS supplies the convergence thresholds for the benchmark experiments; the
linear quantile fitter provides an independent reference for the network's
quantile fits; AIC is computed under the asymmetric-Laplace likelihood whose
negative log density is the check loss, with the scale profiled out at its
maximum-likelihood value (the mean check loss of the residuals).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .lipschitz import LipschitzInputs, lalr_policy, learning_rate, lipschitz_constant, penultimate_max
from .losses import LossSpec, check_grad, check_loss, mae
from .nn import LINEAR, NetworkSpec, backward, forward, init_network, apply_update
from .training import RunRecord

log = logging.getLogger(__name__)

__all__ = [
    "LinearModel",
    "AicReport",
    "ols_fit",
    "ols_threshold",
    "min_loss_threshold",
    "linear_qr_fit",
    "aic_ald",
]

RIDGE_JITTER = 1e-8


@dataclass(frozen=True)
class LinearModel:
    """Affine model y ~ intercept + X w. ``weights`` stacks the intercept
    row first, one column per target."""

    weights: np.ndarray  # (d+1, n_targets)
    fit_kind: str
    grad_norm: float = 0.0
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("linear model weights must be finite")

    @property
    def intercept(self) -> np.ndarray:
        return self.weights[0]

    @property
    def coef(self) -> np.ndarray:
        return self.weights[1:]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return X @ self.weights[1:] + self.weights[0]


def _as_targets(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return y[:, None] if y.ndim == 1 else y


def ols_fit(X, y) -> LinearModel:
    """Least squares via normal equations with a small ridge jitter.

    The jitter (1e-8 on the gram diagonal) rescues near-singular systems;
    anything still singular after that is an error.
    """
    X = np.asarray(X, dtype=np.float64)
    y = _as_targets(y)
    m, d = X.shape
    if m < d + 1:
        raise ValueError(f"need at least {d + 1} rows to fit {d} features plus intercept, got {m}")
    A = np.hstack([np.ones((m, 1)), X])
    gram = A.T @ A + RIDGE_JITTER * np.eye(d + 1)
    try:
        w = np.linalg.solve(gram, A.T @ y)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"normal equations are singular beyond jitter rescue: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise ValueError("normal equations produced non-finite weights (rank deficient)")
    return LinearModel(weights=w, fit_kind="ols")


def ols_threshold(dataset) -> float:
    """Convergence target for a dataset: the training-split MAE of its OLS fit."""
    model = ols_fit(dataset.X, dataset.Y)
    return mae(model.predict(dataset.X), dataset.Y)


def min_loss_threshold(record: RunRecord) -> float:
    """Alternate convergence target: best training loss a reference run hit."""
    if not record.rows:
        raise ValueError("cannot take the minimum loss of an empty run record")
    return float(min(r.train_loss for r in record.rows))


def linear_qr_fit(X, y, tau: float, max_iter: int = 100_000, grad_tol: float = 1e-7,
                  seed: int = 0) -> LinearModel:
    """Linear quantile regression by full-batch subgradient descent.

    Runs the no-hidden-layer network path. The base step is the adaptive
    learning rate (reciprocal Lipschitz constant of the check loss over the
    full batch, clamped as usual); because a constant step makes the
    subgradient iteration cycle instead of settling, the step at iteration t
    is base/sqrt(t) (the standard diminishing schedule) and the best-loss
    iterate seen is the one returned. Piecewise-linear objectives rarely
    drive the subgradient norm to ``grad_tol``, so the final gradient norm
    and a converged flag are recorded on the model rather than raised.
    """
    X = np.asarray(X, dtype=np.float64)
    y = _as_targets(y)
    if y.shape[1] != 1:
        raise ValueError("linear quantile regression fits one target at a time")
    m, d = X.shape
    spec = NetworkSpec(input_dim=d, hidden=(), output_dim=1, output_activation=LINEAR)
    net = init_network(spec, seed)

    policy = lalr_policy()
    kz = penultimate_max(net, X)
    lipschitz = lipschitz_constant(LipschitzInputs(kz, m, 1, LossSpec("check", tau)))
    eta_base, _ = learning_rate(policy, lipschitz)

    best_loss = math.inf
    best = (net.weights[0].copy(), net.biases[0].copy())
    grad_norm = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        trace = forward(net, X)
        loss = check_loss(trace.output, y, tau)
        if loss < best_loss:
            best_loss = loss
            best = (net.weights[0].copy(), net.biases[0].copy())
        grads = backward(net, trace, check_grad(trace.output, y, tau))
        grad_norm = grads.norm()
        if grad_norm <= grad_tol:
            converged = True
            break
        net = apply_update(net, grads, eta_base / math.sqrt(it))
    if not converged:
        log.info(
            "quantile fit (tau=%g) stopped at %d iterations with gradient norm %.3e; "
            "returning best-loss iterate", tau, it, grad_norm,
        )
    w, b = best
    return LinearModel(
        weights=np.vstack([b[None, :], w]),
        fit_kind=f"quantile_subgradient(tau={tau:g})",
        grad_norm=float(grad_norm),
        converged=converged,
        iterations=it,
    )


@dataclass(frozen=True)
class AicReport:
    aic: float
    tau: float
    k: int
    n_obs: int
    mean_check_loss: float

    def __post_init__(self):
        if not self.n_obs >= self.k >= 1:
            raise ValueError(f"need n_obs >= k >= 1, got n_obs={self.n_obs}, k={self.k}")

    def as_dict(self) -> dict:
        return {
            "aic": None if math.isinf(self.aic) else self.aic,
            "tau": self.tau,
            "k": self.k,
            "n_obs": self.n_obs,
            "mean_check_loss": self.mean_check_loss,
        }


def aic_ald(residuals, tau: float, k: int) -> AicReport:
    """AIC under the asymmetric-Laplace likelihood with profiled scale.

    The scale MLE is the mean check loss of the residuals, so
    logL = n log(tau(1-tau)) - n log(sigma_hat) - n and AIC = -2 logL + 2k.
    A perfect fit (sigma_hat = 0) has unbounded likelihood; the report
    carries aic = -inf as the documented sentinel for that degenerate case.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    e = np.asarray(residuals, dtype=np.float64).ravel()
    if e.size == 0:
        raise ValueError("residuals must be non-empty")
    n = e.size
    sigma_hat = float(np.mean(np.where(e >= 0, tau * e, (tau - 1.0) * e)))
    if sigma_hat == 0.0:
        return AicReport(aic=-math.inf, tau=tau, k=k, n_obs=n, mean_check_loss=0.0)
    log_lik = n * math.log(tau * (1.0 - tau)) - n * math.log(sigma_hat) - n
    return AicReport(aic=-2.0 * log_lik + 2 * k, tau=tau, k=k, n_obs=n,
                     mean_check_loss=sigma_hat)
