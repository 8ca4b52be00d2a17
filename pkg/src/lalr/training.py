"""Deterministic mini-batch gradient descent with per-epoch learning rates.

One training run is strictly sequential: at each epoch the adaptive policy
recomputes its learning rate from the current network state, then the epoch's
shuffled batches are consumed in order. Everything that touches randomness
(shuffling, dropout) is keyed on (shuffle_seed, epoch, batch), so a run is
bit-reproducible from its configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .lipschitz import LipschitzInputs, LrPolicy, learning_rate, lipschitz_constant, penultimate_max
from .losses import LossSpec, loss_and_grad, loss_value
from .nn import Network, apply_update, backward, forward

__all__ = [
    "DivergenceError",
    "TrainConfig",
    "EpochRow",
    "RunRecord",
    "batches",
    "train",
    "evaluate",
    "CURVE_COLUMNS",
]

CURVE_COLUMNS = ("epoch", "train_loss", "val_loss", "lr", "kz", "clamped", "ms")


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, eta: float, where: str = "train"):
        super().__init__(
            f"non-finite {where} loss at epoch {epoch} (learning rate {eta:g}); "
            "training aborted"
        )
        self.epoch = epoch
        self.eta = eta


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    loss: LossSpec
    lr_policy: LrPolicy
    shuffle_seed: int = 0
    threshold: float | None = None
    threshold_loss: str = "batch_mean"  # or "full": recheck on the whole training set
    validation_fraction: float = 0.2
    # rows used for the per-epoch activation scan; None = full training set.
    # Subsampling approximates the bound; keep it >= ~1e4 rows on large sets.
    kz_subsample: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.shuffle_seed < 0:
            raise ValueError("shuffle_seed must be a non-negative integer")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.kz_subsample is not None and self.kz_subsample < 1:
            raise ValueError("kz_subsample must be None or >= 1")
        if self.threshold_loss not in ("batch_mean", "full"):
            raise ValueError(f"threshold_loss must be 'batch_mean' or 'full', got {self.threshold_loss!r}")

    def describe(self) -> dict:
        policy = self.lr_policy
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "loss": {"kind": self.loss.kind, "tau": self.loss.tau},
            "policy": {
                "kind": policy.kind,
                "eta": policy.eta,
                "eta_min": policy.eta_min,
                "eta_max": policy.eta_max,
            },
            "shuffle_seed": self.shuffle_seed,
            "threshold": self.threshold,
            "threshold_loss": self.threshold_loss,
            "validation_fraction": self.validation_fraction,
            "kz_subsample": self.kz_subsample,
        }


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    kz: float
    clamped: bool
    ms: float


@dataclass
class RunRecord:
    """Per-epoch curves plus terminal facts about one training run."""

    rows: list[EpochRow] = field(default_factory=list)
    epochs_run: int = 0
    reached_threshold: int | None = None
    final_digest: str = ""
    config_hash: str = ""
    seed: int = 0
    dataset: str = ""
    policy: str = ""
    loss: str = ""
    diverged: bool = False

    def train_losses(self) -> np.ndarray:
        return np.asarray([r.train_loss for r in self.rows])

    def val_losses(self) -> np.ndarray:
        return np.asarray([r.val_loss for r in self.rows])

    def learning_rates(self) -> np.ndarray:
        return np.asarray([r.lr for r in self.rows])

    def final_train_loss(self) -> float:
        return self.rows[-1].train_loss if self.rows else math.nan

    def final_val_loss(self) -> float:
        return self.rows[-1].val_loss if self.rows else math.nan

    def write_curves_csv(self, path, strip_timing: bool = False) -> None:
        """Line-oriented per-epoch CSV. ``strip_timing`` zeroes the wall-time
        column so golden files stay byte-stable."""
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(CURVE_COLUMNS)
            for r in self.rows:
                writer.writerow([
                    r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.lr),
                    repr(r.kz), int(r.clamped), 0 if strip_timing else round(r.ms, 3),
                ])

    @staticmethod
    def read_curves_csv(path) -> list[EpochRow]:
        rows = []
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if tuple(header) != CURVE_COLUMNS:
                raise ValueError(f"{path}: unexpected curve columns {header}")
            for rec in reader:
                rows.append(EpochRow(
                    epoch=int(rec[0]), train_loss=float(rec[1]), val_loss=float(rec[2]),
                    lr=float(rec[3]), kz=float(rec[4]), clamped=bool(int(rec[5])),
                    ms=float(rec[6]),
                ))
        return rows

    def terminal_fields(self) -> dict:
        return {
            "seed": self.seed,
            "dataset": self.dataset,
            "policy": self.policy,
            "loss": self.loss,
            "epochs_run": self.epochs_run,
            "reached_threshold": self.reached_threshold,
            "final_digest": self.final_digest,
            "config_hash": self.config_hash,
            "diverged": self.diverged,
            "final_train_loss": self.final_train_loss(),
            "final_val_loss": self.final_val_loss(),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.terminal_fields(), handle, indent=2, allow_nan=True)
            handle.write("\n")


def config_digest(cfg: TrainConfig, net: Network, dataset_name: str) -> str:
    doc = {
        "config": cfg.describe(),
        "dataset": dataset_name,
        "network": {
            "input_dim": net.spec.input_dim,
            "hidden": [
                {"width": h.width, "activation": h.activation.kind,
                 "slope": h.activation.slope, "dropout": h.dropout}
                for h in net.spec.hidden
            ],
            "output_dim": net.spec.output_dim,
            "output_activation": net.spec.output_activation.kind,
        },
    }
    blob = json.dumps(doc, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def batches(dataset: Dataset, batch_size: int, shuffle_seed: int, epoch: int) -> list[np.ndarray]:
    """Row-index batches for one epoch: a deterministic permutation keyed on
    (shuffle_seed, epoch), chunked with a possibly ragged final batch."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng([shuffle_seed, epoch]).permutation(dataset.n_rows)
    return [order[i:i + batch_size] for i in range(0, dataset.n_rows, batch_size)]


def _dropout_seed(shuffle_seed: int, epoch: int, batch_index: int) -> int:
    state = np.random.SeedSequence([shuffle_seed, epoch, batch_index]).generate_state(1)
    return int(state[0])


def evaluate(net: Network, data: Dataset, loss: LossSpec) -> float:
    """Loss over the whole set in one eval-mode pass (dropout off)."""
    trace = forward(net, data.X, mode="eval")
    return loss_value(loss, trace.output, data.Y)


def _uses_dropout(net: Network) -> bool:
    return any(h.dropout > 0.0 for h in net.spec.hidden)


def train(net: Network, train_set: Dataset, val_set: Dataset | None,
          cfg: TrainConfig) -> tuple[Network, RunRecord]:
    """Run mini-batch gradient descent and log one row per epoch.

    The adaptive policy recomputes K_z and eta at the start of every epoch
    from the full training matrix; constant policies skip that pass and log
    kz as NaN. Raises DivergenceError on any non-finite loss. With a
    threshold configured, training stops at the first epoch whose training
    loss falls to it.
    """
    if train_set.n_features != net.spec.input_dim:
        raise ValueError(
            f"dataset has {train_set.n_features} features but network expects {net.spec.input_dim}"
        )
    if train_set.n_targets != net.spec.output_dim:
        raise ValueError(
            f"dataset has {train_set.n_targets} targets but network outputs {net.spec.output_dim}"
        )
    if cfg.batch_size > train_set.n_rows:
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds training-set size {train_set.n_rows}"
        )
    policy = cfg.lr_policy
    n_out = net.spec.output_dim
    has_dropout = _uses_dropout(net)
    record = RunRecord(
        seed=cfg.shuffle_seed,
        dataset=train_set.name,
        policy=policy.label(),
        loss=cfg.loss.label(),
        config_hash=config_digest(cfg, net, train_set.name),
    )

    for epoch in range(1, cfg.epochs + 1):
        tick = time.perf_counter()
        if policy.kind == "lalr":
            kz = penultimate_max(net, train_set.X, subsample=cfg.kz_subsample,
                                 seed=cfg.shuffle_seed)
            lipschitz = lipschitz_constant(
                LipschitzInputs(kz, cfg.batch_size, n_out, cfg.loss)
            )
            eta, clamped = learning_rate(policy, lipschitz)
        else:
            kz, (eta, clamped) = math.nan, (policy.eta, False)

        batch_losses = []
        for b_index, rows in enumerate(batches(train_set, cfg.batch_size, cfg.shuffle_seed, epoch)):
            Xb, Yb = train_set.X[rows], train_set.Y[rows]
            seed = _dropout_seed(cfg.shuffle_seed, epoch, b_index) if has_dropout else 0
            trace = forward(net, Xb, mode="train", seed=seed)
            batch_loss, out_grad = loss_and_grad(cfg.loss, trace.output, Yb)
            if not math.isfinite(batch_loss):
                raise DivergenceError(epoch, eta)
            grads = backward(net, trace, out_grad)
            net = apply_update(net, grads, eta)
            batch_losses.append(batch_loss)
        train_loss = float(np.mean(batch_losses))

        val_loss = evaluate(net, val_set, cfg.loss) if val_set is not None else math.nan
        if val_set is not None and not math.isfinite(val_loss):
            raise DivergenceError(epoch, eta, where="validation")

        record.rows.append(EpochRow(
            epoch=epoch, train_loss=train_loss, val_loss=val_loss,
            lr=eta, kz=kz, clamped=clamped,
            ms=(time.perf_counter() - tick) * 1e3,
        ))

        if cfg.threshold is not None:
            metric = train_loss if cfg.threshold_loss == "batch_mean" \
                else evaluate(net, train_set, cfg.loss)
            if metric <= cfg.threshold:
                record.reached_threshold = epoch
                break

    record.epochs_run = len(record.rows)
    record.final_digest = net.digest()
    return net, record
