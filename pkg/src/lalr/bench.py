"""Paired constant-vs-adaptive experiments and report emission.

Every experiment trains both learning-rate policies from bit-identical
initial weights, once per seed, to the full epoch cap; thresholds, epochs-to-
threshold, speedups and loss-after-N statistics are derived from the recorded
curves afterwards. Runs are independent, so they may execute in parallel;
aggregation happens after all runs complete.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import data as datamod
from .baselines import aic_ald, linear_qr_fit, min_loss_threshold, ols_threshold
from .data import Dataset
from .lipschitz import LrPolicy, constant_policy, lalr_policy
from .losses import LossSpec
from .nn import LINEAR, SOFTSIGN, Activation, LayerSpec, NetworkSpec, Network, forward, init_network
from .training import DivergenceError, RunRecord, TrainConfig, train

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentSpec",
    "PairedSeedResult",
    "ComparisonRecord",
    "CoverageRecord",
    "resolve_dataset",
    "paired_run",
    "epochs_to_threshold",
    "coverage",
    "aic_parity",
    "report",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one paired comparison."""

    name: str
    dataset: str  # builtin name, "synthetic:<count>:<seed>", or a csv path
    hidden: tuple[LayerSpec, ...]
    loss: LossSpec
    batch_size: int
    epochs_cap: int
    output_activation: Activation = SOFTSIGN
    threshold_source: str = "ols"  # "ols" | "heuristic" | "value"
    threshold_value: float | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    constant_eta: float = 0.1
    eta_min: float = 1e-4
    eta_max: float = 10.0
    validation_fraction: float = 0.2
    split_seed: int = 0
    subsample_fraction: float = 1.0
    subsample_seed: int = 0
    targets_subset: tuple[int, ...] = ()
    threshold_metric: str = "train"  # which curve epochs-to-threshold reads
    dataset_path_targets: tuple = ()  # target columns when dataset is a csv path

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.epochs_cap < 1:
            raise ValueError("epochs_cap must be >= 1")
        if self.threshold_source not in ("ols", "heuristic", "value"):
            raise ValueError(f"unknown threshold source {self.threshold_source!r}")
        if self.threshold_source == "value" and self.threshold_value is None:
            raise ValueError("threshold_source 'value' requires threshold_value")
        if self.threshold_metric not in ("train", "val"):
            raise ValueError("threshold_metric must be 'train' or 'val'")

    def policies(self) -> dict[str, LrPolicy]:
        return {
            "constant": constant_policy(self.constant_eta),
            "adaptive": lalr_policy(eta_max=self.eta_max, eta_min=self.eta_min),
        }


@dataclass
class PairedSeedResult:
    seed: int
    threshold: float | None
    constant: RunRecord
    adaptive: RunRecord
    epochs_constant: int | None = None
    epochs_adaptive: int | None = None
    speedup: float | None = None
    # final trained networks (None after divergence); kept out of summaries
    constant_net: Network | None = None
    adaptive_net: Network | None = None


@dataclass
class ComparisonRecord:
    spec: ExperimentSpec
    threshold_source: str
    threshold: float | None  # shared threshold; None when per-seed (heuristic)
    per_seed: list[PairedSeedResult] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def runs(self):
        for r in self.per_seed:
            yield "constant", r.seed, r.constant
            yield "adaptive", r.seed, r.adaptive


@dataclass
class CoverageRecord:
    taus: list[float]
    covered: dict[str, list[float]]  # policy -> per-tau coverage on held-out rows

    def __post_init__(self):
        for policy, values in self.covered.items():
            for tau, c in zip(self.taus, values):
                if not 0.0 <= c <= 1.0:
                    raise ValueError(f"coverage {c} for tau={tau} ({policy}) outside [0, 1]")


def resolve_dataset(spec: ExperimentSpec) -> Dataset:
    """Materialize the experiment's dataset (builtin, synthetic, or csv)."""
    name = spec.dataset
    if name.startswith("synthetic"):
        parts = name.split(":")
        count = int(parts[1]) if len(parts) > 1 else 10_000
        seed = int(parts[2]) if len(parts) > 2 else 0
        ds = datamod.gen_heteroscedastic(count, seed)
    elif name in datamod.builtin_names():
        ds = datamod.load_builtin(name)
    else:
        ds = datamod.load_csv(name, list(spec.dataset_path_targets) or [-1], header=True)
    if spec.targets_subset:
        ds = ds.select_targets(list(spec.targets_subset))
    if spec.subsample_fraction < 1.0:
        ds = datamod.subsample(ds, spec.subsample_fraction, spec.subsample_seed)
    return ds


def prepare_splits(spec: ExperimentSpec) -> tuple[Dataset, Dataset | None]:
    """Standardized (train, validation) splits for the experiment."""
    ds = resolve_dataset(spec)
    if spec.validation_fraction > 0.0:
        train_raw, val_raw = datamod.split(ds, 1.0 - spec.validation_fraction, spec.split_seed)
        (train_s, val_s), _ = datamod.standardize(train_raw, [val_raw])
        return train_s, val_s
    (train_s,), _ = datamod.standardize(ds)
    return train_s, None


def network_spec_for(spec: ExperimentSpec, train_set: Dataset) -> NetworkSpec:
    return NetworkSpec(
        input_dim=train_set.n_features,
        hidden=spec.hidden,
        output_dim=train_set.n_targets,
        output_activation=spec.output_activation,
    )


def epochs_to_threshold(record: RunRecord, threshold: float, metric: str = "train") -> int | None:
    """First 1-based epoch whose loss is at or below ``threshold``."""
    if not math.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    losses = record.train_losses() if metric == "train" else record.val_losses()
    hits = np.nonzero(losses <= threshold)[0]
    return int(hits[0]) + 1 if hits.size else None


def _train_one(spec: ExperimentSpec, net0: Network, train_set: Dataset,
               val_set: Dataset | None, policy: LrPolicy,
               seed: int) -> tuple[RunRecord, Network | None]:
    cfg = TrainConfig(
        epochs=spec.epochs_cap,
        batch_size=spec.batch_size,
        loss=spec.loss,
        lr_policy=policy,
        shuffle_seed=seed,
        validation_fraction=spec.validation_fraction,
    )
    try:
        net, record = train(net0, train_set, val_set, cfg)
        return record, net
    except DivergenceError as exc:
        log.warning("seed %d under %s diverged: %s", seed, policy.label(), exc)
        return RunRecord(
            seed=seed, dataset=train_set.name, policy=policy.label(),
            loss=spec.loss.label(), diverged=True,
        ), None


def paired_run(spec: ExperimentSpec, jobs: int = 1) -> ComparisonRecord:
    """Train both policies from identical initial weights for every seed.

    All runs go to the epoch cap; thresholds and epochs-to-threshold are
    derived from the curves afterwards, so the "heuristic" source (the
    constant run's own minimum) needs no second pass. Divergence is recorded
    per seed and does not abort the batch.
    """
    train_set, val_set = prepare_splits(spec)
    net_spec = network_spec_for(spec, train_set)
    policies = spec.policies()

    shared_threshold: float | None = None
    if spec.threshold_source == "ols":
        shared_threshold = ols_threshold(train_set)
    elif spec.threshold_source == "value":
        shared_threshold = float(spec.threshold_value)

    tasks = []
    for seed in spec.seeds:
        net0 = init_network(net_spec, seed)
        for policy_name, policy in policies.items():
            tasks.append((seed, policy_name, net0, policy))

    results: dict[tuple[int, str], tuple[RunRecord, Network | None]] = {}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_train_one, spec, net0, train_set, val_set, policy, seed): (seed, name)
                for seed, name, net0, policy in tasks
            }
            for future, key in futures.items():
                results[key] = future.result()
    else:
        for seed, name, net0, policy in tasks:
            results[(seed, name)] = _train_one(spec, net0, train_set, val_set, policy, seed)

    record = ComparisonRecord(spec=spec, threshold_source=spec.threshold_source,
                              threshold=shared_threshold)
    for seed in spec.seeds:
        const_rec, const_net = results[(seed, "constant")]
        adapt_rec, adapt_net = results[(seed, "adaptive")]
        threshold = shared_threshold
        if spec.threshold_source == "heuristic" and not const_rec.diverged:
            threshold = min_loss_threshold(const_rec)
        entry = PairedSeedResult(seed=seed, threshold=threshold,
                                 constant=const_rec, adaptive=adapt_rec,
                                 constant_net=const_net, adaptive_net=adapt_net)
        if threshold is not None:
            if not const_rec.diverged:
                entry.epochs_constant = epochs_to_threshold(const_rec, threshold,
                                                            spec.threshold_metric)
            if not adapt_rec.diverged:
                entry.epochs_adaptive = epochs_to_threshold(adapt_rec, threshold,
                                                            spec.threshold_metric)
            if entry.epochs_constant is not None and entry.epochs_adaptive is not None:
                entry.speedup = entry.epochs_constant / entry.epochs_adaptive
        record.per_seed.append(entry)

    record.aggregates = _aggregate(record)
    return record


def _mean_std(values: list[float]) -> dict:
    clean = [v for v in values if v is not None and math.isfinite(v)]
    if not clean:
        return {"mean": None, "std": None, "n": 0}
    mean = float(np.mean(clean))
    # sample std over seeds; undefined (absent) with a single seed, never 0
    std = float(np.std(clean, ddof=1)) if len(clean) > 1 else None
    return {"mean": mean, "std": std, "n": len(clean)}


def _median_epochs(values: list[int | None]) -> float | None:
    reached = [v for v in values if v is not None]
    if not reached:
        return None
    return float(np.median(reached))


def _aggregate(record: ComparisonRecord) -> dict:
    per = record.per_seed
    out: dict = {"seeds": [r.seed for r in per]}
    for policy in ("constant", "adaptive"):
        runs = [getattr(r, policy) for r in per]
        out[policy] = {
            "final_train_loss": _mean_std([r.final_train_loss() for r in runs if not r.diverged]),
            "final_val_loss": _mean_std([r.final_val_loss() for r in runs if not r.diverged]),
            "diverged_seeds": [r.seed for r in runs if r.diverged],
            "median_epochs_to_threshold": _median_epochs([
                getattr(p, f"epochs_{policy}") for p in per
            ]),
            "reached_count": sum(getattr(p, f"epochs_{policy}") is not None for p in per),
        }
    speedups = [r.speedup for r in per if r.speedup is not None]
    out["median_speedup"] = float(np.median(speedups)) if speedups else None
    out["thresholds"] = [r.threshold for r in per]
    return out


def coverage(net: Network, dataset: Dataset, tau: float | None = None) -> float:
    """Fraction of rows whose target lies at or below the prediction."""
    if dataset.n_rows == 0:
        raise ValueError("coverage needs a non-empty dataset")
    pred = forward(net, dataset.X).output
    return float(np.mean(dataset.Y <= pred))


def aic_parity(train_set: Dataset, taus, batch_size: int = 64, epochs: int = 1500,
               seed: int = 0, constant_eta: float = 0.1) -> list[dict]:
    """Per-tau comparison of the no-hidden-layer network fit against the
    direct linear quantile fit: mean check losses and ALD-AIC side by side.

    Both fits observe the same standardized training split; parameter count
    k is features + intercept for both routes.
    """
    results = []
    k = train_set.n_features + 1
    for tau in taus:
        loss = LossSpec("check", tau)
        net_spec = NetworkSpec(train_set.n_features, (), train_set.n_targets, LINEAR)
        cfg = TrainConfig(epochs=epochs, batch_size=batch_size, loss=loss,
                          lr_policy=constant_policy(constant_eta), shuffle_seed=seed)
        net, _ = train(init_network(net_spec, seed), train_set, None, cfg)
        nn_pred = forward(net, train_set.X).output
        nn_resid = train_set.Y - nn_pred
        nn_report = aic_ald(nn_resid, tau, k)

        linear = linear_qr_fit(train_set.X, train_set.Y, tau, seed=seed)
        lin_resid = train_set.Y - linear.predict(train_set.X)
        lin_report = aic_ald(lin_resid, tau, k)

        results.append({
            "tau": tau,
            "network": nn_report.as_dict(),
            "linear": lin_report.as_dict(),
            "rel_gap_check_loss": _rel_gap(nn_report.mean_check_loss, lin_report.mean_check_loss),
            "rel_gap_aic": _rel_gap(nn_report.aic, lin_report.aic),
        })
    return results


def _rel_gap(a: float, b: float) -> float | None:
    if not (math.isfinite(a) and math.isfinite(b)):
        return None
    denom = max(abs(a), abs(b))
    return abs(a - b) / denom if denom > 0 else 0.0


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(obj.item())
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def summary_dict(record: ComparisonRecord, extras: dict | None = None) -> dict:
    spec = record.spec
    doc = {
        "experiment": spec.name,
        "dataset": spec.dataset,
        "loss": {"kind": spec.loss.kind, "tau": spec.loss.tau},
        "batch_size": spec.batch_size,
        "epochs_cap": spec.epochs_cap,
        "threshold_source": record.threshold_source,
        "threshold": record.threshold,
        "constant_eta": spec.constant_eta,
        "lalr_bounds": [spec.eta_min, spec.eta_max],
        "per_seed": [
            {
                "seed": r.seed,
                "threshold": r.threshold,
                "epochs_constant": r.epochs_constant,
                "epochs_adaptive": r.epochs_adaptive,
                "speedup": r.speedup,
                "constant": r.constant.terminal_fields(),
                "adaptive": r.adaptive.terminal_fields(),
            }
            for r in record.per_seed
        ],
        "aggregates": record.aggregates,
    }
    if extras:
        doc.update(extras)
    return _jsonable(doc)


def report(records: list[ComparisonRecord], out_dir, formats=("csv", "json"),
           strip_timing: bool = False, extras: dict | None = None) -> list[str]:
    """Write curve CSVs, summary JSONs, and a plot-ready long CSV per experiment.

    Returns the list of paths written. ``extras`` maps experiment name to
    additional summary fields (coverage, AIC tables).
    """
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    index = {
        "experiments": [r.spec.name for r in records],
        "runs": sum(2 * len(r.per_seed) for r in records),
    }
    index_path = os.path.join(out_dir, "report_index.json")
    with open(index_path, "w", encoding="utf-8") as handle:
        json.dump(index, handle, indent=2)
        handle.write("\n")
    written.append(index_path)
    for record in records:
        name = record.spec.name
        if "csv" in formats:
            for policy, seed, run in record.runs():
                if run.diverged:
                    continue
                path = os.path.join(out_dir, f"{name}__{policy}__seed{seed}.csv")
                run.write_curves_csv(path, strip_timing=strip_timing)
                written.append(path)
            long_path = os.path.join(out_dir, f"{name}__curves_long.csv")
            _write_long_csv(record, long_path)
            written.append(long_path)
        if "json" in formats:
            path = os.path.join(out_dir, f"{name}__summary.json")
            doc = summary_dict(record, (extras or {}).get(name))
            with open(path, "w", encoding="utf-8") as handle:
                json.dump(doc, handle, indent=2)
                handle.write("\n")
            written.append(path)
    return written


def _write_long_csv(record: ComparisonRecord, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["experiment", "policy", "seed", "epoch", "metric", "value"])
        for policy, seed, run in record.runs():
            for row in run.rows:
                writer.writerow([record.spec.name, policy, seed, row.epoch, "train_loss",
                                 repr(row.train_loss)])
                if math.isfinite(row.val_loss):
                    writer.writerow([record.spec.name, policy, seed, row.epoch, "val_loss",
                                     repr(row.val_loss)])
                writer.writerow([record.spec.name, policy, seed, row.epoch, "lr", repr(row.lr)])
