"""Command-line interface: train, compare, quantiles, synth, report.

Configuration comes from a JSON document (a file path or the name of a
shipped preset); command-line flags override file values. Unknown keys
anywhere in the document are rejected with their full dotted path so typos
cannot silently change an experiment.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence,
5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources

from . import bench
from . import data as datamod
from .bench import (
    ComparisonRecord,
    CoverageRecord,
    ExperimentSpec,
    aic_parity,
    coverage,
    paired_run,
    report,
)
from .data import DataError
from .lipschitz import LrPolicy
from .losses import LossSpec
from .nn import Activation, LayerSpec, init_network
from .training import DivergenceError, TrainConfig, train

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_IO = 5


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


# Allowed configuration keys; a dict value recurses, LEAF accepts any value,
# lists validate each element against the given element schema.
LEAF = object()
_SCHEMA = {
    "name": LEAF,
    "dataset": {
        "builtin": LEAF,
        "path": LEAF,
        "target_columns": LEAF,
        "header": LEAF,
        "synthetic": {"count": LEAF, "seed": LEAF, "f_kind": LEAF},
    },
    "subsample": {"fraction": LEAF, "seed": LEAF},
    "targets_subset": LEAF,
    "network": {
        "hidden": [{"width": LEAF, "activation": LEAF, "dropout": LEAF, "slope": LEAF}],
        "output_activation": LEAF,
        "output_slope": LEAF,
    },
    "loss": {"kind": LEAF, "tau": LEAF},
    "train": {
        "epochs": LEAF, "batch_size": LEAF, "shuffle_seed": LEAF, "init_seed": LEAF,
        "validation_fraction": LEAF, "split_seed": LEAF, "threshold": LEAF,
        "threshold_loss": LEAF, "kz_subsample": LEAF,
    },
    "policy": {"kind": LEAF, "eta": LEAF, "eta_min": LEAF, "eta_max": LEAF},
    "compare": {
        "seeds": LEAF, "constant_eta": LEAF, "eta_min": LEAF, "eta_max": LEAF,
        "threshold_source": LEAF, "threshold_value": LEAF, "threshold_metric": LEAF,
    },
    "taus": LEAF,
    "aic_epochs": LEAF,
}


def _check_keys(doc, schema, path=""):
    if schema is LEAF:
        return
    if isinstance(schema, list):
        if not isinstance(doc, list):
            raise ConfigError(f"config key {path or '<root>'} must be a list")
        for i, item in enumerate(doc):
            if isinstance(item, dict):
                _check_keys(item, schema[0], f"{path}[{i}]")
        return
    if not isinstance(doc, dict):
        return
    for key, value in doc.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key: {where}")
        _check_keys(value, schema[key], where)


def load_config(ref: str) -> dict:
    """Read a config document from a path or a shipped preset name."""
    if os.path.exists(ref):
        text = open(ref, encoding="utf-8").read()
    else:
        preset = resources.files("lalr") / "presets" / f"{ref}.json"
        if not preset.is_file():
            raise ConfigError(
                f"config {ref!r} is neither a file nor a preset; presets: {preset_names()}"
            )
        text = preset.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {ref}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {ref}: top level must be an object")
    _check_keys(doc, _SCHEMA)
    return doc


def preset_names() -> list[str]:
    base = resources.files("lalr") / "presets"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def _activation(name: str, slope: float = 0.3) -> Activation:
    try:
        return Activation(name, slope)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _hidden_layers(net_cfg: dict) -> tuple[LayerSpec, ...]:
    layers = []
    for item in net_cfg.get("hidden", []):
        if isinstance(item, int):
            item = {"width": item}
        act = _activation(item.get("activation", "relu"), item.get("slope", 0.3))
        try:
            layers.append(LayerSpec(item["width"], act, item.get("dropout", 0.0)))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad hidden layer {item}: {exc}") from exc
    return tuple(layers)


def _loss_spec(cfg: dict) -> LossSpec:
    loss_cfg = cfg.get("loss", {"kind": "mae"})
    try:
        return LossSpec(loss_cfg.get("kind", "mae"), loss_cfg.get("tau"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _dataset_ref(cfg: dict, flag_value: str | None) -> tuple[str, tuple]:
    """Return (dataset string for ExperimentSpec, csv target columns)."""
    if flag_value:
        return flag_value, tuple(cfg.get("dataset", {}).get("target_columns", ()))
    ds = cfg.get("dataset")
    if not ds:
        raise ConfigError("config needs a dataset section (or pass --dataset)")
    if "builtin" in ds:
        return ds["builtin"], ()
    if "synthetic" in ds:
        s = ds["synthetic"]
        ref = f"synthetic:{s.get('count', 10000)}:{s.get('seed', 0)}"
        if "f_kind" in s:
            ref += f":{s['f_kind']}"
        return ref, ()
    if "path" in ds:
        return ds["path"], tuple(ds.get("target_columns", ()))
    raise ConfigError("dataset section needs one of: builtin, path, synthetic")


def experiment_spec(cfg: dict, args, loss: LossSpec | None = None,
                    name_suffix: str = "") -> ExperimentSpec:
    train_cfg = cfg.get("train", {})
    comp = cfg.get("compare", {})
    dataset, path_targets = _dataset_ref(cfg, getattr(args, "dataset", None))
    seeds = comp.get("seeds", [0, 1, 2, 3, 4])
    if getattr(args, "seeds", None):
        seeds = list(range(args.seeds))
    source = comp.get("threshold_source", "ols")
    value = comp.get("threshold_value")
    flag_source = getattr(args, "threshold_source", None)
    if flag_source:
        if flag_source.startswith("value:"):
            source, value = "value", float(flag_source.split(":", 1)[1])
        else:
            source = flag_source
    sub = cfg.get("subsample", {})
    try:
        return ExperimentSpec(
            name=(cfg.get("name") or os.path.splitext(os.path.basename(str(dataset)))[0])
                 + name_suffix,
            dataset=dataset,
            hidden=_hidden_layers(cfg.get("network", {})),
            loss=loss or _loss_spec(cfg),
            batch_size=train_cfg.get("batch_size", 64),
            epochs_cap=train_cfg.get("epochs", 1000),
            output_activation=_activation(
                cfg.get("network", {}).get("output_activation", "linear"),
                cfg.get("network", {}).get("output_slope", 0.3),
            ),
            threshold_source=source,
            threshold_value=value,
            seeds=tuple(seeds),
            constant_eta=comp.get("constant_eta", 0.1),
            eta_min=comp.get("eta_min", 1e-4),
            eta_max=comp.get("eta_max", 10.0),
            validation_fraction=train_cfg.get("validation_fraction", 0.2),
            split_seed=train_cfg.get("split_seed", 0),
            subsample_fraction=sub.get("fraction", 1.0),
            subsample_seed=sub.get("seed", 0),
            targets_subset=tuple(cfg.get("targets_subset", ())),
            threshold_metric=comp.get("threshold_metric", "train"),
            dataset_path_targets=path_targets,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    spec = experiment_spec(cfg, args)
    train_cfg = cfg.get("train", {})
    policy_cfg = cfg.get("policy", {"kind": "lalr"})
    try:
        policy = LrPolicy(
            policy_cfg.get("kind", "lalr"),
            eta=policy_cfg.get("eta", 0.1),
            eta_min=policy_cfg.get("eta_min", 1e-4),
            eta_max=policy_cfg.get("eta_max", 10.0),
        )
        tconfig = TrainConfig(
            epochs=spec.epochs_cap,
            batch_size=spec.batch_size,
            loss=spec.loss,
            lr_policy=policy,
            shuffle_seed=train_cfg.get("shuffle_seed", 0),
            threshold=train_cfg.get("threshold"),
            threshold_loss=train_cfg.get("threshold_loss", "batch_mean"),
            validation_fraction=spec.validation_fraction,
            kz_subsample=train_cfg.get("kz_subsample"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    train_set, val_set = bench.prepare_splits(spec)
    net0 = init_network(bench.network_spec_for(spec, train_set),
                        train_cfg.get("init_seed", 0))
    _, record = train(net0, train_set, val_set, tconfig)

    os.makedirs(args.out, exist_ok=True)
    curves = os.path.join(args.out, f"{spec.name}__{policy.kind}.csv")
    record.write_curves_csv(curves, strip_timing=args.strip_timing)
    record.write_json(os.path.join(args.out, f"{spec.name}__{policy.kind}.json"))
    print(f"trained {spec.name}: {record.epochs_run} epochs, "
          f"final train loss {record.final_train_loss():.6g}")
    print(f"wrote {curves}")
    return EXIT_OK


def _print_speedups(record: ComparisonRecord) -> None:
    agg = record.aggregates
    print(f"experiment: {record.spec.name}  dataset: {record.spec.dataset}  "
          f"loss: {record.spec.loss.label()}")
    print("seed  threshold  epochs(const)  epochs(adapt)  speedup")
    for r in record.per_seed:
        thr = f"{r.threshold:.4g}" if r.threshold is not None else "-"
        e_c = r.epochs_constant if r.epochs_constant is not None else "-"
        e_a = r.epochs_adaptive if r.epochs_adaptive is not None else "-"
        sp = f"{r.speedup:.2f}x" if r.speedup is not None else "-"
        print(f"{r.seed:>4}  {thr:>9}  {e_c!s:>13}  {e_a!s:>13}  {sp:>7}")
    med = agg.get("median_speedup")
    print(f"median speedup: {med:.2f}x" if med is not None else "median speedup: undefined")


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    spec = experiment_spec(cfg, args)
    record = paired_run(spec, jobs=args.jobs)
    report([record], args.out, strip_timing=args.strip_timing)
    _print_speedups(record)
    print(f"wrote reports to {args.out}")
    return EXIT_OK


def cmd_quantiles(args) -> int:
    cfg = load_config(args.config)
    try:
        taus = [float(t) for t in args.taus.split(",") if t.strip()] if args.taus \
            else [float(t) for t in cfg.get("taus", [])]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad tau list: {exc}") from exc
    if not taus:
        raise ConfigError("quantiles needs a non-empty tau list (--taus or config 'taus')")
    for tau in taus:
        if not 0.0 < tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {tau}")

    records, extras = [], {}
    covered_by_policy = {"constant": [], "adaptive": []}
    for tau in taus:
        spec = experiment_spec(cfg, args, loss=LossSpec("check", tau),
                               name_suffix=f"__tau{tau:g}")
        record = paired_run(spec, jobs=args.jobs)
        train_set, val_set = bench.prepare_splits(spec)
        holdout = val_set if val_set is not None else train_set
        covered = {}
        for policy in ("constant", "adaptive"):
            net = getattr(record.per_seed[0], f"{policy}_net")
            covered[policy] = coverage(net, holdout, tau) if net is not None else None
            covered_by_policy[policy].append(covered[policy])
        extras[spec.name] = {"coverage": covered, "tau": tau}
        records.append(record)
        _print_speedups(record)
    cover_record = CoverageRecord(
        taus=taus,
        covered={p: v for p, v in covered_by_policy.items() if None not in v},
    )
    cover_table = [
        {"tau": tau, **{p: covered_by_policy[p][i] for p in covered_by_policy}}
        for i, tau in enumerate(taus)
    ]

    aic_table = None
    if args.aic:
        spec0 = experiment_spec(cfg, args)
        train_set, _ = bench.prepare_splits(spec0)
        aic_table = aic_parity(train_set, taus, batch_size=spec0.batch_size,
                               epochs=cfg.get("aic_epochs", 1500), seed=spec0.seeds[0])
    report(records, args.out, strip_timing=args.strip_timing, extras=extras)
    combined = {
        "taus": cover_record.taus,
        "coverage": cover_table,
        "aic_parity": aic_table,
    }
    path = os.path.join(args.out, "quantiles__summary.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(bench._jsonable(combined), handle, indent=2)
        handle.write("\n")
    print("tau  coverage(const)  coverage(adapt)")
    for row in cover_table:
        c = row.get("constant")
        a = row.get("adaptive")
        print(f"{row['tau']:<4g}  {c if c is None else format(c, '.4f'):>15}  "
              f"{a if a is None else format(a, '.4f'):>15}")
    print(f"wrote reports to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.count < 1:
        raise ConfigError(f"count must be >= 1, got {args.count}")
    ds = datamod.gen_heteroscedastic(args.count, args.seed, args.f_kind)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    datamod.save_csv(ds, args.out)
    manifest = {
        "name": ds.name,
        "provenance": ds.provenance,
        "rows": ds.n_rows,
        "features": ds.n_features,
        "targets": ds.n_targets,
        "target_columns": list(ds.y_names),
    }
    with open(args.out + ".manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")
    print(f"wrote {ds.n_rows} rows to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    names = sorted(
        f for f in os.listdir(args.out)
        if f.endswith("__summary.json") and f != "quantiles__summary.json"
    )
    if not names:
        print(f"no summaries found under {args.out}")
        return EXIT_OK
    print("experiment  policy  median_epochs  final_train_loss(mean)")
    for fname in names:
        with open(os.path.join(args.out, fname), encoding="utf-8") as handle:
            doc = json.load(handle)
        agg = doc.get("aggregates", {})
        for policy in ("constant", "adaptive"):
            entry = agg.get(policy, {})
            med = entry.get("median_epochs_to_threshold")
            mean = (entry.get("final_train_loss") or {}).get("mean")
            print(f"{doc['experiment']}  {policy}  "
                  f"{med if med is not None else '-'}  "
                  f"{mean if mean is None else format(mean, '.6g')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lalr",
        description="Adaptive-learning-rate regression experiments "
                    "(constant vs. Lipschitz-reciprocal schedules).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True,
                           help="config JSON path or preset name "
                                f"(presets: {', '.join(preset_names()) or 'none shipped'})")
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--strip-timing", action="store_true",
                       help="zero wall-time columns for byte-stable outputs")

    p_train = sub.add_parser("train", help="one training run",
                             formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p_train)
    p_train.add_argument("--dataset", default=None,
                         help="override dataset: builtin name, csv path, or synthetic:count:seed")
    p_train.set_defaults(func=cmd_train)

    p_cmp = sub.add_parser("compare", help="paired constant-vs-adaptive comparison",
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p_cmp)
    p_cmp.add_argument("--dataset", default=None, help="override dataset reference")
    p_cmp.add_argument("--seeds", type=int, default=None,
                       help="use seeds 0..N-1 instead of the config list")
    p_cmp.add_argument("--threshold-source", default=None,
                       choices=None, metavar="{ols,heuristic,value:<x>}",
                       help="override threshold source")
    p_cmp.add_argument("--jobs", type=int, default=1, help="concurrent training runs")
    p_cmp.set_defaults(func=cmd_compare)

    p_q = sub.add_parser("quantiles", help="per-tau paired runs + coverage + AIC",
                         formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p_q)
    p_q.add_argument("--dataset", default=None, help="override dataset reference")
    p_q.add_argument("--taus", default=None, help="comma-separated tau list, e.g. 0.05,0.95")
    p_q.add_argument("--seeds", type=int, default=None,
                     help="use seeds 0..N-1 instead of the config list")
    p_q.add_argument("--threshold-source", default=None,
                     metavar="{ols,heuristic,value:<x>}", help="override threshold source")
    p_q.add_argument("--jobs", type=int, default=1, help="concurrent training runs")
    p_q.add_argument("--aic", action=argparse.BooleanOptionalAction, default=True,
                     help="include the zero-hidden-vs-linear AIC parity table")
    p_q.set_defaults(func=cmd_quantiles)

    p_s = sub.add_parser("synth", help="write the synthetic heteroscedastic dataset",
                         formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p_s.add_argument("--count", type=int, required=True, help="number of rows")
    p_s.add_argument("--seed", type=int, default=0, help="generator seed")
    p_s.add_argument("--f-kind", default="sine_ramp", help="mean function")
    p_s.add_argument("--out", required=True, help="output CSV path")
    p_s.set_defaults(func=cmd_synth)

    p_r = sub.add_parser("report", help="summarize existing run outputs",
                         formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p_r.add_argument("--out", default="runs", help="directory holding run outputs")
    p_r.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
