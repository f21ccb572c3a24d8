"""Command-line pipeline: synth -> train -> score -> eval, plus the depth sweep.

One TOML config file (sections data/model/train/eval, every key defaulted)
drives all verbs; `--set section.key=value` overrides individual keys.
Machine-readable results go to stdout as JSON Lines, progress and tables to
stderr. Exit codes: 0 success, 1 usage or config error, 2 data error,
3 numeric failure. `GTF_THREADS` caps the scoring worker pool.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .data import (
    METRICS,
    SynthConfig,
    WindowedDataset,
    apply_normalizer,
    build_windows,
    fit_normalizer,
    ingest_edges,
    ingest_metrics,
    read_labels_csv,
    read_scores_csv,
    synth_generate,
    write_edges_csv,
    write_labels_csv,
    write_metrics_csv,
    write_scores_csv,
)
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    JoinError,
    MetricUndefinedError,
    NumericError,
    ShapeError,
)
from .eval import depth_sweep, evaluate, score_dataset
from .model import GtfModel, ModelDims, init_params, score_window
from .training import TrainConfig, load_model, save_model, train

__all__ = ["DEFAULTS", "load_config", "main"]

DEFAULTS = {
    "data": {
        "source": "synth",  # "synth" or "csv"
        "metrics_csv": "",
        "edges_csv": "",
        "T": 16,
        "stride": 0,  # 0 means stride = T (non-overlapping windows)
        "train_fraction": 1.0,
        "columns": {},  # canonical -> actual column name for foreign CSVs
        "scales": {},  # metric -> unit scale factor
        "nodes": 8,
        "topology": "erdos(0.3)",
        "windows": 60,
        "contamination": 0.1,
        "mix": {"spike": 0.4, "drift": 0.2, "propagation": 0.3, "edge_perturbation": 0.1},
        "seed": 0,
    },
    "model": {
        "gcn": [8, 32],
        "d_model": 16,
        "heads": 2,
        "d_ff": 32,
        "depth": 2,
        "d_e": 16,
        "d_h": 64,
        "d_out": 32,
        "pool": "last",
    },
    "train": {
        "epochs": 50,
        "learning_rate": 1e-3,
        "weight_decay": 1e-4,
        "batch": 100,
        "seed": 0,
        "beta1": 0.9,
        "beta2": 0.999,
        "adam_eps": 1e-8,
    },
    "eval": {
        "labels": "",
        "depths": [1, 2, 3, 4, 5],
    },
}

# tables whose keys are data, not config structure; replaced wholesale
_FREE_TABLES = {("data", "mix"), ("data", "columns"), ("data", "scales")}


def _merge(dst: dict, src: dict, path: tuple = ()) -> None:
    for key, value in src.items():
        full = path + (key,)
        dotted = ".".join(full)
        if key not in dst:
            raise ConfigError(f"unknown config key {dotted!r}")
        if full in _FREE_TABLES:
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted} must be a table, got {type(value).__name__}")
            dst[key] = dict(value)
        elif isinstance(dst[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted} must be a table, got {type(value).__name__}")
            _merge(dst[key], value, full)
        else:
            if isinstance(dst[key], bool) != isinstance(value, bool) or (
                isinstance(dst[key], str) != isinstance(value, str)
            ):
                raise ConfigError(
                    f"{dotted} expects {type(dst[key]).__name__}, got {type(value).__name__}"
                )
            dst[key] = value


def _parse_set(spec: str) -> dict:
    key, sep, raw = spec.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects section.key=value, got {spec!r}")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw  # bare strings need no quoting on the command line
    out: dict = {}
    node = out
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out


def load_config(path: str | None, sets: list[str] = ()) -> dict:
    """Defaults, overlaid with the TOML file, overlaid with --set pairs."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, "rb") as fh:
                loaded = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        _merge(cfg, loaded)
    for spec in sets:
        _merge(cfg, _parse_set(spec))
    return cfg


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _workers() -> int:
    raw = os.environ.get("GTF_THREADS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"GTF_THREADS must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError(f"GTF_THREADS must be >= 1, got {workers}")
    return workers


def _dims(cfg: dict) -> ModelDims:
    m = cfg["model"]
    try:
        return ModelDims(
            d=len(METRICS),
            gcn=tuple(m["gcn"]),
            d_model=m["d_model"],
            heads=m["heads"],
            d_ff=m["d_ff"],
            depth=m["depth"],
            d_e=m["d_e"],
            d_h=m["d_h"],
            d_out=m["d_out"],
            pool=m["pool"],
        )
    except (ContractError, TypeError) as exc:
        raise ConfigError(f"invalid model section: {exc}") from exc


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"])


def _synth_config(cfg: dict) -> SynthConfig:
    d = cfg["data"]
    return SynthConfig(
        nodes=d["nodes"],
        topology=d["topology"],
        T=d["T"],
        windows=d["windows"],
        contamination=d["contamination"],
        mix=d["mix"],
        seed=d["seed"],
    )


def _attach_labels(dataset: WindowedDataset, path: str) -> WindowedDataset:
    mapping = read_labels_csv(path)
    wanted = {
        (w, node) for w in range(dataset.n_windows) for node in dataset.nodes
    }
    unmatched = sorted(wanted ^ set(mapping), key=str)
    if unmatched:
        shown = ", ".join(repr(k) for k in unmatched[:5])
        raise JoinError(
            f"{len(unmatched)} unmatched (window, instance) keys between labels "
            f"and dataset; first offenders: {shown}"
        )
    labels = np.zeros((dataset.n_windows, dataset.n_nodes), dtype=np.int8)
    for i, node in enumerate(dataset.nodes):
        for w in range(dataset.n_windows):
            labels[w, i] = mapping[(w, node)]
    return dataset.with_labels(labels)


def _load_dataset(cfg: dict, need_labels: bool = False) -> WindowedDataset:
    d = cfg["data"]
    if d["source"] == "synth":
        return synth_generate(_synth_config(cfg))
    if d["source"] == "csv":
        if not d["metrics_csv"]:
            raise ConfigError("data.metrics_csv is required when data.source = 'csv'")
        metrics = ingest_metrics(
            d["metrics_csv"], columns=d["columns"] or None, scales=d["scales"] or None
        )
        edges = ingest_edges(d["edges_csv"]) if d["edges_csv"] else []
        stride = d["stride"] or d["T"]
        ds = build_windows(metrics, edges, d["T"], stride)
        if need_labels:
            if not cfg["eval"]["labels"]:
                raise ConfigError("eval.labels is required to evaluate a CSV corpus")
            ds = _attach_labels(ds, cfg["eval"]["labels"])
        return ds
    raise ConfigError(f"data.source must be 'synth' or 'csv', got {d['source']!r}")


def _normalized(cfg: dict, dataset: WindowedDataset) -> WindowedDataset:
    norm = fit_normalizer(dataset, cfg["data"]["train_fraction"])
    return apply_normalizer(dataset, norm)


def _score_all(model: GtfModel, dataset: WindowedDataset) -> np.ndarray:
    workers = _workers()
    if workers == 1:
        return score_dataset(model, dataset)

    def one(w: int) -> list[float]:
        snapshot, windows = dataset.entry(w)
        return [sn.score for sn in score_window(snapshot, windows, model)]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(one, range(dataset.n_windows)))
    return np.array(rows)


def cmd_synth(cfg: dict, out_dir: str) -> int:
    dataset = synth_generate(_synth_config(cfg))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(dataset, out / "metrics.csv")
    write_edges_csv(dataset, out / "edges.csv")
    write_labels_csv(dataset, out / "labels.csv")
    summary = {
        "nodes": dataset.n_nodes,
        "windows": dataset.n_windows,
        "contamination": cfg["data"]["contamination"],
        "anomalous_windows": int(dataset.labels.max(axis=1).sum()),
        "out_dir": str(out),
    }
    _note(
        f"wrote corpus to {out}: {summary['nodes']} nodes, "
        f"{summary['windows']} windows, contamination {summary['contamination']}"
    )
    _emit(summary)
    return 0


def cmd_train(cfg: dict, out_path: str) -> int:
    dataset = _normalized(cfg, _load_dataset(cfg))
    model = init_params(_dims(cfg), cfg["train"]["seed"])
    report = train(model, dataset.entries(), _train_config(cfg))
    save_model(model, out_path)
    for i, (loss, secs) in enumerate(zip(report.epoch_losses, report.epoch_seconds)):
        _note(f"epoch {i + 1}/{len(report.epoch_losses)}  loss {loss:.6f}  {secs:.2f}s")
        _emit({"epoch": i + 1, "loss": loss})
    _emit(
        {
            "checkpoint": str(out_path),
            "epochs": len(report.epoch_losses),
            "final_loss": report.epoch_losses[-1],
            "final_gamma": report.final_gamma,
        }
    )
    _note(f"saved checkpoint to {out_path} (gamma={report.final_gamma:.4f})")
    return 0


def cmd_score(cfg: dict, checkpoint: str, out_path: str) -> int:
    model = load_model(checkpoint)
    if model.dims.d != len(METRICS):
        raise ContractError(
            f"checkpoint dims {model.dims} expect d={model.dims.d} metrics; "
            f"data provides d={len(METRICS)} ({', '.join(METRICS)})"
        )
    dataset = _normalized(cfg, _load_dataset(cfg))
    scores = _score_all(model, dataset)
    rows = [
        (w, node, float(scores[w, i]))
        for w in range(dataset.n_windows)
        for i, node in enumerate(dataset.nodes)
    ]
    write_scores_csv(rows, out_path)
    _note(f"scored {dataset.n_windows} windows x {dataset.n_nodes} nodes -> {out_path}")
    _emit({"rows": len(rows), "windows": dataset.n_windows, "nodes": dataset.n_nodes,
           "out": str(out_path)})
    return 0


def cmd_eval(scores_path: str, labels_path: str) -> int:
    scores = read_scores_csv(scores_path)
    labels = read_labels_csv(labels_path)
    unmatched = sorted(set(scores) ^ set(labels), key=str)
    if unmatched:
        shown = ", ".join(repr(k) for k in unmatched[:5])
        raise JoinError(
            f"{len(unmatched)} unmatched (window, instance) keys between scores "
            f"and labels; first offenders: {shown}"
        )
    keys = sorted(scores)
    report = evaluate([scores[k] for k in keys], [labels[k] for k in keys])
    _note(
        f"AUC {report.auc:.4f}  KS {report.ks:.4f}  best-F1 {report.f1:.4f} "
        f"@ threshold {report.threshold:.6g}  (P={report.positives}, N={report.negatives})"
    )
    _emit(report.as_dict())
    return 0


def cmd_sweep(cfg: dict, depths: list[int]) -> int:
    if not depths:
        raise ConfigError("sweep needs at least one depth")
    dataset = _normalized(cfg, _load_dataset(cfg, need_labels=True))
    rows = depth_sweep(dataset, depths, _dims(cfg), _train_config(cfg))
    _note("depth    auc     ks      f1")
    for depth, report in rows:
        _note(f"{depth:>5}  {report.auc:.4f}  {report.ks:.4f}  {report.f1:.4f}")
        _emit({"depth": depth, **report.as_dict()})
    return 0


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for data errors
    def error(self, message):
        raise ConfigError(message)


def _config_help() -> str:
    lines = ["config keys and defaults (TOML sections; override with --set):"]
    for section, table in DEFAULTS.items():
        for key, value in table.items():
            lines.append(f"  {section}.{key} = {value!r}")
    return "\n".join(lines)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="gtfnet",
        description="Topology + time-series anomaly detection over service telemetry.",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument(
            "--set",
            dest="sets",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one config key (TOML value syntax)",
        )

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--out-dir", default="corpus", help="directory for the CSV files")

    p = sub.add_parser("train", help="train a model and write a checkpoint",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--out", default="model.gtf", help="checkpoint path")

    p = sub.add_parser("score", help="score every (window, node) pair",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint path")
    p.add_argument("--out", default="scores.csv", help="scores CSV path")

    p = sub.add_parser("eval", help="compute AUC/KS/best-F1 from scores + labels",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--scores", required=True, help="scores CSV path")
    p.add_argument("--labels", help="labels CSV path (default: eval.labels)")

    p = sub.add_parser("sweep", help="train/evaluate across encoder depths",
                       epilog=_config_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--depths", type=int, nargs="+", help="depths (default: eval.depths)")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config, args.sets)
        if args.verb == "synth":
            return cmd_synth(cfg, args.out_dir)
        if args.verb == "train":
            return cmd_train(cfg, args.out)
        if args.verb == "score":
            return cmd_score(cfg, args.checkpoint, args.out)
        if args.verb == "eval":
            labels = args.labels or cfg["eval"]["labels"]
            if not labels:
                raise ConfigError("eval needs --labels or the eval.labels config key")
            return cmd_eval(args.scores, labels)
        if args.verb == "sweep":
            depths = args.depths if args.depths is not None else cfg["eval"]["depths"]
            return cmd_sweep(cfg, [int(x) for x in depths])
        raise ConfigError(f"unknown verb {args.verb!r}")
    except ConfigError as exc:
        _note(f"error: {exc}")
        return 1
    except (DataError, ShapeError, ContractError, MetricUndefinedError) as exc:
        _note(f"data error: {exc}")
        return 2
    except OSError as exc:
        _note(f"io error: {exc}")
        return 2
    except NumericError as exc:
        _note(f"numeric failure: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
