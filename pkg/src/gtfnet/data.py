"""Telemetry ingestion, windowing, normalization, and synthetic corpora.

The interchange format is CSV with fixed headers (metrics, call edges,
labels, scores). :func:`build_windows` aligns per-instance metric series on
the union timeline, imputes gaps by previous-value carry-forward (leading
gaps by the per-node mean), and slices fixed-length windows with a stride.
:func:`synth_generate` produces labeled corpora with four injectable anomaly
types; generation is a pure function of its config, and writing the corpus
out and ingesting it back reproduces the tensors exactly.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ContractError, IngestError
from .graph import ServiceGraphSnapshot, build_snapshot
from .numerics import Matrix
from .temporal import MetricWindow

__all__ = [
    "EdgeRecord",
    "METRICS",
    "MetricRecord",
    "Normalizer",
    "SynthConfig",
    "WindowedDataset",
    "apply_normalizer",
    "build_windows",
    "fit_normalizer",
    "ingest_edges",
    "ingest_metrics",
    "read_labels_csv",
    "read_scores_csv",
    "synth_generate",
    "window_count",
    "write_edges_csv",
    "write_labels_csv",
    "write_metrics_csv",
    "write_scores_csv",
]

METRICS = ("cpu", "mem", "disk_io", "net")

_METRIC_HEADER = ("timestamp", "instance_id") + METRICS
_EDGE_HEADER = ("timestamp", "caller", "callee")
_LABEL_HEADER = ("window_index", "instance_id", "label")
_SCORE_HEADER = ("window_index", "instance_id", "score")


@dataclass(frozen=True)
class MetricRecord:
    """One minute-level sample of the four per-instance metrics."""

    timestamp: float
    instance_id: str
    cpu: float
    mem: float
    disk_io: float
    net: float

    def __post_init__(self):
        if not self.instance_id:
            raise ContractError("instance_id must be a non-empty string")
        values = (self.timestamp, self.cpu, self.mem, self.disk_io, self.net)
        if not all(math.isfinite(v) for v in values):
            raise ContractError(f"non-finite value in metric record: {values}")
        if self.timestamp < 0:
            raise ContractError(f"timestamp must be >= 0, got {self.timestamp}")
        for name in ("cpu", "mem"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {v}")
        for name in ("disk_io", "net"):
            v = getattr(self, name)
            if v < 0.0:
                raise ContractError(f"{name} must be >= 0, got {v}")

    def metric_row(self) -> tuple[float, float, float, float]:
        return (self.cpu, self.mem, self.disk_io, self.net)


@dataclass(frozen=True)
class EdgeRecord:
    """One observed service invocation (caller -> callee) at a timestamp.

    Self-calls are legal here; they are dropped when snapshots are built.
    """

    timestamp: float
    caller: str
    callee: str

    def __post_init__(self):
        if not self.caller or not self.callee:
            raise ContractError("caller and callee must be non-empty strings")
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise ContractError(f"timestamp must be finite and >= 0, got {self.timestamp}")


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            yield line_no, row


def _header_indexes(path, header, expected, columns):
    """Resolve column positions; exact header unless a rename map is given."""
    if columns is None:
        if tuple(header) != expected:
            raise IngestError(
                f"{path}:1: expected header {','.join(expected)}, got {','.join(header)}"
            )
        return {name: i for i, name in enumerate(expected)}
    indexes = {}
    for name in expected:
        actual = columns.get(name, name)
        if actual not in header:
            raise IngestError(f"{path}:1: column {actual!r} (for {name}) not in header")
        indexes[name] = header.index(actual)
    return indexes


def ingest_metrics(path, columns=None, scales=None) -> list[MetricRecord]:
    """Parse a metrics CSV into validated records sorted by (instance, time).

    `columns` optionally maps canonical names to the file's column names (the
    escape hatch for foreign schemas; extra columns are then ignored), and
    `scales` multiplies named metrics by a unit factor before validation.
    """
    scales = dict(scales or {})
    for key in scales:
        if key not in METRICS:
            raise ConfigError(f"unknown metric {key!r} in scales")
    records = []
    idx = None
    for line_no, row in _read_rows(path):
        if line_no == 1:
            idx = _header_indexes(path, row, _METRIC_HEADER, columns)
            continue
        try:
            values = {}
            for name in METRICS:
                v = float(row[idx[name]])
                values[name] = v * scales.get(name, 1.0)
            records.append(
                MetricRecord(
                    timestamp=float(row[idx["timestamp"]]),
                    instance_id=row[idx["instance_id"]],
                    **values,
                )
            )
        except (ContractError, ValueError, IndexError) as exc:
            raise IngestError(f"{path}:{line_no}: {exc}") from exc
    if idx is None:
        raise IngestError(f"{path}:1: missing header")
    records.sort(key=lambda r: (r.instance_id, r.timestamp))
    return records


def ingest_edges(path) -> list[EdgeRecord]:
    """Parse a call-edge CSV (`timestamp,caller,callee`)."""
    records = []
    idx = None
    for line_no, row in _read_rows(path):
        if line_no == 1:
            idx = _header_indexes(path, row, _EDGE_HEADER, None)
            continue
        if len(row) != 3:
            raise IngestError(f"{path}:{line_no}: expected 3 columns, got {len(row)}")
        try:
            records.append(
                EdgeRecord(float(row[idx["timestamp"]]), row[idx["caller"]], row[idx["callee"]])
            )
        except (ContractError, ValueError) as exc:
            raise IngestError(f"{path}:{line_no}: {exc}") from exc
    if idx is None:
        raise IngestError(f"{path}:1: missing header")
    return records


def window_count(n_samples: int, T: int, stride: int) -> int:
    """Number of length-T windows at the given stride over n_samples."""
    if n_samples < T:
        raise ContractError(f"need at least T={T} aligned samples, got N={n_samples}")
    return (n_samples - T) // stride + 1


@dataclass(frozen=True)
class Normalizer:
    """Per-node per-metric z-score statistics fitted on a training prefix."""

    nodes: tuple[str, ...]
    mean: np.ndarray  # (n, 4)
    std: np.ndarray  # (n, 4), population std floored at 1e-6
    train_windows: int

    def __post_init__(self):
        n = len(self.nodes)
        if self.mean.shape != (n, len(METRICS)) or self.std.shape != (n, len(METRICS)):
            raise ContractError("normalizer stats must be (nodes, metrics) shaped")
        if np.any(self.std <= 0.0):
            raise ContractError("normalizer std must be positive (floor applied at fit)")


class WindowedDataset:
    """Aligned per-node metric series sliced into graph + window entries.

    Immutable. `series` is (nodes, samples, metrics) in the fixed metric
    order; window w covers samples [w*stride, w*stride + T). Each window
    carries a graph snapshot built from the call edges observed inside the
    window's time span. `labels`, when present, marks each (window, node)
    pair 0 or 1.
    """

    def __init__(
        self,
        nodes: Sequence[str],
        timeline: np.ndarray,
        series: np.ndarray,
        T: int,
        stride: int,
        snapshots: Sequence[ServiceGraphSnapshot],
        edge_records: Sequence[EdgeRecord] = (),
        labels: np.ndarray | None = None,
        imputed: Mapping[str, int] | None = None,
        normalizer: Normalizer | None = None,
        normalized: bool = False,
    ):
        self._nodes = tuple(nodes)
        n = len(self._nodes)
        if n == 0:
            raise ContractError("dataset needs at least one node")
        if len(set(self._nodes)) != n:
            raise ContractError("duplicate node ids in dataset universe")
        timeline = np.asarray(timeline, dtype=np.float64)
        series = np.array(series, dtype=np.float64)
        if timeline.ndim != 1 or np.any(np.diff(timeline) <= 0):
            raise ContractError("timeline must be 1-D strictly increasing")
        N = timeline.shape[0]
        if series.shape != (n, N, len(METRICS)):
            raise ContractError(
                f"series must be shaped (nodes={n}, samples={N}, metrics={len(METRICS)}), "
                f"got {series.shape}"
            )
        if not np.all(np.isfinite(series)):
            raise ContractError("series contains non-finite values")
        self._windows = window_count(N, T, stride)  # also validates N >= T
        if len(snapshots) != self._windows:
            raise ContractError(
                f"expected {self._windows} snapshots, got {len(snapshots)}"
            )
        for snap in snapshots:
            if snap.node_ids != self._nodes:
                raise ContractError("every snapshot must cover the full node universe")
        if labels is not None:
            labels = np.array(labels, dtype=np.int8)
            if labels.shape != (self._windows, n):
                raise ContractError(
                    f"labels must be shaped (windows={self._windows}, nodes={n})"
                )
            if not np.isin(labels, (0, 1)).all():
                raise ContractError("labels must be 0 or 1")
            labels.flags.writeable = False
        timeline.flags.writeable = False
        series.flags.writeable = False
        self._timeline = timeline
        self._series = series
        self._T = int(T)
        self._stride = int(stride)
        self._snapshots = tuple(snapshots)
        self._edge_records = tuple(edge_records)
        self._labels = labels
        self._imputed = dict(imputed or {})
        self._normalizer = normalizer
        self._normalized = bool(normalized)
        self._window_cache: dict[int, tuple[MetricWindow, ...]] = {}

    nodes = property(lambda self: self._nodes)
    timeline = property(lambda self: self._timeline)
    series = property(lambda self: self._series)
    T = property(lambda self: self._T)
    stride = property(lambda self: self._stride)
    snapshots = property(lambda self: self._snapshots)
    edge_records = property(lambda self: self._edge_records)
    labels = property(lambda self: self._labels)
    imputed = property(lambda self: dict(self._imputed))
    normalizer = property(lambda self: self._normalizer)
    normalized = property(lambda self: self._normalized)

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    @property
    def n_windows(self) -> int:
        return self._windows

    def metric_windows(self, w: int) -> tuple[MetricWindow, ...]:
        """The per-node windows for window index w, ordered by node index."""
        if not 0 <= w < self._windows:
            raise ContractError(f"window index {w} out of range [0, {self._windows})")
        cached = self._window_cache.get(w)
        if cached is None:
            lo = w * self._stride
            block = self._series[:, lo : lo + self._T, :]
            cached = tuple(
                MetricWindow(i, Matrix(block[i])) for i in range(self.n_nodes)
            )
            self._window_cache[w] = cached
        return cached

    def entry(self, w: int) -> tuple[ServiceGraphSnapshot, tuple[MetricWindow, ...]]:
        return self._snapshots[w], self.metric_windows(w)

    def entries(self) -> list[tuple[ServiceGraphSnapshot, tuple[MetricWindow, ...]]]:
        return [self.entry(w) for w in range(self._windows)]

    def label_pairs(self) -> list[tuple[int, str, int]]:
        if self._labels is None:
            raise ContractError("dataset has no labels")
        return [
            (w, node, int(self._labels[w, i]))
            for w in range(self._windows)
            for i, node in enumerate(self._nodes)
        ]

    def replace_series(self, series, normalizer=None, normalized=False) -> "WindowedDataset":
        return WindowedDataset(
            self._nodes,
            self._timeline,
            series,
            self._T,
            self._stride,
            self._snapshots,
            edge_records=self._edge_records,
            labels=self._labels,
            imputed=self._imputed,
            normalizer=normalizer,
            normalized=normalized,
        )

    def with_labels(self, labels) -> "WindowedDataset":
        return WindowedDataset(
            self._nodes,
            self._timeline,
            self._series,
            self._T,
            self._stride,
            self._snapshots,
            edge_records=self._edge_records,
            labels=labels,
            imputed=self._imputed,
            normalizer=self._normalizer,
            normalized=self._normalized,
        )


def _carry_forward(raw: np.ndarray, present: np.ndarray) -> np.ndarray:
    """Fill gaps with the previous present row; leading gaps with column means."""
    N = raw.shape[0]
    last = np.where(present, np.arange(N), -1)
    np.maximum.accumulate(last, out=last)
    leading = last < 0
    out = raw[np.where(leading, 0, last)]
    if leading.any():
        out[leading] = raw[present].mean(axis=0)
    return out


def build_windows(
    metrics: Sequence[MetricRecord],
    edges: Sequence[EdgeRecord],
    T: int,
    stride: int,
) -> WindowedDataset:
    """Align records on the union timeline and slice windows.

    Window w covers aligned samples [w*stride, w*stride + T); its snapshot
    holds the deduplicated call edges whose timestamps fall inside the
    window's sampled time span (endpoints inclusive). Imputation counts per
    node are recorded in the dataset stats. When the same (instance,
    timestamp) appears twice the later record wins.
    """
    if T < 1 or stride < 1:
        raise ContractError(f"T and stride must be >= 1, got T={T}, stride={stride}")
    nodes = sorted({r.instance_id for r in metrics})
    timeline = np.array(sorted({r.timestamp for r in metrics}), dtype=np.float64)
    N = timeline.shape[0]
    n_windows = window_count(N, T, stride)  # raises when N < T, naming both
    slot = {ts: k for k, ts in enumerate(timeline)}

    series = np.empty((len(nodes), N, len(METRICS)))
    imputed = {}
    node_index = {node: i for i, node in enumerate(nodes)}
    raw = np.full((len(nodes), N, len(METRICS)), np.nan)
    for r in metrics:
        raw[node_index[r.instance_id], slot[r.timestamp]] = r.metric_row()
    for i, node in enumerate(nodes):
        present = ~np.isnan(raw[i, :, 0])
        series[i] = _carry_forward(raw[i], present)
        gaps = int(N - present.sum())
        if gaps:
            imputed[node] = gaps

    edge_ts = np.array([e.timestamp for e in edges], dtype=np.float64)
    order = np.argsort(edge_ts, kind="stable")
    edge_ts = edge_ts[order]
    sorted_edges = [edges[int(k)] for k in order]
    snapshots = []
    for w in range(n_windows):
        lo = w * stride
        t0, t1 = timeline[lo], timeline[lo + T - 1]
        a = int(np.searchsorted(edge_ts, t0, side="left"))
        b = int(np.searchsorted(edge_ts, t1, side="right"))
        pairs = sorted({(e.caller, e.callee) for e in sorted_edges[a:b]})
        snapshots.append(build_snapshot(pairs, nodes, window_index=w))

    return WindowedDataset(
        nodes, timeline, series, T, stride, snapshots,
        edge_records=sorted_edges, imputed=imputed,
    )


def fit_normalizer(dataset: WindowedDataset, train_fraction: float) -> Normalizer:
    """Fit per-node per-metric z-score stats on the leading window prefix.

    The training split is the first floor(train_fraction * windows) windows
    (at least one); stats cover exactly the samples those windows span.
    Population standard deviation, floored at 1e-6.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ContractError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    n_train = max(1, math.floor(train_fraction * dataset.n_windows))
    sample_end = (n_train - 1) * dataset.stride + dataset.T
    block = dataset.series[:, :sample_end, :]
    return Normalizer(
        nodes=dataset.nodes,
        mean=block.mean(axis=1),
        std=np.maximum(block.std(axis=1), 1e-6),
        train_windows=n_train,
    )


def apply_normalizer(dataset: WindowedDataset, normalizer: Normalizer) -> WindowedDataset:
    """Return a z-scored copy of the dataset. Not idempotent, hence the guard."""
    if dataset.normalized:
        raise ContractError("dataset is already normalized")
    if normalizer.nodes != dataset.nodes:
        raise ContractError("normalizer was fitted on a different node universe")
    series = (dataset.series - normalizer.mean[:, None, :]) / normalizer.std[:, None, :]
    return dataset.replace_series(series, normalizer=normalizer, normalized=True)


# --- synthetic corpus ------------------------------------------------------

_ANOMALY_KINDS = ("spike", "drift", "propagation", "edge_perturbation")

# per-metric daily sinusoid base/amplitude and AR(1) noise scale
_BASES = np.array([0.45, 0.55, 30.0, 50.0])
_AMPS = np.array([0.15, 0.10, 10.0, 18.0])
_SIGMAS = np.array([0.012, 0.008, 0.8, 1.5])
_AR_RHO = 0.8
_CADENCE = 60.0  # seconds between samples
_NET = METRICS.index("net")


def _parse_topology(spec: str):
    if spec in ("chain", "star"):
        return spec, None
    m = re.fullmatch(r"erdos\(([^)]+)\)", spec)
    if m:
        try:
            p = float(m.group(1))
        except ValueError:
            p = -1.0
        if 0.0 < p <= 1.0:
            return "erdos", p
    raise ConfigError(
        f"topology must be 'chain', 'star', or 'erdos(p)' with p in (0,1], got {spec!r}"
    )


@dataclass(frozen=True)
class SynthConfig:
    """Shape of a synthetic corpus; generation is deterministic per seed."""

    nodes: int = 8
    topology: str = "erdos(0.3)"
    T: int = 16
    windows: int = 60
    contamination: float = 0.1
    mix: Mapping[str, float] = field(
        default_factory=lambda: {
            "spike": 0.4, "drift": 0.2, "propagation": 0.3, "edge_perturbation": 0.1,
        }
    )
    seed: int = 0

    def __post_init__(self):
        if self.nodes < 1 or self.T < 1 or self.windows < 1:
            raise ConfigError("nodes, T, and windows must all be >= 1")
        if not 0.0 <= self.contamination <= 0.5:
            raise ConfigError(f"contamination must lie in [0, 0.5], got {self.contamination}")
        _parse_topology(self.topology)
        mix = dict(self.mix)
        unknown = set(mix) - set(_ANOMALY_KINDS)
        if unknown:
            raise ConfigError(f"unknown anomaly kinds in mix: {sorted(unknown)}")
        if any(v < 0 for v in mix.values()) or abs(sum(mix.values()) - 1.0) > 1e-9:
            raise ConfigError("mix weights must be nonnegative and sum to 1")
        object.__setattr__(self, "mix", mix)

    def mix_vector(self) -> np.ndarray:
        return np.array([self.mix.get(k, 0.0) for k in _ANOMALY_KINDS])


def _base_pairs(kind, p, ids, rng) -> list[tuple[str, str]]:
    n = len(ids)
    if kind == "chain":
        return [(ids[i], ids[i + 1]) for i in range(n - 1)]
    if kind == "star":
        return [(ids[0], ids[i]) for i in range(1, n)]
    return [
        (ids[i], ids[j])
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < p
    ]


def _neighbor_map(pairs, ids):
    index = {node: i for i, node in enumerate(ids)}
    adj = {i: set() for i in range(len(ids))}
    for a, b in pairs:
        ia, ib = index[a], index[b]
        if ia != ib:
            adj[ia].add(ib)
            adj[ib].add(ia)
    return adj


def _spike(series, node, metric, w, T, start, scale=1.0):
    lo = w * T + start
    hi = min(w * T + T, lo + 3)
    series[node, lo:hi, metric] += 3.0 * _AMPS[metric] * scale


def synth_generate(config: SynthConfig) -> WindowedDataset:
    """Generate a labeled corpus: daily sinusoid + AR(1) noise + anomalies.

    Random draws happen in a fixed order (topology, phases, noise, then
    anomaly placement), so the clean baseline is identical across
    contamination settings for the same seed. Anomaly kinds:

    - spike: one node/metric gets a 3x-amplitude burst for 3 samples;
    - drift: a linear ramp climbing to twice the node-metric baseline std;
    - propagation: a net-traffic spike at a seed node replayed at graph
      neighbors, attenuated x0.6 and delayed +2 samples per hop (2 hops);
    - edge_perturbation: ~20% of edges removed/added for the window, with
      net traffic raised on every affected endpoint.
    """
    rng = np.random.default_rng(config.seed)
    n, T, W = config.nodes, config.T, config.windows
    ids = [f"svc-{i:03d}" for i in range(n)]
    kind, p = _parse_topology(config.topology)
    base_pairs = _base_pairs(kind, p, ids, rng)

    N = W * T
    timeline = np.arange(N, dtype=np.float64) * _CADENCE
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n, len(METRICS)))
    noise = rng.normal(0.0, 1.0, size=(n, N, len(METRICS))) * _SIGMAS
    ar = np.empty_like(noise)
    ar[:, 0, :] = noise[:, 0, :]
    for k in range(1, N):
        ar[:, k, :] = _AR_RHO * ar[:, k - 1, :] + noise[:, k, :]
    day_angle = 2.0 * np.pi * timeline / 86400.0
    series = _BASES + _AMPS * np.sin(day_angle[None, :, None] + phases[:, None, :]) + ar
    base_std = series.std(axis=1)  # realized per-node per-metric, pre-injection

    labels = np.zeros((W, n), dtype=np.int8)
    window_pairs = {w: base_pairs for w in range(W)}
    adj = _neighbor_map(base_pairs, ids)
    k_anom = round(config.contamination * W)
    anomalous = np.sort(rng.choice(W, size=k_anom, replace=False)) if k_anom else []
    for w in anomalous:
        w = int(w)
        kind_w = str(rng.choice(_ANOMALY_KINDS, p=config.mix_vector()))
        if kind_w == "spike":
            node = int(rng.integers(n))
            metric = int(rng.integers(len(METRICS)))
            start = int(rng.integers(0, max(T - 3, 0) + 1))
            _spike(series, node, metric, w, T, start)
            labels[w, node] = 1
        elif kind_w == "drift":
            node = int(rng.integers(n))
            metric = int(rng.integers(len(METRICS)))
            ramp = np.linspace(0.0, 2.0 * base_std[node, metric], T)
            series[node, w * T : (w + 1) * T, metric] += ramp
            labels[w, node] = 1
        elif kind_w == "propagation":
            seed_node = int(rng.integers(n))
            start = int(rng.integers(0, max(T - 7, 0) + 1))
            frontier, seen = {seed_node}, {seed_node}
            _spike(series, seed_node, _NET, w, T, start)
            labels[w, seed_node] = 1
            for hop in (1, 2):
                frontier = {
                    nb for node in frontier for nb in adj[node] if nb not in seen
                }
                for node in sorted(frontier):
                    pos = start + 2 * hop
                    if pos < T:
                        _spike(series, node, _NET, w, T, pos, scale=0.6**hop)
                    labels[w, node] = 1
                seen |= frontier
        else:  # edge_perturbation
            present = list(window_pairs[w])
            all_pairs = {(ids[i], ids[j]) for i in range(n) for j in range(i + 1, n)}
            absent = sorted(all_pairs - set(present))
            m = max(1, round(0.2 * len(present))) if present else 1
            n_remove = min(math.ceil(m / 2), len(present))
            n_add = min(m - n_remove, len(absent))
            removed = [
                present[int(k)]
                for k in rng.choice(len(present), size=n_remove, replace=False)
            ] if n_remove else []
            added = [
                absent[int(k)]
                for k in rng.choice(len(absent), size=n_add, replace=False)
            ] if n_add else []
            window_pairs[w] = sorted((set(present) - set(removed)) | set(added))
            touched = {node for pair in removed + added for node in pair}
            index = {node: i for i, node in enumerate(ids)}
            for node in sorted(touched):
                i = index[node]
                series[i, w * T : (w + 1) * T, _NET] += 3.0 * _AMPS[_NET]
                labels[w, i] = 1

    np.clip(series[:, :, 0], 0.0, 1.0, out=series[:, :, 0])
    np.clip(series[:, :, 1], 0.0, 1.0, out=series[:, :, 1])
    np.clip(series[:, :, 2], 0.0, None, out=series[:, :, 2])
    np.clip(series[:, :, 3], 0.0, None, out=series[:, :, 3])

    snapshots = [
        build_snapshot(window_pairs[w], ids, window_index=w) for w in range(W)
    ]
    edge_records = [
        EdgeRecord(float(timeline[w * T]), a, b)
        for w in range(W)
        for a, b in window_pairs[w]
    ]
    return WindowedDataset(
        ids, timeline, series, T, stride=T, snapshots=snapshots,
        edge_records=edge_records, labels=labels,
    )


# --- CSV writers and readers ----------------------------------------------

def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fmt(x: float) -> str:
    # repr of a float round-trips exactly through float()
    return repr(float(x))


def write_metrics_csv(dataset: WindowedDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = _writer(fh)
        out.writerow(_METRIC_HEADER)
        for i, node in enumerate(dataset.nodes):
            for k, ts in enumerate(dataset.timeline):
                row = dataset.series[i, k]
                out.writerow([_fmt(ts), node] + [_fmt(v) for v in row])


def write_edges_csv(dataset: WindowedDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = _writer(fh)
        out.writerow(_EDGE_HEADER)
        for e in dataset.edge_records:
            out.writerow([_fmt(e.timestamp), e.caller, e.callee])


def write_labels_csv(dataset: WindowedDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = _writer(fh)
        out.writerow(_LABEL_HEADER)
        for w, node, label in dataset.label_pairs():
            out.writerow([w, node, label])


def read_labels_csv(path) -> dict[tuple[int, str], int]:
    """Load labels keyed by (window_index, instance_id)."""
    labels = {}
    idx = None
    for line_no, row in _read_rows(path):
        if line_no == 1:
            idx = _header_indexes(path, row, _LABEL_HEADER, None)
            continue
        try:
            w = int(row[idx["window_index"]])
            label = int(row[idx["label"]])
            if label not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {label}")
            labels[(w, row[idx["instance_id"]])] = label
        except (ValueError, IndexError) as exc:
            raise IngestError(f"{path}:{line_no}: {exc}") from exc
    if idx is None:
        raise IngestError(f"{path}:1: missing header")
    return labels


def write_scores_csv(rows: Iterable[tuple[int, str, float]], path) -> None:
    """Write (window_index, instance_id, score) rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = _writer(fh)
        out.writerow(_SCORE_HEADER)
        for w, node, score in rows:
            out.writerow([w, node, _fmt(score)])


def read_scores_csv(path) -> dict[tuple[int, str], float]:
    scores = {}
    idx = None
    for line_no, row in _read_rows(path):
        if line_no == 1:
            idx = _header_indexes(path, row, _SCORE_HEADER, None)
            continue
        try:
            w = int(row[idx["window_index"]])
            scores[(w, row[idx["instance_id"]])] = float(row[idx["score"]])
        except (ValueError, IndexError) as exc:
            raise IngestError(f"{path}:{line_no}: {exc}") from exc
    if idx is None:
        raise IngestError(f"{path}:1: missing header")
    return scores
