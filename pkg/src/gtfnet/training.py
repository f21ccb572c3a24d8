"""One-class training loop, center initialization, and model checkpointing.

The objective is L = mean_i s_i + lambda * sum ||W||^2 over weight matrices,
minimized with Adam. Scores are squared deviations from a frozen center, so
minimizing the mean pulls normal windows' projections toward the center;
anomalous windows, being rare and unlike the bulk, stay farther out. Batch
order comes from a seeded shuffle and gradient accumulation is serial, making
the trained model a pure function of (seed, dataset, config).
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nm
from .errors import CheckpointError, ConfigError, ContractError, NumericError
from .graph import ServiceGraphSnapshot
from .model import GtfModel, ModelDims, _param_plan
from .numerics import Matrix, ParamStore, Tape, backward
from .temporal import MetricWindow

__all__ = [
    "TrainConfig",
    "TrainReport",
    "init_center",
    "load_model",
    "save_model",
    "train",
]

_MAGIC = b"GTF1"
_VERSION = "gtf-v1"
_POOL_CODES = {"last": 0, "mean": 1}
_POOL_NAMES = {v: k for k, v in _POOL_CODES.items()}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch: int = 8
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0.0:
            # zero is allowed: it is the standard no-op diagnostic configuration
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0.0:
            raise ConfigError(f"adam_eps must be > 0, got {self.adam_eps}")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    final_gamma: float = 0.5


WindowBatch = tuple[ServiceGraphSnapshot, Sequence[MetricWindow]]


def init_center(model: GtfModel, training_windows: Sequence[WindowBatch]) -> np.ndarray:
    """Freeze the one-class center at the mean initial MLP output.

    Coordinates with |c_j| < 0.1 are snapped to sign(c_j) * 0.1 (+0.1 at
    exactly zero) so the center cannot sit on the collapse point at the
    origin of the bias-free output layer.
    """
    if not training_windows:
        raise ContractError("cannot initialize center from an empty training set")
    # the scorer binding needs some center; outputs do not depend on it
    bound = model.bound(tape=None, center=Matrix.zeros(1, model.dims.d_out))
    total = np.zeros(model.dims.d_out)
    count = 0
    for snapshot, windows in training_windows:
        y = bound.window_outputs(snapshot, windows).data
        total += y.sum(axis=0)
        count += y.shape[0]
    c = total / count
    snapped = np.where(np.abs(c) < 0.1, np.where(c < 0.0, -0.1, 0.1), c)
    model.set_center(snapped[None, :])
    return model.center


class _Adam:
    def __init__(self, params, names, cfg: TrainConfig):
        self.names = tuple(names)
        self.m = {n: np.zeros_like(params.value(n)) for n in self.names}
        self.v = {n: np.zeros_like(params.value(n)) for n in self.names}
        self.t = 0
        self.cfg = cfg

    def step(self, params) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name in self.names:
            g = params.grad(name)
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
            params.value(name)[...] -= cfg.learning_rate * update


def train(
    model: GtfModel,
    dataset: Sequence[WindowBatch],
    config: TrainConfig,
) -> TrainReport:
    """Minimize mean score plus weight decay over the windows of `dataset`.

    The dataset is a sequence of (snapshot, metric windows per node) pairs and
    is assumed predominantly normal; contamination is tolerated, not modeled.
    Initializes the center first when the model has none. Raises NumericError
    naming the epoch and step if the loss ever leaves the finite range.
    """
    entries = list(dataset)
    if not entries:
        raise ContractError("training dataset is empty")
    if model.center is None:
        init_center(model, entries)

    decayed = model.decayed_names()
    lam = config.weight_decay
    opt = _Adam(model.params, model.params.names(), config)
    rng = np.random.default_rng(config.seed)
    report = TrainReport()

    n_win = len(entries)
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(n_win)
        epoch_loss = 0.0
        for step_idx, start in enumerate(range(0, n_win, config.batch)):
            batch = [entries[i] for i in order[start : start + config.batch]]
            tape = Tape()
            bound = model.bound(tape=tape)
            contribs = []
            n_nodes = 0
            for snapshot, windows in batch:
                sq = bound.window_deviations(snapshot, windows)
                contribs.append(nm.sum_all(sq))
                n_nodes += snapshot.n_nodes
            total = contribs[0]
            for extra in contribs[1:]:
                total = nm.add(total, extra)
            mean_score = nm.affine(total, 1.0 / n_nodes)

            penalty = 0.0
            if lam > 0.0:
                penalty = lam * sum(
                    float(np.sum(model.params.value(n) ** 2)) for n in decayed
                )
            loss_value = mean_score.item() + penalty
            if not np.isfinite(loss_value):
                raise NumericError(
                    f"non-finite loss {loss_value} at epoch {epoch} step {step_idx}"
                )

            model.params.zero_grads()
            backward(tape, mean_score, model.params)
            if lam > 0.0:
                for name in decayed:
                    model.params.grad(name)[...] += 2.0 * lam * model.params.value(name)
            opt.step(model.params)
            epoch_loss += loss_value * len(batch)
        report.epoch_losses.append(epoch_loss / n_win)
        report.epoch_seconds.append(time.perf_counter() - started)
    report.final_gamma = model.gamma
    return report


def _dims_to_words(dims: ModelDims) -> list[int]:
    return [
        dims.d,
        len(dims.gcn),
        *dims.gcn,
        dims.d_model,
        dims.heads,
        dims.d_ff,
        dims.depth,
        dims.d_e,
        dims.d_h,
        dims.d_out,
        _POOL_CODES[dims.pool],
    ]


def save_model(model: GtfModel, path) -> None:
    """Versioned binary checkpoint; parameters in declaration order, then center."""
    version = _VERSION.encode("ascii")
    words = _dims_to_words(model.dims)
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<I", len(version)) + version
    blob += struct.pack("<I", len(words))
    blob += struct.pack(f"<{len(words)}I", *words)
    blob += struct.pack("<B", 0 if model.center is None else 1)
    for name, arr in model.params.items():
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    if model.center is not None:
        blob += np.ascontiguousarray(model.center, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_model(path) -> GtfModel:
    """Load a checkpoint written by save_model; bitwise round-trip guaranteed."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(4) != _MAGIC:
        raise CheckpointError(f"not a model checkpoint (bad magic) in {path}")
    version = r.take(r.u32()).decode("ascii", errors="replace")
    if version != _VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version!r} (expected {_VERSION!r})"
        )
    n_words = r.u32()
    words = list(struct.unpack(f"<{n_words}I", r.take(4 * n_words)))
    try:
        d = words.pop(0)
        n_gcn = words.pop(0)
        gcn = tuple(words.pop(0) for _ in range(n_gcn))
        d_model, heads, d_ff, depth, d_e, d_h, d_out, pool_code = words
        dims = ModelDims(
            d=d, gcn=gcn, d_model=d_model, heads=heads, d_ff=d_ff, depth=depth,
            d_e=d_e, d_h=d_h, d_out=d_out, pool=_POOL_NAMES[pool_code],
        )
    except (IndexError, ValueError, KeyError, ContractError) as exc:
        raise CheckpointError(f"invalid dimension table in {path}: {exc}") from exc
    has_center = r.take(1)[0]
    params = ParamStore()
    for name, shape, _ in _param_plan(dims):
        raw = r.take(8 * shape[0] * shape[1])
        params.add(name, np.frombuffer(raw, dtype="<f8").reshape(shape))
    center = None
    if has_center:
        center = np.frombuffer(r.take(8 * d_out), dtype="<f8").reshape(1, d_out)
    if r.pos != len(data):
        raise CheckpointError(
            f"trailing bytes in checkpoint {path}: {len(data) - r.pos} extra"
        )
    return GtfModel(dims, params, center=center)
