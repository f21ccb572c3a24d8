"""The full model: parameter registry, initialization, and end-to-end scoring.

A GtfModel owns every learnable matrix in one ParamStore (declaration order
is the canonical checkpoint order) plus the frozen one-class center. Forward
passes bind parameters either eagerly (Matrix snapshots, used for scoring) or
onto a Tape (used for training); both routes compose the same branch ops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import numerics as nm
from .errors import ContractError, ShapeError
from .fusion import FusionParams, ScoredNode, ScorerParams, gamma_value, mlp_forward
from .graph import (
    GcnStack,
    ServiceGraphSnapshot,
    gcn_forward,
    normalize_adjacency,
    stack_node_features,
)
from .numerics import Matrix, ParamStore, Tape
from .temporal import (
    EncoderLayerParams,
    EncoderStack,
    MetricWindow,
    encoder_forward,
    pool_final,
)

__all__ = ["GtfModel", "ModelDims", "init_params", "score_window"]

_POOL_MODES = ("last", "mean")


@dataclass(frozen=True)
class ModelDims:
    """Dimension table for every parameter; fully determines model shapes.

    gcn is the full width chain of the graph branch. Its first entry must be
    2*d because the structural input is [per-metric mean ; last observation].
    """

    d: int  # metric dimension
    gcn: tuple[int, ...]  # (d_in, hidden..., d_g)
    d_model: int
    heads: int
    d_ff: int
    depth: int  # encoder layers L
    d_e: int  # fused embedding width
    d_h: int  # scorer hidden width
    d_out: int  # scorer output / center width
    pool: str = "last"

    def __post_init__(self):
        object.__setattr__(self, "gcn", tuple(int(x) for x in self.gcn))
        for name in ("d", "d_model", "heads", "d_ff", "depth", "d_e", "d_h", "d_out"):
            if getattr(self, name) < 1:
                raise ContractError(f"dimension {name} must be >= 1, got {getattr(self, name)}")
        if len(self.gcn) < 2:
            raise ContractError(f"gcn chain needs input and output widths, got {self.gcn}")
        if any(x < 1 for x in self.gcn):
            raise ContractError(f"gcn widths must be >= 1, got {self.gcn}")
        if self.gcn[0] != 2 * self.d:
            raise ContractError(
                f"gcn input width {self.gcn[0]} must equal 2*d = {2 * self.d}"
            )
        if self.d_model % 2:
            raise ContractError(f"d_model must be even, got {self.d_model}")
        if self.d_model % self.heads:
            raise ContractError(
                f"heads ({self.heads}) must divide d_model ({self.d_model})"
            )
        if self.pool not in _POOL_MODES:
            raise ContractError(f"pool must be one of {_POOL_MODES}, got {self.pool!r}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    @property
    def d_g(self) -> int:
        return self.gcn[-1]


def _param_plan(dims: ModelDims) -> list[tuple[str, tuple[int, int], str]]:
    """Canonical (name, shape, init-kind) declaration order.

    Kinds: 'xavier' marks proper weight matrices (these also receive weight
    decay); 'zeros'/'ones' cover biases, layer-norm vectors and theta.
    """
    plan: list[tuple[str, tuple[int, int], str]] = []
    for l in range(len(dims.gcn) - 1):
        plan.append((f"gcn.{l}.w", (dims.gcn[l], dims.gcn[l + 1]), "xavier"))
    plan.append(("enc.in_proj", (dims.d, dims.d_model), "xavier"))
    for l in range(dims.depth):
        for h in range(dims.heads):
            for part in ("wq", "wk", "wv"):
                plan.append((f"enc.{l}.head{h}.{part}", (dims.d_model, dims.d_k), "xavier"))
        plan.append((f"enc.{l}.wo", (dims.heads * dims.d_k, dims.d_model), "xavier"))
        plan.append((f"enc.{l}.ff1", (dims.d_model, dims.d_ff), "xavier"))
        plan.append((f"enc.{l}.ff2", (dims.d_ff, dims.d_model), "xavier"))
        plan.append((f"enc.{l}.ln1.gain", (1, dims.d_model), "ones"))
        plan.append((f"enc.{l}.ln1.shift", (1, dims.d_model), "zeros"))
        plan.append((f"enc.{l}.ln2.gain", (1, dims.d_model), "ones"))
        plan.append((f"enc.{l}.ln2.shift", (1, dims.d_model), "zeros"))
    plan.append(("fuse.theta", (1, 1), "zeros"))
    plan.append(("fuse.graph_proj", (dims.d_g, dims.d_e), "xavier"))
    plan.append(("fuse.temporal_proj", (dims.d_model, dims.d_e), "xavier"))
    plan.append(("scorer.w1", (dims.d_e, dims.d_h), "xavier"))
    plan.append(("scorer.b1", (1, dims.d_h), "zeros"))
    plan.append(("scorer.w2", (dims.d_h, dims.d_out), "xavier"))
    return plan


class GtfModel:
    """All learnable parameters plus hyperparameters and the frozen center."""

    def __init__(self, dims: ModelDims, params: ParamStore, center: np.ndarray | None = None):
        expected = _param_plan(dims)
        if params.names() != tuple(name for name, _, _ in expected):
            raise ContractError("parameter store does not match the declaration plan")
        for name, shape, _ in expected:
            if params.value(name).shape != shape:
                raise ShapeError(
                    f"parameter {name!r} has shape {params.value(name).shape}, expected {shape}"
                )
        if center is not None:
            center = np.asarray(center, dtype=np.float64).reshape(1, dims.d_out).copy()
        self.dims = dims
        self.params = params
        self._center = center

    @property
    def center(self) -> np.ndarray | None:
        return None if self._center is None else self._center.copy()

    def set_center(self, center) -> None:
        """One-time installation of the frozen one-class center."""
        if self._center is not None:
            raise ContractError("center is frozen and already set")
        self._center = np.asarray(center, dtype=np.float64).reshape(1, self.dims.d_out).copy()

    @property
    def gamma(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.params.value("fuse.theta")[0, 0])))

    def decayed_names(self) -> tuple[str, ...]:
        """Parameters subject to weight decay (proper weight matrices only)."""
        return tuple(name for name, _, kind in _param_plan(self.dims) if kind == "xavier")

    def _bind(self, name: str, tape: Tape | None):
        if tape is None:
            return self.params.matrix(name)
        return tape.param(self.params, name)

    def gcn_stack(self, tape: Tape | None = None) -> GcnStack:
        n_layers = len(self.dims.gcn) - 1
        return GcnStack(tuple(self._bind(f"gcn.{l}.w", tape) for l in range(n_layers)))

    def encoder_stack(self, tape: Tape | None = None) -> EncoderStack:
        d = self.dims
        layers = []
        for l in range(d.depth):
            layers.append(
                EncoderLayerParams(
                    w_q=tuple(self._bind(f"enc.{l}.head{h}.wq", tape) for h in range(d.heads)),
                    w_k=tuple(self._bind(f"enc.{l}.head{h}.wk", tape) for h in range(d.heads)),
                    w_v=tuple(self._bind(f"enc.{l}.head{h}.wv", tape) for h in range(d.heads)),
                    w_o=self._bind(f"enc.{l}.wo", tape),
                    w_1=self._bind(f"enc.{l}.ff1", tape),
                    w_2=self._bind(f"enc.{l}.ff2", tape),
                    ln1_gain=self._bind(f"enc.{l}.ln1.gain", tape),
                    ln1_shift=self._bind(f"enc.{l}.ln1.shift", tape),
                    ln2_gain=self._bind(f"enc.{l}.ln2.gain", tape),
                    ln2_shift=self._bind(f"enc.{l}.ln2.shift", tape),
                )
            )
        return EncoderStack(input_proj=self._bind("enc.in_proj", tape), layers=tuple(layers))

    def fusion_params(self, tape: Tape | None = None) -> FusionParams:
        return FusionParams(
            theta=self._bind("fuse.theta", tape),
            graph_proj=self._bind("fuse.graph_proj", tape),
            temporal_proj=self._bind("fuse.temporal_proj", tape),
        )

    def scorer_params(self, tape: Tape | None = None, center: Matrix | None = None) -> ScorerParams:
        if center is None:
            if self._center is None:
                raise ContractError("center not initialized; run init_center first")
            center = Matrix(self._center)
        return ScorerParams(
            w1=self._bind("scorer.w1", tape),
            b1=self._bind("scorer.b1", tape),
            w2=self._bind("scorer.w2", tape),
            center=center,
        )

    def bound(self, tape: Tape | None = None, center: Matrix | None = None) -> "BoundModel":
        return BoundModel(
            gcn=self.gcn_stack(tape),
            encoder=self.encoder_stack(tape),
            fusion=self.fusion_params(tape),
            scorer=self.scorer_params(tape, center=center),
            pool=self.dims.pool,
            tape=tape,
        )


@dataclass
class BoundModel:
    """One binding of all model parameters (eager or onto a single tape)."""

    gcn: GcnStack
    encoder: EncoderStack
    fusion: FusionParams
    scorer: ScorerParams
    pool: str
    tape: Tape | None

    def window_outputs(self, snapshot: ServiceGraphSnapshot, windows: Sequence[MetricWindow]):
        """MLP outputs for every node of one window, as an n×d_out stack.

        Runs the graph branch once, the temporal branch per node, fuses all
        rows at once, and projects through the scorer MLP (deviation from the
        center is left to the caller).
        """
        n = snapshot.n_nodes
        if len(windows) != n:
            raise ContractError(
                f"snapshot has {n} nodes but {len(windows)} metric windows given"
            )
        for i, w in enumerate(windows):
            if w.node_index != i:
                raise ContractError(
                    f"window at position {i} carries node_index {w.node_index}"
                )
        adj = normalize_adjacency(snapshot)
        h0 = stack_node_features(windows)
        h = gcn_forward(h0, adj, self.gcn, tape=self.tape)
        z_rows = [
            pool_final(encoder_forward(w, self.encoder, tape=self.tape), self.pool)
            for w in windows
        ]
        z = z_rows[0] if n == 1 else nm.vstack(z_rows)
        from .fusion import fuse  # local import keeps module load order simple

        u = fuse(h, z, self.fusion, tape=self.tape)
        return mlp_forward(u, self.scorer, tape=self.tape)

    def window_deviations(self, snapshot, windows):
        """Row-wise squared deviations from the center, as an n×d_out value
        whose row sums are the node scores."""
        y = self.window_outputs(snapshot, windows)
        center = self.scorer.center
        n = snapshot.n_nodes
        tiled = Matrix(np.repeat(center.data, n, axis=0))
        if self.tape is not None:
            tiled = self.tape.constant(tiled)
        dev = nm.sub(y, tiled)
        return nm.hadamard(dev, dev)


def init_params(dims: ModelDims, seed: int) -> GtfModel:
    """Fresh model: weight matrices ~ uniform(-a, a), a = sqrt(6/(fan_in+fan_out));
    layer-norm gains 1, every bias/shift and theta 0. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    params = ParamStore()
    for name, shape, kind in _param_plan(dims):
        if kind == "xavier":
            a = math.sqrt(6.0 / (shape[0] + shape[1]))
            params.add(name, rng.uniform(-a, a, size=shape))
        elif kind == "ones":
            params.add(name, np.ones(shape))
        else:
            params.add(name, np.zeros(shape))
    return GtfModel(dims, params)


def score_window(
    snapshot: ServiceGraphSnapshot,
    windows: Sequence[MetricWindow],
    model: GtfModel,
    config=None,
) -> list[ScoredNode]:
    """Score every node of one window; deterministic given model and inputs.

    `config` may override the pooling mode (an object or mapping with a
    `pool` entry); everything else comes from the model.
    """
    pool = model.dims.pool
    if config is not None:
        pool = getattr(config, "pool", None) or (
            config.get("pool", pool) if hasattr(config, "get") else pool
        )
    bound = model.bound(tape=None)
    bound.pool = pool
    sq = bound.window_deviations(snapshot, windows).data
    scores = sq.sum(axis=1)
    return [
        ScoredNode(node_id=nid, window_index=snapshot.window_index, score=float(s))
        for nid, s in zip(snapshot.node_ids, scores)
    ]
