"""Service-call graph snapshots and the graph-convolution branch.

A snapshot holds the node universe of one time window plus deduplicated call
edges. Convolution uses the self-loop symmetric normalization
D̃^{-1/2}(A+I)D̃^{-1/2} over the symmetrized adjacency: recorded calls are
directed, but the symmetric normalizer requires an undirected A, so direction
is dropped here. Each layer computes σ(Â H W); ReLU between layers, identity
after the last so structural embeddings stay unrestricted in sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import numerics as nm
from .errors import ContractError, IngestError, ShapeError
from .numerics import Matrix, Tape, Var
from .temporal import MetricWindow

__all__ = [
    "GcnStack",
    "NormalizedAdjacency",
    "ServiceGraphSnapshot",
    "build_snapshot",
    "gcn_forward",
    "node_input_features",
    "normalize_adjacency",
]


@dataclass(frozen=True)
class ServiceGraphSnapshot:
    """Node universe and deduplicated call edges for one window."""

    node_ids: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    window_index: int = 0

    def __post_init__(self):
        n = len(self.node_ids)
        if n < 1:
            raise ContractError("snapshot needs at least one node")
        if list(self.node_ids) != sorted(self.node_ids):
            raise ContractError("node_ids must be sorted lexicographically")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ContractError(f"edge ({i}, {j}) out of range for {n} nodes")
            if i == j:
                raise ContractError(f"self-edge ({i}, {j}) must be dropped before construction")
            if (i, j) in seen:
                raise ContractError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)


def build_snapshot(
    edge_records: Iterable[tuple[str, str]],
    node_universe: Iterable[str],
    window_index: int = 0,
) -> ServiceGraphSnapshot:
    """Assemble a snapshot from raw (caller, callee) id pairs.

    Node ids are sorted into canonical order; exact duplicate records are
    dropped, as are self-calls (Eq. self-loops are added analytically during
    normalization, not stored as edges).
    """
    node_ids = tuple(sorted(set(node_universe)))
    if not node_ids:
        raise ContractError("node universe is empty")
    index = {nid: i for i, nid in enumerate(node_ids)}
    edges = set()
    for caller, callee in edge_records:
        if caller not in index:
            raise IngestError(f"unknown instance id {caller!r} in edge record")
        if callee not in index:
            raise IngestError(f"unknown instance id {callee!r} in edge record")
        i, j = index[caller], index[callee]
        if i != j:
            edges.add((i, j))
    return ServiceGraphSnapshot(node_ids, tuple(sorted(edges)), window_index)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """D̃^{-1/2}(A+I)D̃^{-1/2} for a symmetrized binary adjacency A."""

    matrix: Matrix


def normalize_adjacency(snapshot: ServiceGraphSnapshot) -> NormalizedAdjacency:
    n = snapshot.n_nodes
    a = np.eye(n)
    for i, j in snapshot.edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    normalized = a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    return NormalizedAdjacency(Matrix(normalized))


@dataclass(frozen=True)
class GcnStack:
    """Chained layer weights W^(l); layer l maps d_l -> d_{l+1}."""

    layer_weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "layer_weights", tuple(self.layer_weights))
        if len(self.layer_weights) < 1:
            raise ContractError("GCN stack needs at least one layer")
        for prev, nxt in zip(self.layer_weights, self.layer_weights[1:]):
            if prev.shape[1] != nxt.shape[0]:
                raise ShapeError(
                    f"GCN layer dimensions do not chain: {prev.shape} then {nxt.shape}"
                )

    @property
    def depth(self) -> int:
        return len(self.layer_weights)

    @property
    def d_in(self) -> int:
        return self.layer_weights[0].shape[0]

    @property
    def d_out(self) -> int:
        return self.layer_weights[-1].shape[1]


def gcn_forward(h0, adj: NormalizedAdjacency, stack: GcnStack, tape: Tape | None = None):
    """Apply Â H W through the stack; ReLU between layers, identity after the last.

    Row i of the result is node i's structural embedding. Accepts Matrix or
    Var inputs; passing `tape` lifts plain matrices onto it.
    """
    n = adj.matrix.rows
    h = h0
    if h.shape[0] != n:
        raise ShapeError(
            f"feature rows {h.shape} do not match adjacency {adj.matrix.shape}"
        )
    a = adj.matrix
    if tape is not None:
        if not isinstance(h, Var):
            h = tape.constant(h)
        a = tape.constant(a)
    for layer_idx, w in enumerate(stack.layer_weights):
        h = nm.matmul(nm.matmul(a, h), w)
        if layer_idx < stack.depth - 1:
            h = nm.relu(h)
    return h


def node_input_features(window: MetricWindow) -> Matrix:
    """Structural-branch input for one node: [per-metric mean ; last observation].

    The graph branch needs a fixed-size per-node summary independent of the
    temporal branch; mean plus final sample keeps both level and recency.
    """
    vals = window.values.data
    return Matrix(np.concatenate([vals.mean(axis=0), vals[-1]])[None, :])


def stack_node_features(windows: Sequence[MetricWindow]) -> Matrix:
    """Row-stack node_input_features for all nodes of one window."""
    if not windows:
        raise ContractError("no metric windows given")
    rows = [node_input_features(w).data[0] for w in windows]
    return Matrix(np.stack(rows, axis=0))
