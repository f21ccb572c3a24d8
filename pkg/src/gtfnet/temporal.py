"""Transformer encoder over per-node metric windows.

Each node's T×d observation block is projected to model width, augmented with
a sinusoidal positional encoding, and passed through a stack of post-norm
encoder layers (multi-head scaled dot-product attention, then a ReLU
feed-forward, each followed by residual add and layer normalization).
Attention is bidirectional: windows are scored offline, so no causal mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ContractError, ShapeError
from .numerics import Matrix, Tape, Var

__all__ = [
    "EncoderLayerParams",
    "EncoderStack",
    "MetricWindow",
    "PositionalEncoding",
    "attention",
    "encoder_forward",
    "pool_final",
    "positional_encoding",
]


@dataclass(frozen=True)
class MetricWindow:
    """One node's T×d observation block; rows are time steps."""

    node_index: int
    values: Matrix

    def __post_init__(self):
        if self.node_index < 0:
            raise ContractError(f"node_index must be >= 0, got {self.node_index}")
        if not np.isfinite(self.values.data).all():
            raise ContractError(
                f"metric window for node {self.node_index} contains non-finite values"
            )

    @property
    def T(self) -> int:
        return self.values.rows

    @property
    def d(self) -> int:
        return self.values.cols


@dataclass(frozen=True)
class PositionalEncoding:
    """Deterministic sinusoidal position matrix, entries in [-1, 1]."""

    matrix: Matrix


def positional_encoding(T: int, d_model: int) -> PositionalEncoding:
    """P[t, 2k] = sin(t / 10000^(2k/d_model)), P[t, 2k+1] = cos(same), t zero-based."""
    if T < 1:
        raise ConfigError(f"window length must be >= 1, got {T}")
    if d_model < 2 or d_model % 2:
        raise ConfigError(f"d_model must be even and >= 2, got {d_model}")
    t = np.arange(T, dtype=np.float64)[:, None]
    k2 = np.arange(0, d_model, 2, dtype=np.float64)
    angle = t / np.power(10000.0, k2 / d_model)
    p = np.empty((T, d_model))
    p[:, 0::2] = np.sin(angle)
    p[:, 1::2] = np.cos(angle)
    return PositionalEncoding(Matrix(p))


def _shape_of(x) -> tuple[int, int]:
    return x.shape


@dataclass
class EncoderLayerParams:
    """Weights of one encoder layer; entries are Matrix or tape-bound Var.

    Per-head projections are kept separate (w_q[i] maps d_model -> d_k); the
    forward pass concatenates them once per layer so each projection runs as
    a single matrix product.
    """

    w_q: tuple
    w_k: tuple
    w_v: tuple
    w_o: object
    w_1: object
    w_2: object
    ln1_gain: object
    ln1_shift: object
    ln2_gain: object
    ln2_shift: object
    _cat: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        h = len(self.w_q)
        if h < 1 or len(self.w_k) != h or len(self.w_v) != h:
            raise ContractError("w_q, w_k, w_v must hold one matrix per head")
        d_model, d_k = _shape_of(self.w_q[0])
        for w in (*self.w_q, *self.w_k, *self.w_v):
            if _shape_of(w) != (d_model, d_k):
                raise ShapeError(
                    f"head projection shape {_shape_of(w)} != {(d_model, d_k)}"
                )
        if h * d_k != d_model:
            raise ShapeError(f"heads*d_k = {h * d_k} must equal d_model = {d_model}")
        if _shape_of(self.w_o) != (h * d_k, d_model):
            raise ShapeError(
                f"w_o shape {_shape_of(self.w_o)} != {(h * d_k, d_model)}"
            )
        d_ff = _shape_of(self.w_1)[1]
        if _shape_of(self.w_1) != (d_model, d_ff) or _shape_of(self.w_2) != (d_ff, d_model):
            raise ShapeError("feed-forward shapes do not chain back to d_model")
        for v in (self.ln1_gain, self.ln1_shift, self.ln2_gain, self.ln2_shift):
            if _shape_of(v) != (1, d_model):
                raise ShapeError(f"layer-norm vector shape {_shape_of(v)} != (1, {d_model})")

    @property
    def heads(self) -> int:
        return len(self.w_q)

    @property
    def d_k(self) -> int:
        return _shape_of(self.w_q[0])[1]

    def cat(self, which: str):
        # concatenated per-head weights, built once per params instance so a
        # tape-bound layer records its hstacks a single time
        got = self._cat.get(which)
        if got is None:
            parts = {"q": self.w_q, "k": self.w_k, "v": self.w_v}[which]
            got = parts[0] if len(parts) == 1 else nm.hstack(parts)
            self._cat[which] = got
        return got


@dataclass
class EncoderStack:
    """Input projection (d -> d_model) plus L encoder layers."""

    input_proj: object
    layers: tuple

    def __post_init__(self):
        self.layers = tuple(self.layers)
        if len(self.layers) < 1:
            raise ContractError("encoder stack needs at least one layer")
        d_model = _shape_of(self.input_proj)[1]
        for layer in self.layers:
            if _shape_of(layer.w_o)[1] != d_model:
                raise ShapeError("encoder layers do not match the input projection width")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def d_model(self) -> int:
        return _shape_of(self.input_proj)[1]


def attention(q, k, v, tape: Tape | None = None, weights_out: list | None = None):
    """softmax_rows(q kᵀ / √d_k) v, the scaled dot-product attention step.

    Accepts Matrix inputs (eager) or Vars; passing `tape` lifts plain
    matrices onto it. `weights_out`, if given, receives the attention-weight
    matrix for inspection.
    """
    if tape is not None:
        q, k, v = (x if isinstance(x, Var) else tape.constant(x) for x in (q, k, v))
    return nm.attention_blocks(q, k, v, heads=1, weights_out=weights_out)


def multihead_attention(x, layer: EncoderLayerParams, weights_out: list | None = None):
    """All-head attention for one layer: project, attend per head, concatenate."""
    q = nm.matmul(x, layer.cat("q"))
    k = nm.matmul(x, layer.cat("k"))
    v = nm.matmul(x, layer.cat("v"))
    scale = 1.0 / math.sqrt(layer.d_k)
    return nm.attention_blocks(
        q, k, v, heads=layer.heads, scale=scale, weights_out=weights_out
    )


def encoder_forward(window: MetricWindow, stack: EncoderStack, tape: Tape | None = None):
    """Encode one metric window to a T×d_model representation.

    Projects to model width, adds the positional encoding, then applies each
    layer as attention -> residual -> layer-norm -> feed-forward -> residual
    -> layer-norm (post-norm ordering).
    """
    d_in = _shape_of(stack.input_proj)[0]
    if window.d != d_in:
        raise ShapeError(
            f"window metric dimension {window.d} does not match input projection {_shape_of(stack.input_proj)}"
        )
    x = window.values
    if tape is not None:
        x = tape.constant(x)
    x = nm.matmul(x, stack.input_proj)
    p = positional_encoding(window.T, stack.d_model).matrix
    x = nm.add(x, p)
    for layer in stack.layers:
        attn = multihead_attention(x, layer)
        attn = nm.matmul(attn, layer.w_o)
        x = nm.layer_norm(nm.add(x, attn), layer.ln1_gain, layer.ln1_shift)
        ff = nm.matmul(nm.relu(nm.matmul(x, layer.w_1)), layer.w_2)
        x = nm.layer_norm(nm.add(x, ff), layer.ln2_gain, layer.ln2_shift)
    return x


def pool_final(z, mode: str = "last"):
    """Reduce a T×d_model encoding to one row: the last time step or the mean."""
    if mode == "last":
        return nm.take_row(z, _shape_of(z)[0] - 1)
    if mode == "mean":
        return nm.col_mean(z)
    raise ConfigError(f"unknown pooling mode {mode!r} (expected 'last' or 'mean')")
