"""Branch fusion and one-class deviation scoring.

The structural embedding h_i and temporal embedding z_i live in different
widths, so each passes through a learned projection to a shared embedding
size before the convex mix U_i = γ·proj(h_i) + (1-γ)·proj(z_i). γ is kept in
(0,1) structurally by parametrizing through a sigmoid.

The anomaly score is the squared distance of an MLP projection of U_i from a
frozen center: the output layer carries no bias and the center is pinned away
from zero, the two standard guards against the constant-output collapse of
one-class objectives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ContractError, ShapeError
from .numerics import Matrix, Tape, Var

__all__ = [
    "FusionParams",
    "ScoredNode",
    "ScorerParams",
    "fuse",
    "mlp_forward",
    "score",
]


def _shape(x) -> tuple[int, int]:
    return x.shape


@dataclass
class FusionParams:
    """theta (sigmoid-parametrized fusion weight) plus the two branch projections."""

    theta: object  # 1x1
    graph_proj: object  # d_g x d_e
    temporal_proj: object  # d_model x d_e

    def __post_init__(self):
        if _shape(self.theta) != (1, 1):
            raise ShapeError(f"theta must be 1x1, got {_shape(self.theta)}")
        if _shape(self.graph_proj)[1] != _shape(self.temporal_proj)[1]:
            raise ShapeError(
                f"projections disagree on d_e: {_shape(self.graph_proj)} vs "
                f"{_shape(self.temporal_proj)}"
            )

    @property
    def d_e(self) -> int:
        return _shape(self.graph_proj)[1]


@dataclass
class ScorerParams:
    """Two-layer MLP (hidden bias only, bias-free output) and the frozen center."""

    w1: object  # d_e x d_h
    b1: object  # 1 x d_h
    w2: object  # d_h x d_out
    center: Matrix  # 1 x d_out, never trainable

    def __post_init__(self):
        d_e, d_h = _shape(self.w1)
        if _shape(self.b1) != (1, d_h):
            raise ShapeError(f"b1 shape {_shape(self.b1)} != (1, {d_h})")
        if _shape(self.w2)[0] != d_h:
            raise ShapeError(f"w2 rows {_shape(self.w2)} do not match hidden width {d_h}")
        if not isinstance(self.center, Matrix):
            raise ContractError("center must be a plain (frozen) Matrix")
        if self.center.shape != (1, _shape(self.w2)[1]):
            raise ShapeError(
                f"center shape {self.center.shape} != (1, {_shape(self.w2)[1]})"
            )


@dataclass(frozen=True)
class ScoredNode:
    """Anomaly score for one node in one window."""

    node_id: str
    window_index: int
    score: float
    weak_label: int | None = None

    def __post_init__(self):
        if not self.score >= 0.0:
            raise ContractError(
                f"score must be finite and >= 0, got {self.score} "
                f"for {self.node_id!r} window {self.window_index}"
            )
        if self.weak_label not in (None, 0, 1):
            raise ContractError(f"weak_label must be 0, 1 or None, got {self.weak_label}")


def gamma_value(theta) -> float:
    """Current fusion weight sigmoid(theta) as a float."""
    raw = theta.value if isinstance(theta, Var) else theta.data
    return float(1.0 / (1.0 + np.exp(-raw[0, 0])))


def fuse(h_i, z_final, params: FusionParams, tape: Tape | None = None):
    """U_i = γ·(graph_proj·h_i) + (1-γ)·(temporal_proj·z_final), γ = sigmoid(theta).

    Inputs are single-row matrices (or stacks of rows, fused row-wise).
    """
    if tape is not None:
        if not isinstance(h_i, Var):
            h_i = tape.constant(h_i)
        if not isinstance(z_final, Var):
            z_final = tape.constant(z_final)
    if _shape(h_i)[0] != _shape(z_final)[0]:
        raise ShapeError(
            f"branch row counts differ: {_shape(h_i)} vs {_shape(z_final)}"
        )
    g = nm.sigmoid(params.theta)
    one_minus_g = nm.affine(g, -1.0, 1.0)
    graph_part = nm.smul(g, nm.matmul(h_i, params.graph_proj))
    temporal_part = nm.smul(one_minus_g, nm.matmul(z_final, params.temporal_proj))
    return nm.add(graph_part, temporal_part)


def mlp_forward(u, params: ScorerParams, tape: Tape | None = None):
    """The scorer's representation-space projection: relu(u W1 + b1) W2."""
    if tape is not None and not isinstance(u, Var):
        u = tape.constant(u)
    hidden = nm.relu(nm.rowvec_add(nm.matmul(u, params.w1), params.b1))
    return nm.matmul(hidden, params.w2)


def score(u_i, params: ScorerParams, tape: Tape | None = None):
    """Anomaly score ‖MLP(u_i) - c‖² for a single fused embedding row.

    Returns a float in eager mode; with a tape involved, returns the 1x1
    recorded value so the score stays differentiable.
    """
    if _shape(u_i)[0] != 1:
        raise ShapeError(f"score expects a single row, got {_shape(u_i)}")
    y = mlp_forward(u_i, params, tape=tape)
    center = params.center
    if isinstance(y, Var):
        center = y.tape.constant(center)
    dev = nm.sub(y, center)
    s = nm.sum_all(nm.hadamard(dev, dev))
    if isinstance(s, Var):
        return s
    return s.item()
