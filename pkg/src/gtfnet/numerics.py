"""Dense matrices, a reverse-mode differentiation tape, and gradient checking.

Everything the model computes flows through the small operation set defined
here. Values are immutable 2-D float64 matrices backed by numpy; recording an
operation on a :class:`Tape` makes it differentiable, and :func:`backward`
accumulates loss gradients into a :class:`ParamStore`. :func:`grad_check`
compares tape gradients against central finite differences and is the master
verification oracle for every composite built on top.

Each public operation accepts either plain :class:`Matrix` values (eager,
pure) or :class:`Var` handles recorded on a tape; mixing the two lifts the
plain matrices onto the tape as constants.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, NumericError, ShapeError

__all__ = [
    "Matrix",
    "ParamStore",
    "Tape",
    "Var",
    "add",
    "affine",
    "attention_blocks",
    "backward",
    "col_mean",
    "grad_check",
    "hadamard",
    "hstack",
    "layer_norm",
    "matmul",
    "matmul_nt",
    "mean_all",
    "relu",
    "rowvec_add",
    "sigmoid",
    "smul",
    "softmax_rows",
    "sub",
    "sum_all",
    "take_row",
    "transpose",
    "vstack",
]


def _coerce(values) -> np.ndarray:
    """Coerce input to a C-ordered 2-D float64 array; 1-D input becomes a row."""
    a = np.array(values, dtype=np.float64, order="C")
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"matrix must have at least one row and column, got {a.shape}")
    return a


class Matrix:
    """Immutable dense 2-D float64 matrix (row-major).

    Vectors are represented as single-row matrices. Instances are safe to
    share across threads; the backing array is marked read-only.
    """

    __slots__ = ("_a",)

    def __init__(self, values):
        a = _coerce(values)
        a.flags.writeable = False
        self._a = a

    @classmethod
    def _wrap(cls, a: np.ndarray) -> "Matrix":
        # internal: adopt an array that is already float64 2-D and unshared
        m = object.__new__(cls)
        a.flags.writeable = False
        m._a = a
        return m

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls._wrap(np.zeros((rows, cols)))

    @classmethod
    def full(cls, rows: int, cols: int, value: float) -> "Matrix":
        return cls._wrap(np.full((rows, cols), float(value)))

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        return cls._wrap(np.eye(n))

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the underlying row-major array."""
        return self._a

    def to_lists(self) -> list[list[float]]:
        return self._a.tolist()

    def item(self) -> float:
        if self._a.shape != (1, 1):
            raise ShapeError(f"item() requires a 1x1 matrix, got {self._a.shape}")
        return float(self._a[0, 0])

    def __float__(self) -> float:
        return self.item()

    def allclose(self, other: "Matrix", tol: float = 1e-12) -> bool:
        return self.shape == other.shape and bool(
            np.allclose(self._a, other._a, rtol=0.0, atol=tol)
        )

    def __eq__(self, other) -> bool:
        # exact, bitwise-style equality; use allclose() for tolerant checks
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._a, other._a))

    def __hash__(self):
        return hash((self.shape, self._a.tobytes()))

    def __repr__(self) -> str:
        return f"Matrix({self._a.tolist()!r})"


class ParamStore:
    """Named parameter matrices with stable iteration order plus gradient slots.

    Parameter arrays are mutable so the optimizer can update them in place;
    every gradient accumulator has the same shape as its parameter.
    """

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, values) -> None:
        if name in self._values:
            raise ContractError(f"parameter {name!r} already registered")
        a = _coerce(values).copy()
        self._values[name] = a
        self._grads[name] = np.zeros_like(a)

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __len__(self) -> int:
        return len(self._values)

    def names(self) -> tuple[str, ...]:
        return tuple(self._values)

    def value(self, name: str) -> np.ndarray:
        """The live parameter array. Mutate only between forward passes."""
        return self._values[name]

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def matrix(self, name: str) -> Matrix:
        return Matrix(self._values[name])

    def set_value(self, name: str, values) -> None:
        a = _coerce(values)
        current = self._values[name]
        if a.shape != current.shape:
            raise ShapeError(
                f"parameter {name!r} has shape {current.shape}, got {a.shape}"
            )
        current[...] = a

    def items(self) -> Iterable[tuple[str, np.ndarray]]:
        return self._values.items()

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g.fill(0.0)

    def n_entries(self) -> int:
        return sum(v.size for v in self._values.values())


# Tape opcodes. Forward kernels live in _eval; adjoints in backward().
_LEAF = 0
_MATMUL = 1
_MATMUL_NT = 2
_ADD = 3
_SUB = 4
_HADAMARD = 5
_AFFINE = 6
_SMUL = 7
_ROWVEC_ADD = 8
_TRANSPOSE = 9
_RELU = 10
_SIGMOID = 11
_SOFTMAX = 12
_LAYER_NORM = 13
_SUM_ALL = 14
_MEAN_ALL = 15
_COL_MEAN = 16
_TAKE_ROW = 17
_HSTACK = 18
_VSTACK = 19
_ATTENTION = 20


class Var:
    """Handle to one recorded value on a tape."""

    __slots__ = ("tape", "id", "value")

    def __init__(self, tape: "Tape", vid: int, value: np.ndarray):
        self.tape = tape
        self.id = vid
        self.value = value

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def matrix(self) -> Matrix:
        return Matrix(self.value.copy())

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() requires a 1x1 value, got {self.value.shape}")
        return float(self.value[0, 0])

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return affine(self, float(other), 0.0)
        return hadamard(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return affine(self, float(other), 0.0)
        return hadamard(other, self)

    def __neg__(self):
        return affine(self, -1.0, 0.0)

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.value.shape})"


class Tape:
    """Append-only record of one forward computation.

    Nodes are stored in topological order by construction (parents always
    have smaller ids). A tape is confined to a single thread for a given
    forward+backward pass; run independent passes on independent tapes.
    """

    __slots__ = ("_ops", "_args", "_vals", "_static", "_cache")

    def __init__(self):
        self._ops: list[int] = []
        self._args: list[tuple[int, ...]] = []
        self._vals: list[np.ndarray] = []
        self._static: list = []  # per-node fixed payload (scalars, names, indices)
        self._cache: list = []  # per-node forward cache reused by the adjoint

    def __len__(self) -> int:
        return len(self._ops)

    def _push(self, op: int, args: tuple[int, ...], val: np.ndarray, static=None, cache=None) -> Var:
        vid = len(self._ops)
        self._ops.append(op)
        self._args.append(args)
        self._vals.append(val)
        self._static.append(static)
        self._cache.append(cache)
        return Var(self, vid, val)

    def constant(self, values) -> Var:
        """Record a non-trainable leaf."""
        if isinstance(values, Matrix):
            a = values.data
        else:
            a = _coerce(values)
        return self._push(_LEAF, (), a, static=None)

    def param(self, store: ParamStore, name: str) -> Var:
        """Record a trainable leaf; backward() routes its adjoint to ``name``."""
        if name not in store:
            raise ContractError(f"unknown parameter {name!r}")
        view = store.value(name).view()
        view.flags.writeable = False
        return self._push(_LEAF, (), view, static=name)

    def value(self, vid: int) -> Matrix:
        return Matrix(self._vals[vid].copy())

    def replay(self) -> bool:
        """Recompute every non-leaf value from its parents.

        Returns True when all recomputed values match the recorded ones
        bitwise; leaves are taken as recorded.
        """
        for k in range(len(self._ops)):
            op = self._ops[k]
            if op == _LEAF:
                continue
            parents = [self._vals[i] for i in self._args[k]]
            val, _ = _eval(op, parents, self._static[k])
            if not np.array_equal(val, self._vals[k], equal_nan=True):
                return False
        return True


def _eval(op: int, parents: Sequence[np.ndarray], static):
    """Forward kernel for one opcode. Returns (value, cache)."""
    if op == _MATMUL:
        return parents[0] @ parents[1], None
    if op == _MATMUL_NT:
        out = parents[0] @ parents[1].T
        if static != 1.0:
            out *= static
        return out, None
    if op == _ADD:
        return parents[0] + parents[1], None
    if op == _SUB:
        return parents[0] - parents[1], None
    if op == _HADAMARD:
        return parents[0] * parents[1], None
    if op == _AFFINE:
        c, d = static
        return parents[0] * c + d, None
    if op == _SMUL:
        return parents[1] * parents[0][0, 0], None
    if op == _ROWVEC_ADD:
        return parents[0] + parents[1], None
    if op == _TRANSPOSE:
        return np.ascontiguousarray(parents[0].T), None
    if op == _RELU:
        x = parents[0]
        return np.where(x > 0.0, x, 0.0), None
    if op == _SIGMOID:
        x = parents[0]
        return 1.0 / (1.0 + np.exp(-x)), None
    if op == _SOFTMAX:
        x = parents[0]
        if not np.isfinite(x).all():
            raise NumericError("softmax_rows input contains non-finite entries")
        m = x.max(axis=1, keepdims=True)
        e = np.exp(x - m)
        out = e / e.sum(axis=1, keepdims=True)
        return out, None
    if op == _LAYER_NORM:
        x, gain, shift = parents
        eps = static
        mu = x.mean(axis=1, keepdims=True)
        xc = x - mu
        var = np.mean(xc * xc, axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        return xhat * gain + shift, (xhat, inv)
    if op == _SUM_ALL:
        return np.array([[parents[0].sum()]]), None
    if op == _MEAN_ALL:
        return np.array([[parents[0].mean()]]), None
    if op == _COL_MEAN:
        return parents[0].mean(axis=0, keepdims=True), None
    if op == _TAKE_ROW:
        return parents[0][static : static + 1].copy(), None
    if op == _HSTACK:
        return np.concatenate(parents, axis=1), None
    if op == _VSTACK:
        return np.concatenate(parents, axis=0), None
    if op == _ATTENTION:
        q, k, v = parents
        heads, scale = static
        dk = q.shape[1] // heads
        dv = v.shape[1] // heads
        outs = []
        weights = []
        for i in range(heads):
            qh = q[:, i * dk : (i + 1) * dk]
            kh = k[:, i * dk : (i + 1) * dk]
            vh = v[:, i * dv : (i + 1) * dv]
            logits = (qh @ kh.T) * scale
            m = logits.max(axis=1, keepdims=True)
            e = np.exp(logits - m)
            s = e / e.sum(axis=1, keepdims=True)
            weights.append(s)
            outs.append(s @ vh)
        return np.concatenate(outs, axis=1), weights
    raise ContractError(f"unknown opcode {op}")


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _lift(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ContractError("operands were recorded on different tapes")
        return x
    return tape.constant(x)


def _raw(x) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    if isinstance(x, Matrix):
        return x.data
    return _coerce(x)


def _dispatch(op: int, xs: tuple, static=None, check: Callable[..., None] | None = None):
    """Run op eagerly on matrices, or record it when any operand is a Var."""
    tape = _tape_of(*xs)
    raws = tuple(_raw(x) for x in xs)
    if check is not None:
        check(*raws)
    if tape is None:
        val, _ = _eval(op, raws, static)
        return Matrix._wrap(val)
    vars_ = tuple(_lift(tape, x) for x in xs)
    val, cache = _eval(op, tuple(v.value for v in vars_), static)
    return tape._push(op, tuple(v.id for v in vars_), val, static=static, cache=cache)


def _check_matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def matmul(a, b):
    """Standard matrix product; differentiable when recorded on a Tape."""
    return _dispatch(_MATMUL, (a, b), check=_check_matmul)


def matmul_nt(a, b, scale: float = 1.0):
    """``scale * (a @ b.T)`` as one fused operation."""

    def check(x, y):
        if x.shape[1] != y.shape[1]:
            raise ShapeError(f"cannot multiply {x.shape} by transpose of {y.shape}")

    return _dispatch(_MATMUL_NT, (a, b), static=float(scale), check=check)


def add(a, b):
    return _dispatch(_ADD, (a, b), check=_check_same_shape)


def sub(a, b):
    return _dispatch(_SUB, (a, b), check=_check_same_shape)


def hadamard(a, b):
    """Elementwise product."""
    return _dispatch(_HADAMARD, (a, b), check=_check_same_shape)


def affine(a, scale: float, shift: float = 0.0):
    """Elementwise ``a * scale + shift`` with constant scalars."""
    return _dispatch(_AFFINE, (a,), static=(float(scale), float(shift)))


def smul(s, a):
    """Multiply matrix ``a`` by the 1x1 value ``s`` (both differentiable)."""

    def check(sv, av):
        if sv.shape != (1, 1):
            raise ShapeError(f"smul scalar must be 1x1, got {sv.shape}")

    return _dispatch(_SMUL, (s, a), check=check)


def rowvec_add(a, b):
    """Add the single-row matrix ``b`` to every row of ``a``."""

    def check(av, bv):
        if bv.shape != (1, av.shape[1]):
            raise ShapeError(f"row vector {bv.shape} does not broadcast over {av.shape}")

    return _dispatch(_ROWVEC_ADD, (a, b), check=check)


def transpose(a):
    return _dispatch(_TRANSPOSE, (a,))


def relu(a):
    """Elementwise max(0, x); signed zeros come out as +0.0."""
    return _dispatch(_RELU, (a,))


def sigmoid(a):
    return _dispatch(_SIGMOID, (a,))


def softmax_rows(a):
    """Row-wise softmax, computed with max-subtraction for stability."""
    return _dispatch(_SOFTMAX, (a,))


def layer_norm(x, gain, shift, eps: float = 1e-5):
    """Per-row normalization followed by elementwise gain and shift.

    ``gain`` and ``shift`` are single-row matrices broadcast over rows.
    """

    def check(xv, gv, sv):
        if gv.shape != (1, xv.shape[1]) or sv.shape != (1, xv.shape[1]):
            raise ShapeError(
                f"gain {gv.shape} / shift {sv.shape} do not match row width of {xv.shape}"
            )

    return _dispatch(_LAYER_NORM, (x, gain, shift), static=float(eps), check=check)


def sum_all(a):
    """Sum of all entries as a 1x1 value."""
    return _dispatch(_SUM_ALL, (a,))


def mean_all(a):
    """Mean of all entries as a 1x1 value."""
    return _dispatch(_MEAN_ALL, (a,))


def col_mean(a):
    """Column-wise mean over rows, returned as a single row."""
    return _dispatch(_COL_MEAN, (a,))


def take_row(a, i: int):
    """Row ``i`` as a 1xN matrix."""

    def check(av):
        if not 0 <= i < av.shape[0]:
            raise ShapeError(f"row {i} out of range for shape {av.shape}")

    return _dispatch(_TAKE_ROW, (a,), static=int(i), check=check)


def hstack(parts: Sequence):
    """Concatenate matrices left-to-right; all must share a row count."""
    parts = tuple(parts)
    if not parts:
        raise ContractError("hstack of zero matrices")

    def check(*vals):
        rows = vals[0].shape[0]
        for v in vals:
            if v.shape[0] != rows:
                raise ShapeError(
                    f"hstack row mismatch: {[tuple(x.shape) for x in vals]}"
                )

    return _dispatch(_HSTACK, parts, check=check)


def vstack(parts: Sequence):
    """Concatenate matrices top-to-bottom; all must share a column count."""
    parts = tuple(parts)
    if not parts:
        raise ContractError("vstack of zero matrices")

    def check(*vals):
        cols = vals[0].shape[1]
        for v in vals:
            if v.shape[1] != cols:
                raise ShapeError(
                    f"vstack column mismatch: {[tuple(x.shape) for x in vals]}"
                )

    return _dispatch(_VSTACK, parts, check=check)


def attention_blocks(q, k, v, heads: int = 1, scale: float | None = None,
                     weights_out: list | None = None):
    """Scaled dot-product attention over `heads` column blocks of q, k, v.

    Splits each input into `heads` equal column blocks, computes
    softmax_rows(q_h k_hᵀ · scale) v_h per block, and concatenates the block
    outputs. `scale` defaults to 1/√(block width of q). Pass a list as
    `weights_out` to receive the per-block attention-weight matrices.
    """
    qv, kv, vv = _raw(q), _raw(k), _raw(v)
    if heads < 1:
        raise ContractError(f"heads must be >= 1, got {heads}")
    if qv.shape[1] != kv.shape[1]:
        raise ShapeError(f"q width {qv.shape} does not match k width {kv.shape}")
    if kv.shape[0] != vv.shape[0]:
        raise ShapeError(f"k rows {kv.shape} do not match v rows {vv.shape}")
    if qv.shape[1] % heads or vv.shape[1] % heads:
        raise ShapeError(
            f"widths {qv.shape[1]} and {vv.shape[1]} not divisible by {heads} heads"
        )
    for name, arr in (("q", qv), ("k", kv), ("v", vv)):
        if not np.isfinite(arr).all():
            raise NumericError(f"attention input {name} contains non-finite entries")
    if scale is None:
        scale = 1.0 / math.sqrt(qv.shape[1] // heads)
    static = (heads, float(scale))

    tape = _tape_of(q, k, v)
    if tape is None:
        val, cache = _eval(_ATTENTION, (qv, kv, vv), static)
        out = Matrix._wrap(val)
    else:
        vars_ = tuple(_lift(tape, x) for x in (q, k, v))
        val, cache = _eval(_ATTENTION, tuple(x.value for x in vars_), static)
        out = tape._push(
            _ATTENTION, tuple(x.id for x in vars_), val, static=static, cache=cache
        )
    if weights_out is not None:
        weights_out.extend(Matrix(w) for w in cache)
    return out


def backward(tape: Tape, loss, params: ParamStore) -> None:
    """Accumulate d(loss)/d(parameter) into every gradient slot of ``params``.

    ``loss`` may be a Var or a raw value-id and must refer to a 1x1 value.
    Runs a single reverse sweep; tape nodes are already topologically ordered.
    """
    lid = loss.id if isinstance(loss, Var) else int(loss)
    if not 0 <= lid < len(tape):
        raise ContractError(f"value id {lid} not on this tape")
    if tape._vals[lid].shape != (1, 1):
        raise ContractError(
            f"loss must be scalar (1x1), got shape {tape._vals[lid].shape}"
        )

    ops = tape._ops
    args = tape._args
    vals = tape._vals
    static = tape._static
    cache = tape._cache

    grads: list[np.ndarray | None] = [None] * (lid + 1)
    grads[lid] = np.ones((1, 1))

    def acc(i: int, contribution: np.ndarray, fresh: bool) -> None:
        # `fresh` contributions are newly allocated and may be adopted as-is;
        # aliasing ones (upstream grad arrays, views) must be copied so no
        # array object ever lands in two slots.
        g = grads[i]
        if g is None:
            grads[i] = contribution if fresh else contribution.copy()
        else:
            g += contribution

    for k in range(lid, -1, -1):
        g = grads[k]
        if g is None:
            continue
        op = ops[k]
        if op == _LEAF:
            name = static[k]
            if name is not None:
                grad = params.grad(name)
                if grad.shape != g.shape:
                    raise ContractError(
                        f"parameter {name!r} gradient shape {grad.shape} "
                        f"does not match adjoint {g.shape}"
                    )
                grad += g
            continue
        a = args[k]
        if op == _MATMUL:
            av, bv = vals[a[0]], vals[a[1]]
            acc(a[0], g @ bv.T, True)
            acc(a[1], av.T @ g, True)
        elif op == _MATMUL_NT:
            av, bv = vals[a[0]], vals[a[1]]
            c = static[k]
            da = g @ bv
            db = g.T @ av
            if c != 1.0:
                da *= c
                db *= c
            acc(a[0], da, True)
            acc(a[1], db, True)
        elif op == _ADD:
            acc(a[0], g, False)
            acc(a[1], g, False)
        elif op == _SUB:
            acc(a[0], g, False)
            acc(a[1], -g, True)
        elif op == _HADAMARD:
            acc(a[0], g * vals[a[1]], True)
            acc(a[1], g * vals[a[0]], True)
        elif op == _AFFINE:
            c = static[k][0]
            if c == 1.0:
                acc(a[0], g, False)
            else:
                acc(a[0], g * c, True)
        elif op == _SMUL:
            s = vals[a[0]][0, 0]
            acc(a[0], np.array([[float((g * vals[a[1]]).sum())]]), True)
            acc(a[1], g * s, True)
        elif op == _ROWVEC_ADD:
            acc(a[0], g, False)
            acc(a[1], g.sum(axis=0, keepdims=True), True)
        elif op == _TRANSPOSE:
            acc(a[0], g.T, False)
        elif op == _RELU:
            acc(a[0], g * (vals[a[0]] > 0.0), True)
        elif op == _SIGMOID:
            out = vals[k]
            acc(a[0], g * out * (1.0 - out), True)
        elif op == _SOFTMAX:
            s = vals[k]
            gs = g * s
            acc(a[0], gs - s * gs.sum(axis=1, keepdims=True), True)
        elif op == _LAYER_NORM:
            xhat, inv = cache[k]
            gain = vals[a[1]]
            gx = g * gain
            d_x = inv * (
                gx
                - gx.mean(axis=1, keepdims=True)
                - xhat * np.mean(gx * xhat, axis=1, keepdims=True)
            )
            acc(a[0], d_x, True)
            acc(a[1], (g * xhat).sum(axis=0, keepdims=True), True)
            acc(a[2], g.sum(axis=0, keepdims=True), True)
        elif op == _SUM_ALL:
            acc(a[0], np.full(vals[a[0]].shape, g[0, 0]), True)
        elif op == _MEAN_ALL:
            src = vals[a[0]]
            acc(a[0], np.full(src.shape, g[0, 0] / src.size), True)
        elif op == _COL_MEAN:
            rows = vals[a[0]].shape[0]
            acc(a[0], np.repeat(g * (1.0 / rows), rows, axis=0), True)
        elif op == _TAKE_ROW:
            src = vals[a[0]]
            d = np.zeros(src.shape)
            d[static[k]] = g[0]
            acc(a[0], d, True)
        elif op == _HSTACK:
            offset = 0
            for pid in a:
                w = vals[pid].shape[1]
                acc(pid, g[:, offset : offset + w], False)
                offset += w
        elif op == _VSTACK:
            offset = 0
            for pid in a:
                r = vals[pid].shape[0]
                acc(pid, g[offset : offset + r], False)
                offset += r
        elif op == _ATTENTION:
            qv, kv, vv = vals[a[0]], vals[a[1]], vals[a[2]]
            heads, scale = static[k]
            weights = cache[k]
            dk_w = qv.shape[1] // heads
            dv_w = vv.shape[1] // heads
            dq = np.empty_like(qv)
            dkm = np.empty_like(kv)
            dv = np.empty_like(vv)
            for i in range(heads):
                qh = qv[:, i * dk_w : (i + 1) * dk_w]
                kh = kv[:, i * dk_w : (i + 1) * dk_w]
                vh = vv[:, i * dv_w : (i + 1) * dv_w]
                gh = g[:, i * dv_w : (i + 1) * dv_w]
                s = weights[i]
                ds = gh @ vh.T
                dlog = s * (ds - (ds * s).sum(axis=1, keepdims=True))
                dlog *= scale
                dq[:, i * dk_w : (i + 1) * dk_w] = dlog @ kh
                dkm[:, i * dk_w : (i + 1) * dk_w] = dlog.T @ qh
                dv[:, i * dv_w : (i + 1) * dv_w] = s.T @ gh
            acc(a[0], dq, True)
            acc(a[1], dkm, True)
            acc(a[2], dv, True)
        else:
            raise ContractError(f"unknown opcode {op}")


def grad_check(
    f: Callable[[ParamStore], Var],
    params: ParamStore,
    eps: float = 1e-5,
) -> float:
    """Compare tape gradients of ``f`` with central finite differences.

    ``f`` must build a fresh tape on each call and return a scalar Var.
    For every parameter entry p the finite-difference estimate is
    ``(f(p+eps) - f(p-eps)) / (2 eps)``; the return value is the maximum of
    ``|g_tape - g_fd| / max(1e-8, |g_tape| + |g_fd|)`` over all entries.
    """
    if eps <= 0.0:
        raise ContractError(f"eps must be positive, got {eps}")

    def scalar(out: Var) -> float:
        v = out.item()
        if not math.isfinite(v):
            raise NumericError("grad_check objective produced a non-finite value")
        return v

    params.zero_grads()
    out = f(params)
    backward(out.tape, out, params)
    tape_grads = {name: params.grad(name).copy() for name, _ in params.items()}

    worst = 0.0
    for name, arr in params.items():
        g_name = tape_grads[name]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            f_plus = scalar(f(params))
            arr[idx] = orig - eps
            f_minus = scalar(f(params))
            arr[idx] = orig
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            g_tape = g_name[idx]
            err = abs(g_tape - g_fd) / max(1e-8, abs(g_tape) + abs(g_fd))
            if err > worst:
                worst = err
    params.zero_grads()
    return worst
