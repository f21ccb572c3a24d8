"""A tour of the matrix-granularity autodiff tape.

The numerics module records operations (matmul, relu, softmax rows, layer
norm, ...) on a tape whose entries hold whole float64 matrices. One backward
pass then fills the gradient slots of a ParamStore. Everything below checks
the tape against either hand math or central finite differences.
"""

import numpy as np

from gtfnet import numerics as nm
from gtfnet.numerics import Matrix, ParamStore, Tape, backward, grad_check

rng = np.random.default_rng(0)

# --- a scalar chain with a hand-checkable derivative -----------------------
# f(w) = sum(relu(x @ w)); df/dw = x^T 1[xw > 0]
ps = ParamStore()
ps.add("w", rng.normal(size=(3, 2)))
x = Matrix(rng.normal(size=(4, 3)))

tape = Tape()
w = tape.param(ps, "w")
loss = nm.sum_all(nm.relu(nm.matmul(x, w)))
ps.zero_grads()
backward(tape, loss, ps)

mask = (x.data @ ps.value("w")) > 0
by_hand = x.data.T @ mask.astype(float)
print("relu chain: tape grad matches hand derivative:",
      np.allclose(ps.grad("w"), by_hand, atol=1e-12))

# --- the same story, but through softmax and a second parameter ------------
ps.add("v", rng.normal(size=(2, 2)))

def f(params):
    t = Tape()
    w_ = t.param(params, "w")
    v_ = t.param(params, "v")
    h = nm.softmax_rows(nm.matmul(x, w_))
    # scale the objective down: finite differences get noisy on O(1) values
    return nm.affine(nm.sum_all(nm.matmul(h, v_)), 0.01)

err = grad_check(f, ps)
print(f"softmax + two-parameter chain: max relative error vs FD = {err:.2e}")

# --- gradients flow through layer norm and attention too --------------------
ps2 = ParamStore()
ps2.add("q", rng.normal(size=(5, 4)) * 0.3)
gain = Matrix(np.ones((1, 4)))
shift = Matrix(np.zeros((1, 4)))
k = Matrix(rng.normal(size=(5, 4)))
v = Matrix(rng.normal(size=(5, 4)))

def g(params):
    t = Tape()
    q = t.param(params, "q")
    h = nm.attention_blocks(q, t.constant(k), t.constant(v), heads=2, scale=0.5)
    h = nm.layer_norm(h, t.constant(gain), t.constant(shift))
    return nm.affine(nm.sum_all(h), 0.005)

print(f"attention + layer norm: max relative error vs FD = {grad_check(g, ps2):.2e}")

# --- eager mode: the same ops work on plain Matrix values -------------------
a = Matrix([[1.0, 2.0], [3.0, 4.0]])
print("eager softmax rows sum to:", nm.softmax_rows(a).data.sum(axis=1))
