"""Graph-branch tests.

Oracles: hand-evaluated normalized adjacencies (degrees worked out on paper),
a permutation-equivariance property with explicit permutation matrices, and
power iteration for the spectral-radius bound.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtfnet import numerics as nm
from gtfnet.errors import ContractError, IngestError, ShapeError
from gtfnet.graph import (
    GcnStack,
    build_snapshot,
    gcn_forward,
    node_input_features,
    normalize_adjacency,
    stack_node_features,
)
from gtfnet.numerics import Matrix, ParamStore, Tape, grad_check
from gtfnet.temporal import MetricWindow


def random_snapshot(rng, n):
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.45:
                edges.append((f"n{i}", f"n{j}"))
    return build_snapshot(edges, [f"n{i}" for i in range(n)])


class TestBuildSnapshot:
    def test_dedup(self):
        snap = build_snapshot([("a", "b"), ("a", "b")], ["a", "b"])
        assert len(snap.edges) == 1

    def test_empty_edges_single_node(self):
        snap = build_snapshot([], ["a"])
        assert snap.edges == () and snap.node_ids == ("a",)

    def test_direction_flip_same_adjacency(self):
        fwd = normalize_adjacency(build_snapshot([("a", "b")], ["a", "b"]))
        rev = normalize_adjacency(build_snapshot([("b", "a")], ["a", "b"]))
        assert fwd.matrix == rev.matrix

    def test_unknown_id_named(self):
        with pytest.raises(IngestError) as ei:
            build_snapshot([("a", "ghost")], ["a", "b"])
        assert "ghost" in str(ei.value)

    def test_self_calls_dropped(self):
        snap = build_snapshot([("a", "a"), ("a", "b")], ["a", "b"])
        assert snap.edges == ((0, 1),)

    def test_canonical_node_order(self):
        snap = build_snapshot([], ["z", "a", "m"])
        assert snap.node_ids == ("a", "m", "z")


class TestNormalizeAdjacency:
    def test_single_isolated_node(self):
        # [DERIVED] A~ = 1, D~ = 1
        out = normalize_adjacency(build_snapshot([], ["a"]))
        assert out.matrix == Matrix([[1.0]])

    def test_two_nodes_one_edge(self):
        # [DERIVED] A~ all-ones, degrees (2, 2)
        out = normalize_adjacency(build_snapshot([("a", "b")], ["a", "b"]))
        assert out.matrix.allclose(Matrix([[0.5, 0.5], [0.5, 0.5]]), tol=1e-15)

    def test_path_graph(self):
        # [DERIVED] degrees with self-loops: (2, 3, 2)
        out = normalize_adjacency(
            build_snapshot([("a", "b"), ("b", "c")], ["a", "b", "c"])
        ).matrix.data
        s = 1.0 / math.sqrt(6.0)
        expected = np.array([[0.5, s, 0.0], [s, 1.0 / 3.0, s], [0.0, s, 0.5]])
        assert np.abs(out - expected).max() < 1e-15

    def test_duplicate_edges_invariant(self):
        one = normalize_adjacency(build_snapshot([("a", "b")], ["a", "b"]))
        many = normalize_adjacency(
            build_snapshot([("a", "b"), ("b", "a"), ("a", "b")], ["a", "b"])
        )
        assert one.matrix == many.matrix

    @given(st.integers(0, 2**32 - 1), st.integers(4, 8))
    @settings(max_examples=60, deadline=None)
    def test_symmetric_and_contractive(self, seed, n):
        rng = np.random.default_rng(seed)
        a = normalize_adjacency(random_snapshot(rng, n)).matrix.data
        assert np.abs(a - a.T).max() <= 1e-12
        assert (a >= 0.0).all()
        assert (np.diag(a) > 0.0).all()
        # spectral radius via power iteration
        v = np.ones(n) / math.sqrt(n)
        for _ in range(200):
            w = a @ v
            v = w / np.linalg.norm(w)
        radius = abs(v @ (a @ v))
        assert radius <= 1.0 + 1e-9


class TestGcnForward:
    def test_isolated_identity_fixed_point(self):
        snap = build_snapshot([], ["a", "b", "c"])
        adj = normalize_adjacency(snap)
        h0 = Matrix([[1.0, 0.0], [0.5, 2.0], [0.0, 3.0]])
        stack = GcnStack((Matrix.identity(2), Matrix.identity(2)))
        assert gcn_forward(h0, adj, stack) == h0

    def test_zero_weights_zero_output(self):
        snap = build_snapshot([("a", "b")], ["a", "b"])
        out = gcn_forward(
            Matrix([[1.0], [2.0]]),
            normalize_adjacency(snap),
            GcnStack((Matrix.zeros(1, 3),)),
        )
        assert out == Matrix.zeros(2, 3)

    def test_hand_two_node_average(self):
        # [DERIVED] adjacency all-0.5 averages the two rows: (2+0)/2 = 1
        snap = build_snapshot([("a", "b")], ["a", "b"])
        out = gcn_forward(
            Matrix([[2.0], [0.0]]),
            normalize_adjacency(snap),
            GcnStack((Matrix([[1.0]]),)),
        )
        assert out.allclose(Matrix([[1.0], [1.0]]), tol=1e-15)

    def test_dimension_mismatch(self):
        snap = build_snapshot([], ["a", "b"])
        with pytest.raises(ShapeError):
            gcn_forward(
                Matrix([[1.0]]),
                normalize_adjacency(snap),
                GcnStack((Matrix([[1.0]]),)),
            )

    def test_chain_validation(self):
        with pytest.raises(ShapeError):
            GcnStack((Matrix.zeros(2, 3), Matrix.zeros(4, 2)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        n = 5
        snap = random_snapshot(rng, n)
        adj = normalize_adjacency(snap)
        h0 = rng.normal(size=(n, 3))
        stack = GcnStack(
            (Matrix(rng.normal(size=(3, 4))), Matrix(rng.normal(size=(4, 2))))
        )
        base = gcn_forward(Matrix(h0), adj, stack).data

        perm = rng.permutation(n)
        pi = np.eye(n)[perm]
        from gtfnet.graph import NormalizedAdjacency

        adj_p = NormalizedAdjacency(Matrix(pi @ adj.matrix.data @ pi.T))
        out_p = gcn_forward(Matrix(pi @ h0), adj_p, stack).data
        assert np.abs(out_p - pi @ base).max() < 1e-9

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        snap = random_snapshot(rng, 4)
        adj = normalize_adjacency(snap)
        h0 = rng.normal(size=(4, 3))
        ps = ParamStore()
        ps.add("w0", rng.normal(size=(3, 5)))
        ps.add("w1", rng.normal(size=(5, 2)))

        def f(p):
            t = Tape()
            stack = GcnStack((t.param(p, "w0"), t.param(p, "w1")))
            out = gcn_forward(Matrix(h0), adj, stack, tape=t)
            return nm.sum_all(nm.hadamard(out, out))

        assert grad_check(f, ps) < 1e-4


class TestNodeInputFeatures:
    def test_constant_series(self):
        w = MetricWindow(0, Matrix([[3.0, 7.0], [3.0, 7.0]]))
        assert node_input_features(w) == Matrix([[3.0, 7.0, 3.0, 7.0]])

    def test_mean_and_last(self):
        # [DERIVED] mean(0, 4) = 2, last = 4
        w = MetricWindow(0, Matrix([[0.0], [4.0]]))
        assert node_input_features(w) == Matrix([[2.0, 4.0]])

    def test_all_zero(self):
        w = MetricWindow(0, Matrix.zeros(3, 2))
        assert node_input_features(w) == Matrix.zeros(1, 4)

    def test_stacking(self):
        ws = [MetricWindow(i, Matrix([[float(i)]])) for i in range(3)]
        assert stack_node_features(ws) == Matrix([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        with pytest.raises(ContractError):
            stack_node_features([])
