"""Matrix-form graph convolution against a per-node summation oracle."""

import numpy as np
import pytest

from agclstm.autodiff import Parameter, ShapeError, Tensor, zero_grads
from agclstm.graph import NUM_SUBSETS, SkeletonGraph, build_adjacency_stack
from agclstm.graphconv import GraphConvWeights, graph_conv

from test_graph import random_graph


def node_loop_oracle(stack, x, weights):
    """y[v] = sum_k sum_u A_k[v,u] * (x[u] @ W_k), one node at a time."""
    n = x.shape[0]
    out_dim = weights[0].shape[1]
    y = np.zeros((n, out_dim))
    for v in range(n):
        for k in range(NUM_SUBSETS):
            for u in range(n):
                a = stack.matrices[k][v, u]
                if a != 0.0:
                    y[v] += a * (x[u] @ weights[k])
    return y


def make(rng, n=None, in_dim=4, out_dim=3):
    g = random_graph(rng, n or int(rng.integers(2, 11)))
    stack = build_adjacency_stack(g)
    w = GraphConvWeights(in_dim, out_dim, rng, "w")
    x = rng.standard_normal((g.num_joints, in_dim))
    return stack, x, w


def test_matrix_form_matches_node_loop_on_100_random_graphs():
    rng = np.random.default_rng(20)
    for _ in range(100):
        stack, x, w = make(rng)
        got = graph_conv(stack, Tensor(x), w).data
        want = node_loop_oracle(stack, x, [p.data for p in w.params()])
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_weight_init_bounds_and_names():
    rng = np.random.default_rng(21)
    w = GraphConvWeights(16, 8, rng, "gc")
    assert [p.name for p in w.params()] == ["gc.w0", "gc.w1", "gc.w2"]
    for p in w.params():
        assert p.shape == (16, 8)
        assert np.abs(p.data).max() <= 1.0 / np.sqrt(16)


def test_gradients_match_central_differences():
    rng = np.random.default_rng(22)
    stack, x, w = make(rng, n=5)
    xt = Parameter(x, "x")
    target = rng.standard_normal((stack.num_joints, 3))

    def build():
        d = graph_conv(stack, xt, w) - Tensor(target)
        return (d * d).sum()

    params = [xt] + w.params()
    zero_grads(params)
    build().backward()
    analytic = [p.grad.copy() for p in params]
    h = 1e-6
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = build().item()
            flat[i] = orig - h
            lm = build().item()
            flat[i] = orig
            num = (lp - lm) / (2 * h)
            assert a.reshape(-1)[i] == pytest.approx(num, rel=1e-5, abs=1e-8)


def test_gradient_flows_only_within_reach():
    # x feeds node v's output only if some subset links v to x's node
    g = SkeletonGraph(num_joints=4, edges=((0, 1), (1, 2), (2, 3)), root=0)
    stack = build_adjacency_stack(g)
    rng = np.random.default_rng(23)
    w = GraphConvWeights(2, 2, rng, "w")
    xt = Parameter(rng.standard_normal((4, 2)), "x")
    zero_grads([xt])
    y = graph_conv(stack, xt, w)
    y.slice_cols(0, 2).sum(axis=1, keepdims=True).slice_cols(0, 1).reshape(1, 4).slice_cols(0, 1).sum().backward()
    # node 0's output depends on nodes 0 and 1 alone (1-hop neighborhood)
    assert np.abs(xt.grad[0]).sum() > 0
    assert np.abs(xt.grad[1]).sum() > 0
    np.testing.assert_allclose(xt.grad[2:], 0.0)


def test_shape_mismatches_raise():
    rng = np.random.default_rng(24)
    stack, x, w = make(rng, n=4, in_dim=4)
    with pytest.raises(ShapeError):
        graph_conv(stack, Tensor(np.ones((3, 4))), w)  # wrong node count
    with pytest.raises(ShapeError):
        graph_conv(stack, Tensor(np.ones((4, 5))), w)  # wrong width
