"""Recurrent cell against hand-unrolled scalar oracles, plus the fused gate paths."""

import numpy as np
import pytest

from agclstm.autodiff import ShapeError, Tensor, zero_grads
from agclstm.cell import (
    AgcLstmCellParams, AttentionParams, DenseCellParams, attention, cell_step,
    layer_forward, temporal_avg_pool, zero_state,
)
from agclstm.graph import SkeletonGraph, build_adjacency_stack

CHAIN5 = SkeletonGraph(num_joints=5, edges=((0, 1), (1, 2), (2, 3), (3, 4)), root=2)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def attention_oracle(h_hat, p):
    """Query from the node sum, then a per-node scalar score."""
    q = np.maximum(h_hat.sum(axis=0, keepdims=True) @ p.W.data, 0.0)
    s = np.tanh(h_hat @ p.W_h.data + q @ p.W_q.data + p.b_s.data)
    return sigmoid(s @ p.U_s.data + p.b_u.data)


def gconv_oracle(stack, x, w):
    acc = np.zeros((x.shape[0], w.out_dim))
    for k, wk in enumerate(w.w):
        acc += stack.matrices[k] @ x @ wk.data
    return acc


def cell_step_oracle(stack, x, prev_c, prev_h, p):
    """Gate equations written out longhand with numpy."""
    pre_i = gconv_oracle(stack, x, p.W_xi) + gconv_oracle(stack, prev_h, p.W_hi) + p.b_i.data
    pre_f = gconv_oracle(stack, x, p.W_xf) + gconv_oracle(stack, prev_h, p.W_hf) + p.b_f.data
    pre_o = gconv_oracle(stack, x, p.W_xo) + gconv_oracle(stack, prev_h, p.W_ho) + p.b_o.data
    pre_u = gconv_oracle(stack, x, p.W_xc) + gconv_oracle(stack, prev_h, p.W_hc) + p.b_c.data
    i, f, o = sigmoid(pre_i), sigmoid(pre_f), sigmoid(pre_o)
    u = np.tanh(pre_u)
    c = f * prev_c + i * u
    h_hat = o * np.tanh(c)
    if p.attention is None:
        return c, h_hat, h_hat, None
    alpha = attention_oracle(h_hat, p.attention)
    return c, h_hat, h_hat + alpha * h_hat, alpha


# -- attention ----------------------------------------------------------------


def test_attention_matches_formula_oracle():
    rng = np.random.default_rng(30)
    for _ in range(20):
        n, d, da = rng.integers(2, 7), int(rng.integers(2, 9)), int(rng.integers(1, 5))
        p = AttentionParams(d, da, rng, "att")
        h_hat = rng.standard_normal((n, d))
        got = attention(Tensor(h_hat), p).data
        np.testing.assert_allclose(got, attention_oracle(h_hat, p), atol=1e-12)
        assert got.shape == (n, 1)


def test_attention_scores_strictly_inside_unit_interval():
    rng = np.random.default_rng(31)
    p = AttentionParams(6, 3, rng, "att")
    for _ in range(200):
        a = attention(Tensor(5.0 * rng.standard_normal((4, 6))), p).data
        assert (a > 0).all() and (a < 1).all()


def test_attention_param_shapes_and_zero_biases():
    rng = np.random.default_rng(32)
    p = AttentionParams(8, 2, rng, "att")
    assert p.W.shape == (8, 2) and p.W_h.shape == (8, 2)
    assert p.W_q.shape == (2, 2) and p.U_s.shape == (2, 1)
    np.testing.assert_array_equal(p.b_s.data, np.zeros((1, 2)))
    np.testing.assert_array_equal(p.b_u.data, np.zeros((1, 1)))


# -- cell step ----------------------------------------------------------------


def test_cell_step_matches_equation_oracle():
    rng = np.random.default_rng(33)
    stack = build_adjacency_stack(CHAIN5)
    p = AgcLstmCellParams(3, 6, rng, "cell")
    prev = zero_state(5, 6)
    for t in range(4):  # iterate so the recurrent path is exercised too
        x = rng.standard_normal((5, 3))
        c, h_hat, h, alpha = cell_step_oracle(stack, x, prev.C.data,
                                              prev.H_hat.data, p)
        st = cell_step(Tensor(x), prev, p, stack)
        np.testing.assert_allclose(st.C.data, c, atol=1e-12)
        np.testing.assert_allclose(st.H_hat.data, h_hat, atol=1e-12)
        np.testing.assert_allclose(st.H.data, h, atol=1e-12)
        np.testing.assert_allclose(st.alpha.data, alpha, atol=1e-12)
        prev = st


def test_enhancement_identity_h_equals_one_plus_alpha_h_hat():
    rng = np.random.default_rng(34)
    stack = build_adjacency_stack(CHAIN5)
    p = AgcLstmCellParams(3, 4, rng, "cell")
    st = cell_step(Tensor(rng.standard_normal((5, 3))), zero_state(5, 4), p, stack)
    np.testing.assert_allclose(st.H.data, (1.0 + st.alpha.data) * st.H_hat.data,
                               atol=1e-12)


def test_zeroed_attention_head_gives_exactly_1p5x_plain_cell():
    rng = np.random.default_rng(35)
    stack = build_adjacency_stack(CHAIN5)
    p_att = AgcLstmCellParams(3, 4, rng, "a")
    p_plain = AgcLstmCellParams(3, 4, np.random.default_rng(35), "b",
                                with_attention=False)
    # same gate weights; only the attention head differs
    for src, dst in zip(p_att._x_maps() + p_att._h_maps(),
                        p_plain._x_maps() + p_plain._h_maps()):
        for ws, wd in zip(src.params(), dst.params()):
            wd.data[...] = ws.data
    p_att.attention.U_s.data[...] = 0.0  # scores collapse to sigmoid(0) = 1/2
    p_att.attention.b_u.data[...] = 0.0
    sa, sp = zero_state(5, 4), zero_state(5, 4)
    for t in range(5):
        x = Tensor(rng.standard_normal((5, 3)))
        sa = cell_step(x, sa, p_att, stack)
        sp = cell_step(x, sp, p_plain, stack)
        np.testing.assert_allclose(sa.alpha.data, 0.5, atol=1e-15)
        np.testing.assert_allclose(sa.H.data, 1.5 * sp.H.data, atol=1e-12)
        np.testing.assert_allclose(sa.C.data, sp.C.data, atol=1e-12)


def test_forget_bias_starts_at_one_other_biases_zero():
    rng = np.random.default_rng(36)
    p = AgcLstmCellParams(3, 4, rng, "cell")
    np.testing.assert_array_equal(p.b_f.data, np.ones((1, 4)))
    np.testing.assert_array_equal(p.b_i.data, np.zeros((1, 4)))
    np.testing.assert_array_equal(p.b_o.data, np.zeros((1, 4)))
    np.testing.assert_array_equal(p.b_c.data, np.zeros((1, 4)))


def test_default_attention_width_is_quarter_hidden():
    rng = np.random.default_rng(37)
    p = AgcLstmCellParams(3, 16, rng, "cell")
    assert p.attention.W.shape == (16, 4)


def test_param_count_and_unique_names():
    rng = np.random.default_rng(38)
    p = AgcLstmCellParams(3, 8, rng, "cell")
    names = [q.name for q in p.params()]
    assert len(names) == len(set(names))
    # 8 gate maps of 3 subset matrices, 4 biases, 6 attention tensors
    assert len(names) == 8 * 3 + 4 + 6
    p2 = AgcLstmCellParams(3, 8, rng, "cell2", with_attention=False)
    assert len(p2.params()) == 8 * 3 + 4


# -- dense cell ---------------------------------------------------------------


def dense_step_oracle(x, prev_c, prev_h, p):
    n, d = prev_c.shape
    xf = x.reshape(1, -1)
    hf = prev_h.reshape(1, -1)

    def gate(wx, wh, b):
        return (xf @ wx.data + hf @ wh.data).reshape(n, d) + b.data

    i = sigmoid(gate(p.W_xi, p.W_hi, p.b_i))
    f = sigmoid(gate(p.W_xf, p.W_hf, p.b_f))
    o = sigmoid(gate(p.W_xo, p.W_ho, p.b_o))
    u = np.tanh(gate(p.W_xc, p.W_hc, p.b_c))
    c = f * prev_c + i * u
    h_hat = o * np.tanh(c)
    return c, h_hat


def test_dense_cell_matches_flattened_oracle():
    rng = np.random.default_rng(39)
    p = DenseCellParams(4, 3, 5, rng, "dense")
    prev = zero_state(4, 5)
    for t in range(3):
        x = rng.standard_normal((4, 3))
        c, h_hat = dense_step_oracle(x, prev.C.data, prev.H_hat.data, p)
        st = cell_step(Tensor(x), prev, p, stack=None)
        np.testing.assert_allclose(st.C.data, c, atol=1e-12)
        np.testing.assert_allclose(st.H_hat.data, h_hat, atol=1e-12)
        assert st.alpha is None
        assert st.H is st.H_hat
        prev = st


def test_dense_cell_mixes_all_joints():
    # joint 3's input must reach joint 0's state through the flat maps
    rng = np.random.default_rng(40)
    p = DenseCellParams(4, 2, 3, rng, "dense")
    x0 = np.zeros((4, 2))
    x1 = np.zeros((4, 2))
    x1[3, :] = 1.0
    s0 = cell_step(Tensor(x0), zero_state(4, 3), p, None)
    s1 = cell_step(Tensor(x1), zero_state(4, 3), p, None)
    assert np.abs(s0.H.data[0] - s1.H.data[0]).max() > 1e-9


# -- gradients through a short sequence ---------------------------------------


@pytest.mark.parametrize("dense", [False, True])
def test_cell_gradients_match_central_differences(dense):
    rng = np.random.default_rng(41)
    if dense:
        p = DenseCellParams(3, 2, 3, rng, "cell")
        stack = None
        n = 3
    else:
        p = AgcLstmCellParams(2, 3, rng, "cell", d_att=2)
        stack = build_adjacency_stack(SkeletonGraph(
            num_joints=3, edges=((0, 1), (1, 2)), root=0))
        n = 3
    xs = [rng.standard_normal((n, 2)) * 0.5 for _ in range(3)]

    def build():
        st = zero_state(n, 3)
        for x in xs:
            st = cell_step(Tensor(x), st, p, stack)
        return (st.H * st.H).sum() + st.C.sum()

    params = p.params()
    zero_grads(params)
    build().backward()
    analytic = [q.grad.copy() for q in params]
    h = 1e-6
    prng = np.random.default_rng(42)
    for q, a in zip(params, analytic):
        flat = q.data.reshape(-1)
        for i in prng.choice(flat.size, size=min(4, flat.size), replace=False):
            orig = flat[i]
            flat[i] = orig + h
            lp = build().item()
            flat[i] = orig - h
            lm = build().item()
            flat[i] = orig
            num = (lp - lm) / (2 * h)
            assert a.reshape(-1)[i] == pytest.approx(num, rel=5e-5, abs=1e-9), q.name


def test_gate_width_mismatch_reports_gate_name():
    rng = np.random.default_rng(43)
    stack = build_adjacency_stack(CHAIN5)
    p = AgcLstmCellParams(3, 4, rng, "cell")
    p.W_xf.w[1].data = np.zeros((3, 5))  # sabotage one subset matrix
    with pytest.raises(ShapeError) as e:
        cell_step(Tensor(np.zeros((5, 3))), zero_state(5, 4), p, stack)
    assert "f" in str(e.value)


# -- layer and pooling --------------------------------------------------------


def test_layer_forward_matches_manual_step_loop():
    rng = np.random.default_rng(44)
    stack = build_adjacency_stack(CHAIN5)
    p = AgcLstmCellParams(3, 4, rng, "cell")
    seq = [Tensor(rng.standard_normal((5, 3))) for _ in range(6)]
    states = layer_forward(seq, p, stack)
    assert len(states) == 6
    prev = zero_state(5, 4)
    for x, st in zip(seq, states):
        prev = cell_step(x, prev, p, stack)
        np.testing.assert_allclose(st.H.data, prev.H.data, atol=1e-12)


def test_layer_forward_rejects_empty_sequence():
    rng = np.random.default_rng(45)
    p = AgcLstmCellParams(3, 4, rng, "cell")
    with pytest.raises(ValueError):
        layer_forward([], p, build_adjacency_stack(CHAIN5))


def pool_oracle(arrs, window, stride):
    out = []
    t = 0
    while t + window <= len(arrs):
        out.append(sum(arrs[t:t + window]) / window)
        t += stride
    return out


@pytest.mark.parametrize("t_len,window,stride", [
    (8, 2, 2), (7, 2, 2), (9, 3, 2), (5, 1, 1), (4, 4, 1), (10, 2, 3),
])
def test_temporal_avg_pool_matches_window_oracle(t_len, window, stride):
    rng = np.random.default_rng(46)
    arrs = [rng.standard_normal((3, 2)) for _ in range(t_len)]
    got = temporal_avg_pool([Tensor(a) for a in arrs], window, stride)
    want = pool_oracle(arrs, window, stride)
    assert len(got) == len(want)
    assert len(got) == (t_len - window) // stride + 1
    for g, w in zip(got, want):
        np.testing.assert_allclose(g.data, w, atol=1e-12)


def test_pool_window_one_is_identity():
    xs = [Tensor(np.ones((2, 2)))]
    out = temporal_avg_pool(xs, 1, 1)
    assert out[0] is xs[0]


def test_pool_refuses_short_sequences_and_bad_args():
    xs = [Tensor(np.ones((2, 2)))]
    with pytest.raises(ValueError):
        temporal_avg_pool(xs, 2, 2)
    with pytest.raises(ValueError):
        temporal_avg_pool(xs, 0, 1)
    with pytest.raises(ValueError):
        temporal_avg_pool(xs, 1, 0)


def test_pool_gradient_spreads_evenly():
    xs = [Tensor(np.full((1, 1), float(v)), requires_grad=True) for v in range(4)]
    out = temporal_avg_pool(xs, 2, 2)
    total = out[0] + out[1]
    total.sum().backward()
    for x in xs:
        assert x.grad[0, 0] == pytest.approx(0.5)
