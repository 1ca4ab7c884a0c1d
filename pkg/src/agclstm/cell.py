"""Recurrent cell with graph-convolution gates and per-node soft attention.

Each step computes the usual LSTM gates, but every gate transform is a
graph convolution over the skeleton, so a joint's update depends on its
neighborhood. The gated output (the intermediate hidden state) is then
rescaled per node by an attention score in (0,1): the emitted hidden state
is (1 + alpha) times the intermediate one. The recurrent feedback uses the
intermediate hidden state, not the enhanced one; attention only modulates
what the layer emits downstream. A dense per-layer variant (graph ablated
away, gates as full linear maps over the flattened skeleton) lives here
too, sharing the step/layer machinery.
"""

import numpy as np

from .autodiff import Parameter, ShapeError, Tensor, custom_op
from .graph import NUM_SUBSETS
from .graphconv import GraphConvWeights

GATE_ORDER = ("i", "f", "o", "c")


class AttentionParams:
    """Weights of the per-node score network.

    W aggregates the nodes into a query; W_h/W_q/b_s form the scoring
    hidden layer; U_s/b_u reduce it to one scalar per node.
    """

    def __init__(self, d_hidden, d_att, rng, name):
        bh = 1.0 / np.sqrt(d_hidden)
        ba = 1.0 / np.sqrt(d_att)
        self.W = Parameter(rng.uniform(-bh, bh, (d_hidden, d_att)), f"{name}.W")
        self.W_h = Parameter(rng.uniform(-bh, bh, (d_hidden, d_att)), f"{name}.W_h")
        self.W_q = Parameter(rng.uniform(-ba, ba, (d_att, d_att)), f"{name}.W_q")
        self.U_s = Parameter(rng.uniform(-ba, ba, (d_att, 1)), f"{name}.U_s")
        self.b_s = Parameter(np.zeros((1, d_att)), f"{name}.b_s")
        self.b_u = Parameter(np.zeros((1, 1)), f"{name}.b_u")
        self.d_hidden = d_hidden
        self.d_att = d_att

    def params(self):
        return [self.W, self.W_h, self.W_q, self.U_s, self.b_s, self.b_u]


def attention(h_hat, p):
    """Score each node of h_hat (N, d_hidden); returns alpha of shape (N, 1).

    A query summarizes all nodes (sum, project, ReLU); each node's state and
    the query feed a one-layer tanh scorer squashed by a sigmoid, so every
    score lies strictly in (0, 1).
    """
    q = (h_hat.sum(axis=0, keepdims=True) @ p.W).relu()
    s = (h_hat @ p.W_h + q @ p.W_q + p.b_s).tanh()
    return (s @ p.U_s + p.b_u).sigmoid()


class AgcLstmCellParams:
    """Eight graph-conv gate maps, four broadcast biases, attention weights.

    Input-side maps take d_in to d_hidden, hidden-side maps d_hidden to
    d_hidden. Biases are one row of d_hidden per gate, shared by all nodes
    (per-node biases would break permutation equivariance). The forget bias
    starts at 1 so early training does not flush the cell memory.
    `attention=None` gives the attention-free variant: H is the gated
    output itself and no scores are produced.
    """

    def __init__(self, in_dim, d_hidden, rng, name, d_att=None, with_attention=True):
        if d_att is None:
            d_att = max(1, d_hidden // 4)
        self.in_dim = in_dim
        self.d_hidden = d_hidden
        self.W_xi = GraphConvWeights(in_dim, d_hidden, rng, f"{name}.W_xi")
        self.W_hi = GraphConvWeights(d_hidden, d_hidden, rng, f"{name}.W_hi")
        self.W_xf = GraphConvWeights(in_dim, d_hidden, rng, f"{name}.W_xf")
        self.W_hf = GraphConvWeights(d_hidden, d_hidden, rng, f"{name}.W_hf")
        self.W_xo = GraphConvWeights(in_dim, d_hidden, rng, f"{name}.W_xo")
        self.W_ho = GraphConvWeights(d_hidden, d_hidden, rng, f"{name}.W_ho")
        self.W_xc = GraphConvWeights(in_dim, d_hidden, rng, f"{name}.W_xc")
        self.W_hc = GraphConvWeights(d_hidden, d_hidden, rng, f"{name}.W_hc")
        self.b_i = Parameter(np.zeros((1, d_hidden)), f"{name}.b_i")
        self.b_f = Parameter(np.ones((1, d_hidden)), f"{name}.b_f")
        self.b_o = Parameter(np.zeros((1, d_hidden)), f"{name}.b_o")
        self.b_c = Parameter(np.zeros((1, d_hidden)), f"{name}.b_c")
        self.attention = (AttentionParams(d_hidden, d_att, rng, f"{name}.att")
                          if with_attention else None)

    def _x_maps(self):
        return (self.W_xi, self.W_xf, self.W_xo, self.W_xc)

    def _h_maps(self):
        return (self.W_hi, self.W_hf, self.W_ho, self.W_hc)

    def _biases(self):
        return (self.b_i, self.b_f, self.b_o, self.b_c)

    def params(self):
        out = []
        for m in self._x_maps() + self._h_maps():
            out.extend(m.params())
        out.extend(self._biases())
        if self.attention is not None:
            out.extend(self.attention.params())
        return out


class AgcLstmState:
    """One step's tensors: cell memory C, emitted H, intermediate H_hat,
    and per-node attention scores alpha (shape (N, 1); None when the cell
    has no attention)."""

    __slots__ = ("C", "H", "H_hat", "alpha")

    def __init__(self, C, H, H_hat, alpha):
        self.C = C
        self.H = H
        self.H_hat = H_hat
        self.alpha = alpha


def zero_state(n, d_hidden):
    z = Tensor(np.zeros((n, d_hidden)))
    return AgcLstmState(C=z, H=z, H_hat=z, alpha=None)


class _StackedGraphGates:
    """The four gates' graph-conv weights concatenated column-wise per subset.

    One fused tape node per step computes all pre-activations together;
    backward slices gradients back into the individual parameters. Rebuilt
    whenever parameters may have changed (once per sequence is enough).
    """

    def __init__(self, p, stack):
        d = p.d_hidden
        for g, wx, wh in zip(GATE_ORDER, p._x_maps(), p._h_maps()):
            for w in wx.w:
                if w.data.shape != (p.in_dim, d):
                    raise ShapeError(f"gate {g}: input-side map {w.data.shape}"
                                     f" does not fit ({p.in_dim}, {d})")
            for w in wh.w:
                if w.data.shape != (d, d):
                    raise ShapeError(f"gate {g}: hidden-side map {w.data.shape}"
                                     f" does not fit ({d}, {d})")
        self.p = p
        self.mats = stack.matrices
        self.wx = [np.concatenate([m.w[k].data for m in p._x_maps()], axis=1)
                   for k in range(NUM_SUBSETS)]
        self.wh = [np.concatenate([m.w[k].data for m in p._h_maps()], axis=1)
                   for k in range(NUM_SUBSETS)]
        self.b = np.concatenate([b.data for b in p._biases()], axis=1)
        self.leaf_params = p.params()

    def apply(self, x, h):
        p, d = self.p, self.p.d_hidden
        if x.ndim != 2 or x.shape[1] != p.in_dim:
            raise ShapeError(f"gate i: input features {x.shape} do not fit width {p.in_dim}")
        if h.shape != (x.shape[0], d):
            raise ShapeError(f"gate i: hidden state {h.shape} does not fit {(x.shape[0], d)}")
        mats = self.mats
        ax = [mats[k] @ x.data for k in range(NUM_SUBSETS)]
        ah = [mats[k] @ h.data for k in range(NUM_SUBSETS)]
        pre = np.broadcast_to(self.b, (x.shape[0], 4 * d)).copy()
        for k in range(NUM_SUBSETS):
            pre += ax[k] @ self.wx[k]
            pre += ah[k] @ self.wh[k]

        def bwd(g):
            if x.requires_grad:
                dx = np.zeros_like(x.data)
                for k in range(NUM_SUBSETS):
                    dx += mats[k].T @ (g @ self.wx[k].T)
                x.accumulate_grad(dx)
            if h.requires_grad:
                dh = np.zeros_like(h.data)
                for k in range(NUM_SUBSETS):
                    dh += mats[k].T @ (g @ self.wh[k].T)
                h.accumulate_grad(dh)
            for k in range(NUM_SUBSETS):
                gx = ax[k].T @ g
                gh = ah[k].T @ g
                for gi, (mx, mh) in enumerate(zip(p._x_maps(), p._h_maps())):
                    mx.w[k].accumulate_grad(gx[:, gi * d:(gi + 1) * d])
                    mh.w[k].accumulate_grad(gh[:, gi * d:(gi + 1) * d])
            gb = g.sum(axis=0, keepdims=True)
            for gi, bp in enumerate(p._biases()):
                bp.accumulate_grad(gb[:, gi * d:(gi + 1) * d])

        return custom_op(pre, (x, h, *self.leaf_params), bwd)


class DenseCellParams:
    """Gate maps as full linear layers over the flattened skeleton.

    Stands in for AgcLstmCellParams when the graph is ablated away: every
    joint's update may read every joint's features, and edges are ignored
    entirely. Same bias layout; attention optional (off by default, this is
    the plain-recurrence baseline).
    """

    def __init__(self, num_joints, in_dim, d_hidden, rng, name,
                 d_att=None, with_attention=False):
        if d_att is None:
            d_att = max(1, d_hidden // 4)
        n = num_joints
        bx = 1.0 / np.sqrt(n * in_dim)
        bh = 1.0 / np.sqrt(n * d_hidden)
        self.num_joints = n
        self.in_dim = in_dim
        self.d_hidden = d_hidden
        self.W_xi, self.W_xf, self.W_xo, self.W_xc = (
            Parameter(rng.uniform(-bx, bx, (n * in_dim, n * d_hidden)), f"{name}.W_x{g}")
            for g in GATE_ORDER)
        self.W_hi, self.W_hf, self.W_ho, self.W_hc = (
            Parameter(rng.uniform(-bh, bh, (n * d_hidden, n * d_hidden)), f"{name}.W_h{g}")
            for g in GATE_ORDER)
        self.b_i = Parameter(np.zeros((1, d_hidden)), f"{name}.b_i")
        self.b_f = Parameter(np.ones((1, d_hidden)), f"{name}.b_f")
        self.b_o = Parameter(np.zeros((1, d_hidden)), f"{name}.b_o")
        self.b_c = Parameter(np.zeros((1, d_hidden)), f"{name}.b_c")
        self.attention = (AttentionParams(d_hidden, d_att, rng, f"{name}.att")
                          if with_attention else None)

    def _x_maps(self):
        return (self.W_xi, self.W_xf, self.W_xo, self.W_xc)

    def _h_maps(self):
        return (self.W_hi, self.W_hf, self.W_ho, self.W_hc)

    def _biases(self):
        return (self.b_i, self.b_f, self.b_o, self.b_c)

    def params(self):
        out = list(self._x_maps() + self._h_maps() + self._biases())
        if self.attention is not None:
            out.extend(self.attention.params())
        return out


class _DenseGates:
    """Fused pre-activation for the flattened dense variant (graph unused)."""

    def __init__(self, p, stack=None):
        self.p = p

    def apply(self, x, h):
        p = self.p
        n, d = p.num_joints, p.d_hidden
        if x.shape != (n, p.in_dim):
            raise ShapeError(f"gate i: input features {x.shape} do not fit {(n, p.in_dim)}")
        if h.shape != (n, d):
            raise ShapeError(f"gate i: hidden state {h.shape} does not fit {(n, d)}")
        xf = x.data.reshape(1, -1)
        hf = h.data.reshape(1, -1)
        pre = np.empty((n, 4 * d))
        for gi, (wx, wh) in enumerate(zip(p._x_maps(), p._h_maps())):
            pre[:, gi * d:(gi + 1) * d] = ((xf @ wx.data) + (hf @ wh.data)).reshape(n, d)
        pre += np.concatenate([b.data for b in p._biases()], axis=1)

        def bwd(g):
            dxf = np.zeros_like(xf) if x.requires_grad else None
            dhf = np.zeros_like(hf) if h.requires_grad else None
            for gi, (wx, wh, b) in enumerate(zip(p._x_maps(), p._h_maps(), p._biases())):
                gf = g[:, gi * d:(gi + 1) * d].reshape(1, -1)
                if dxf is not None:
                    dxf += gf @ wx.data.T
                if dhf is not None:
                    dhf += gf @ wh.data.T
                wx.accumulate_grad(xf.T @ gf)
                wh.accumulate_grad(hf.T @ gf)
                b.accumulate_grad(g[:, gi * d:(gi + 1) * d].sum(axis=0, keepdims=True))
            if dxf is not None:
                x.accumulate_grad(dxf.reshape(x.shape))
            if dhf is not None:
                h.accumulate_grad(dhf.reshape(h.shape))

        return custom_op(pre, (x, h, *p.params()), bwd)


def _gates_for(p, stack):
    if isinstance(p, DenseCellParams):
        return _DenseGates(p, stack)
    return _StackedGraphGates(p, stack)


def _step(x_t, prev, gates, p):
    d = p.d_hidden
    pre = gates.apply(x_t, prev.H_hat)
    i = pre.slice_cols(0, d).sigmoid()
    f = pre.slice_cols(d, 2 * d).sigmoid()
    o = pre.slice_cols(2 * d, 3 * d).sigmoid()
    u = pre.slice_cols(3 * d, 4 * d).tanh()
    c = f * prev.C + i * u
    h_hat = o * c.tanh()
    if p.attention is not None:
        alpha = attention(h_hat, p.attention)
        h = h_hat + alpha * h_hat
    else:
        alpha = None
        h = h_hat
    return AgcLstmState(C=c, H=h, H_hat=h_hat, alpha=alpha)


def cell_step(x_t, prev, p, stack):
    """One recurrence step on node features x_t (N, d_in).

    Gates i, f, o gate through sigmoids, the candidate through tanh;
    C_t = f*C_prev + i*u, H_hat_t = o*tanh(C_t), H_t = (1+alpha)*H_hat_t.
    """
    if not isinstance(x_t, Tensor):
        x_t = Tensor(x_t)
    return _step(x_t, prev, _gates_for(p, stack), p)


def layer_forward(seq, p, stack):
    """Run the cell over a sequence from a zero initial state.

    Returns one AgcLstmState per step; parameters are shared across steps,
    so their gradients accumulate over the whole sequence.
    """
    if not seq:
        raise ValueError("layer_forward needs a non-empty sequence")
    gates = _gates_for(p, stack)
    first = seq[0] if isinstance(seq[0], Tensor) else Tensor(seq[0])
    state = zero_state(first.shape[0], p.d_hidden)
    out = []
    for x_t in seq:
        if not isinstance(x_t, Tensor):
            x_t = Tensor(x_t)
        state = _step(x_t, state, gates, p)
        out.append(state)
    return out


def temporal_avg_pool(seq, window, stride):
    """Mean-pool a list of (N, d) tensors along time.

    output[t] = mean of input[t*stride : t*stride + window]; trailing
    frames that do not fill a window are dropped.
    """
    if window < 1 or stride < 1:
        raise ValueError(f"window and stride must be >= 1, got {window}/{stride}")
    if len(seq) < window:
        raise ValueError(f"sequence of length {len(seq)} is shorter than pooling "
                         f"window {window}; shorten the pooling schedule")
    if window == 1 and stride == 1:
        return list(seq)
    out_len = (len(seq) - window) // stride + 1
    out = []
    for t in range(out_len):
        acc = seq[t * stride]
        for j in range(1, window):
            acc = acc + seq[t * stride + j]
        out.append(acc * (1.0 / window))
    return out
