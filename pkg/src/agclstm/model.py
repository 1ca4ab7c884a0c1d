"""End-to-end network: feature augmentation, three recurrent graph layers
with temporal pooling, global/local readouts, the four-term loss, and the
joint/part/hybrid prediction paths.

The readout at the top layer produces, per time step, a global feature
(sum of enhanced node states) and a local feature (attention-weighted sum
of intermediate node states); each feeds its own linear classifier. The
loss sums both heads' cross-entropies over every top-layer step and adds
two attention regularizers; prediction uses only the final step.
"""

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, concat, dropout, log_softmax_rows, no_grad
from .cell import AgcLstmCellParams, DenseCellParams, layer_forward, temporal_avg_pool
from .graph import build_adjacency_stack, build_part_graph

CHECKPOINT_FORMAT = "agclstm-checkpoint"
CHECKPOINT_VERSION = 1


# -- feature augmentation -----------------------------------------------------


class DenseLstmParams:
    """Plain LSTM weights, four gates stacked column-wise (order i,f,o,c)."""

    def __init__(self, in_dim, d_hidden, rng, name):
        bx = 1.0 / np.sqrt(in_dim)
        bh = 1.0 / np.sqrt(d_hidden)
        self.in_dim = in_dim
        self.d_hidden = d_hidden
        self.W_x = Parameter(rng.uniform(-bx, bx, (in_dim, 4 * d_hidden)), f"{name}.W_x")
        self.W_h = Parameter(rng.uniform(-bh, bh, (d_hidden, 4 * d_hidden)), f"{name}.W_h")
        b = np.zeros((1, 4 * d_hidden))
        b[0, d_hidden:2 * d_hidden] = 1.0  # forget gate starts open
        self.b = Parameter(b, f"{name}.b")

    def params(self):
        return [self.W_x, self.W_h, self.b]


def dense_lstm_step(x, h, c, p):
    """One LSTM step on row-batched inputs x (B, in_dim); returns (h, c)."""
    d = p.d_hidden
    pre = x @ p.W_x + h @ p.W_h + p.b
    i = pre.slice_cols(0, d).sigmoid()
    f = pre.slice_cols(d, 2 * d).sigmoid()
    o = pre.slice_cols(2 * d, 3 * d).sigmoid()
    u = pre.slice_cols(3 * d, 4 * d).tanh()
    c2 = f * c + i * u
    h2 = o * c2.tanh()
    return h2, c2


class FeatureAugmenter:
    """Linear position encoding plus a motion cue, fused by a shared LSTM.

    Each frame's raw per-node coordinates are linearly encoded; the
    difference of consecutive encoded positions (zero at the first frame)
    is concatenated as a motion feature. One LSTM, its parameters shared
    by every node (nodes ride along as batch rows), smooths the pair over
    time into the network input sequence.
    """

    def __init__(self, in_dim, c_enc, d_e, rng, name="aug"):
        b = 1.0 / np.sqrt(in_dim)
        self.in_dim = in_dim
        self.c_enc = c_enc
        self.d_e = d_e
        self.W_pos = Parameter(rng.uniform(-b, b, (in_dim, c_enc)), f"{name}.W_pos")
        self.b_pos = Parameter(np.zeros((1, c_enc)), f"{name}.b_pos")
        self.lstm = DenseLstmParams(2 * c_enc, d_e, rng, f"{name}.lstm")

    def augment_features(self, frames):
        """Encode frames (T, N, in_dim) into a list of (N, d_e) tensors."""
        frames = np.asarray(frames, dtype=np.float64)
        t_len, n = frames.shape[0], frames.shape[1]
        if t_len < 1:
            raise ValueError("augment_features needs at least one frame")
        pos = [Tensor(frames[t]) @ self.W_pos + self.b_pos for t in range(t_len)]
        zero_v = Tensor(np.zeros((n, self.c_enc)))
        h = Tensor(np.zeros((n, self.d_e)))
        c = Tensor(np.zeros((n, self.d_e)))
        out = []
        for t in range(t_len):
            v = pos[t] - pos[t - 1] if t > 0 else zero_v
            h, c = dense_lstm_step(concat([pos[t], v], axis=1), h, c, self.lstm)
            out.append(h)
        return out

    def params(self):
        return [self.W_pos, self.b_pos] + self.lstm.params()


# -- network ------------------------------------------------------------------


@dataclass
class ForwardOut:
    """Everything a forward pass exposes to the loss and prediction paths.

    alphas: per layer, a list of per-step (N, 1) score tensors, or None for
    attention-free layers. f_global / logits_global run over the top
    layer's steps; the local pair is None when the top layer lacks
    attention.
    """

    alphas: list
    f_global: list
    f_local: list
    logits_global: list
    logits_local: list
    layer_lengths: list


@dataclass
class LossWeights:
    lam: float = 0.01
    beta: float = 0.001

    def __post_init__(self):
        if self.lam < 0 or self.beta < 0:
            raise ValueError("loss weights must be nonnegative")


class AgcLstmNetwork:
    """Augmenter, stacked recurrent graph layers, and two classifier heads.

    `part_map` set means the network runs on body-part super-nodes: raw
    joint frames are regrouped per part (zero-padded to the widest part)
    before augmentation, and `graph` is the part graph.
    """

    def __init__(self, graph, stack, augmenter, layers, num_classes, rng,
                 pool_window=2, pool_stride=2, dropout_p=0.5,
                 variant="agc-lstm", part_map=None, name="net"):
        d = layers[-1].d_hidden
        b = 1.0 / np.sqrt(d)
        self.graph = graph
        self.stack = stack
        self.augmenter = augmenter
        self.layers = layers
        self.num_classes = num_classes
        self.pool_window = pool_window
        self.pool_stride = pool_stride
        self.dropout_p = dropout_p
        self.variant = variant
        self.part_map = part_map
        self.W_g = Parameter(rng.uniform(-b, b, (d, num_classes)), f"{name}.W_g")
        self.b_g = Parameter(np.zeros((1, num_classes)), f"{name}.b_g")
        if layers[-1].attention is not None:
            self.W_l = Parameter(rng.uniform(-b, b, (d, num_classes)), f"{name}.W_l")
            self.b_l = Parameter(np.zeros((1, num_classes)), f"{name}.b_l")
        else:
            self.W_l = None
            self.b_l = None

    def params(self):
        out = self.augmenter.params()
        for layer in self.layers:
            out.extend(layer.params())
        out.extend([self.W_g, self.b_g])
        if self.W_l is not None:
            out.extend([self.W_l, self.b_l])
        return out

    def param_groups(self):
        """Named groups for gradient-check reporting."""
        groups = [("augmenter", self.augmenter.params())]
        for li, layer in enumerate(self.layers, start=1):
            groups.append((f"layer{li}", layer.params()))
        heads = [self.W_g, self.b_g]
        if self.W_l is not None:
            heads += [self.W_l, self.b_l]
        groups.append(("heads", heads))
        return groups

    def forward(self, seq, training=False, rng=None):
        """Full pass over one sequence; `seq` is a SkeletonSequence or a
        (T, N, 3) array of raw joint frames."""
        frames = np.asarray(getattr(seq, "frames", seq), dtype=np.float64)
        if self.part_map is not None:
            frames = build_part_stream(frames, self.part_map)
        n = self.graph.num_joints
        if frames.ndim != 3 or frames.shape[1] != n or frames.shape[2] != self.augmenter.in_dim:
            raise ValueError(f"expected frames (T, {n}, {self.augmenter.in_dim}), "
                             f"got {frames.shape}")
        x = self.augmenter.augment_features(frames)
        alphas = []
        lengths = []
        states = None
        for li, layer in enumerate(self.layers):
            if li > 0:
                x = temporal_avg_pool(x, self.pool_window, self.pool_stride)
                if training and self.dropout_p > 0.0:
                    x = [dropout(t, self.dropout_p, training, rng) for t in x]
            states = layer_forward(x, layer, self.stack)
            alphas.append([st.alpha for st in states]
                          if layer.attention is not None else None)
            lengths.append(len(states))
            x = [st.H for st in states]

        f_global = [st.H.sum(axis=0, keepdims=True) for st in states]
        logits_global = [fg @ self.W_g + self.b_g for fg in f_global]
        if self.layers[-1].attention is not None:
            f_local = [(st.alpha * st.H_hat).sum(axis=0, keepdims=True) for st in states]
            logits_local = [fl @ self.W_l + self.b_l for fl in f_local]
        else:
            f_local = None
            logits_local = None
        return ForwardOut(alphas=alphas, f_global=f_global, f_local=f_local,
                          logits_global=logits_global, logits_local=logits_local,
                          layer_lengths=lengths)


# -- loss and prediction ------------------------------------------------------


def loss(out, label, w):
    """Total training loss for one sequence; returns (scalar Tensor, parts).

    total = -sum_t log p_g[label] - sum_t log p_l[label]
            + lam * sum_layers sum_nodes (1 - mean_t alpha)^2
            + beta * sum_layers mean_t (sum_nodes alpha)^2

    `parts` holds the float value of each weighted term plus bookkeeping
    (number of cross-entropy summands, mean per-step attention mass).
    """
    num_classes = out.logits_global[0].shape[1]
    label = int(label)
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} outside [0, {num_classes})")

    def head_ce(logit_seq):
        acc = None
        for lg in logit_seq:
            pick = log_softmax_rows(lg).slice_cols(label, label + 1)
            acc = pick if acc is None else acc + pick
        return -acc

    total = head_ce(out.logits_global)
    parts = {"ce_global": total.item(), "ce_local": 0.0,
             "reg_uniform": 0.0, "reg_count": 0.0,
             "ce_terms": len(out.logits_global), "alpha_sum_mean": 0.0}
    if out.logits_local is not None:
        ce_l = head_ce(out.logits_local)
        parts["ce_local"] = ce_l.item()
        parts["ce_terms"] += len(out.logits_local)
        total = total + ce_l

    reg_u = None
    reg_c = None
    alpha_sums = []
    for alist, t_len in zip(out.alphas, out.layer_lengths):
        if alist is None:
            continue
        s = alist[0]
        for a in alist[1:]:
            s = s + a
        dev = 1.0 - s * (1.0 / t_len)
        term_u = (dev * dev).sum()
        reg_u = term_u if reg_u is None else reg_u + term_u
        acc = None
        for a in alist:
            sa = a.sum()
            acc = sa * sa if acc is None else acc + sa * sa
            alpha_sums.append(a.data.sum())
        term_c = acc * (1.0 / t_len)
        reg_c = term_c if reg_c is None else reg_c + term_c
    if reg_u is not None:
        wu = w.lam * reg_u
        wc = w.beta * reg_c
        parts["reg_uniform"] = wu.item()
        parts["reg_count"] = wc.item()
        parts["alpha_sum_mean"] = float(np.mean(alpha_sums))
        total = total + wu + wc
    return total, parts


def _softmax_vec(v):
    z = v - v.max()
    e = np.exp(z)
    return e / e.sum()


def predict(out):
    """Class index and probability vector from the last step's heads.

    Both heads' softmax distributions are summed; ties break to the lowest
    class index. Single-head variants use the global head alone.
    """
    pg = _softmax_vec(out.logits_global[-1].data[0])
    if out.logits_local is None:
        p = pg
        probs = pg
    else:
        p = pg + _softmax_vec(out.logits_local[-1].data[0])
        probs = p / 2.0
    return int(np.argmax(p)), probs


# -- part stream and hybrid fusion --------------------------------------------


def build_part_stream(frames, parts):
    """Regroup joint frames (T, N, 3) into part frames (T, P, 3*max_part).

    Each part node's feature concatenates its joints' coordinates in the
    part map's fixed order, zero-padded to the widest part so one shared
    encoder serves all parts.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[2] != 3:
        raise ValueError(f"expected joint frames (T, N, 3), got {frames.shape}")
    n = frames.shape[1]
    widest = max(len(joints) for _, joints in parts.parts)
    out = np.zeros((frames.shape[0], parts.num_parts, 3 * widest))
    for pi, (pname, joints) in enumerate(parts.parts):
        for a, j in enumerate(joints):
            if not 0 <= j < n:
                raise ValueError(f"part {pname!r} references joint {j}, "
                                 f"but frames have {n} joints")
            out[:, pi, 3 * a:3 * a + 3] = frames[:, j, :]
    return out


def hybrid_predict(joint_net, part_net, seq):
    """Sum the joint-stream and part-stream probability vectors; argmax."""
    if joint_net.num_classes != part_net.num_classes:
        raise ValueError(f"class-count mismatch: joint stream has "
                         f"{joint_net.num_classes}, part stream {part_net.num_classes}")
    with no_grad():
        _, p1 = predict(joint_net.forward(seq))
        _, p2 = predict(part_net.forward(seq))
    p = p1 + p2
    return int(np.argmax(p)), p / 2.0


# -- construction -------------------------------------------------------------

VARIANT_TRAITS = {
    # kind: (dense gates, attention, temporal hierarchy)
    "agc-lstm": (False, True, True),
    "gc-lstm": (False, False, False),
    "gc-lstm+th": (False, False, True),
    "lstm": (True, False, False),
    "lstm+th": (True, False, True),
}


def build_network(graph, num_classes, rng, variant="agc-lstm", stream="joint",
                  part_map=None, c_enc=256, d_e=512, d_hidden=512, d_att=None,
                  pool_window=2, pool_stride=2, dropout_p=0.5, max_hops=1):
    """Assemble a three-layer network of the requested variant and stream.

    Variants without the temporal hierarchy keep all layers at full length
    (pooling window and stride forced to 1); the dense variants ignore the
    graph entirely inside their gates.
    """
    try:
        dense, with_att, th = VARIANT_TRAITS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; "
                         f"choose from {sorted(VARIANT_TRAITS)}") from None
    if stream == "part":
        if part_map is None:
            raise ValueError("part stream needs a part map")
        in_dim = 3 * max(len(j) for _, j in part_map.parts)
        net_graph = build_part_graph(part_map)
        frame_map = part_map
    elif stream == "joint":
        in_dim = 3
        net_graph = graph
        frame_map = None
    else:
        raise ValueError(f"unknown stream {stream!r}; choose joint or part")
    if not th:
        pool_window = 1
        pool_stride = 1

    stack = build_adjacency_stack(net_graph, max_hops=max_hops)
    aug = FeatureAugmenter(in_dim, c_enc, d_e, rng)
    layers = []
    for li, lin in enumerate([d_e, d_hidden, d_hidden], start=1):
        if dense:
            layers.append(DenseCellParams(net_graph.num_joints, lin, d_hidden, rng,
                                          f"layer{li}", d_att=d_att,
                                          with_attention=False))
        else:
            layers.append(AgcLstmCellParams(lin, d_hidden, rng, f"layer{li}",
                                            d_att=d_att, with_attention=with_att))
    return AgcLstmNetwork(net_graph, stack, aug, layers, num_classes, rng,
                          pool_window=pool_window, pool_stride=pool_stride,
                          dropout_p=dropout_p, variant=variant, part_map=frame_map)


def baseline_variants(kind, graph, num_classes, rng, **kwargs):
    """Ablation networks: dense gates and/or no attention and/or no hierarchy."""
    if kind not in ("lstm", "gc-lstm", "lstm+th", "gc-lstm+th"):
        raise ValueError(f"unknown baseline kind {kind!r}")
    return build_network(graph, num_classes, rng, variant=kind, **kwargs)


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(path, net, meta=None):
    """Write parameters as a JSON manifest line plus raw float64 blocks.

    Layout: one utf-8 JSON header line holding the format name, version,
    caller metadata, and the ordered (name, shape) manifest; then each
    parameter's C-order float64 little-endian bytes, concatenated in
    manifest order. Byte-exact round-trip by construction.
    """
    params = net.params()
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ValueError("duplicate parameter names; checkpoint would be ambiguous")
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": dict(meta or {}),
        "params": [{"name": p.name, "shape": list(p.data.shape)} for p in params],
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (meta dict, {name: array})."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: not a checkpoint file ({exc})") from None
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unrecognized checkpoint format")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version "
                             f"{header.get('version')!r}")
        values = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"{path}: truncated data for {entry['name']}")
            values[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return header["meta"], values


def restore_params(net, values):
    """Load checkpoint arrays into a freshly built network, strictly by name."""
    params = {p.name: p for p in net.params()}
    missing = sorted(set(params) - set(values))
    extra = sorted(set(values) - set(params))
    if missing or extra:
        raise ValueError(f"checkpoint/network mismatch: missing {missing[:3]}, "
                         f"unexpected {extra[:3]}")
    for name, p in params.items():
        v = values[name]
        if v.shape != p.data.shape:
            raise ValueError(f"parameter {name}: checkpoint shape {v.shape} "
                             f"!= network shape {p.data.shape}")
        p.data[...] = v
