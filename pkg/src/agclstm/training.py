"""Training loop, evaluation, and the pieces that wire config to model.

Training is single-writer and deterministic for a given config and seed:
all randomness (init, shuffling, frame offsets, dropout) flows from
substreams of one seed sequence, samples are processed one at a time, and
a batch is the gradient-accumulation unit between optimizer steps.
"""

import os
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import no_grad, zero_grads
from .config import ConfigError
from .data import (center_root, class_names, default_synthetic_spec,
                   generate_split, graph_from_header, read_dataset,
                   sample_fixed_length, SyntheticActionSpec)
from .graph import get_preset
from .model import LossWeights, build_network, loss, predict, save_checkpoint
from .optim import Adam

METRICS_COLUMNS = ("epoch", "train_loss", "train_acc", "eval_acc", "ce_global",
                   "ce_local", "reg_uniform", "reg_count", "mean_alpha_sum", "lr")


class NumericError(RuntimeError):
    """Loss or gradients went non-finite; message pinpoints the batch."""


def synthetic_spec_from_config(cfg):
    base = default_synthetic_spec()
    return SyntheticActionSpec(classes=base.classes, noise_sd=cfg.noise_sd,
                               frames_range=(cfg.frames_lo, cfg.frames_hi))


def load_datasets(cfg):
    """Returns (train, test, class name tuple, graph, part map)."""
    graph, part_map = get_preset(cfg.graph)
    if cfg.data_source == "synthetic":
        spec = synthetic_spec_from_config(cfg)
        train, test = generate_split(spec, cfg.synthetic_train,
                                     cfg.synthetic_test, cfg.seed)
        names = class_names(spec)
    else:
        train, train_header = read_dataset(cfg.train_path)
        if cfg.test_path:
            test, test_header = read_dataset(cfg.test_path)
            if test_header["classes"] != train_header["classes"]:
                raise ConfigError("data.test_path: class lists differ between "
                                  "train and test containers")
        else:
            test = []
        names = train_header["classes"]
        file_graph = graph_from_header(train_header)
        if file_graph.num_joints != graph.num_joints:
            raise ConfigError(f"data.train_path: container has "
                              f"{file_graph.num_joints} joints, preset "
                              f"{cfg.graph!r} expects {graph.num_joints}")
    for seq in list(train) + list(test):
        if seq.num_joints != graph.num_joints:
            raise ConfigError(f"data: sample {seq.source!r} has {seq.num_joints} "
                              f"joints, expected {graph.num_joints}")
        if not 0 <= seq.label < len(names):
            raise ConfigError(f"data: sample {seq.source!r} label {seq.label} "
                              f"outside [0, {len(names)})")
    return train, test, names, graph, part_map


def network_from_config(cfg, num_classes, rng):
    graph, part_map = get_preset(cfg.graph)
    if cfg.stream not in ("joint", "part"):
        raise ConfigError(f"model.stream: {cfg.stream!r} is not trainable; "
                          f"train joint and part separately, fuse at eval time")
    return build_network(
        graph, num_classes, rng, variant=cfg.variant, stream=cfg.stream,
        part_map=part_map, c_enc=cfg.c_enc, d_e=cfg.d_e, d_hidden=cfg.d_hidden,
        d_att=cfg.d_att_effective, pool_window=cfg.pool_window,
        pool_stride=cfg.pool_stride, dropout_p=cfg.dropout,
        max_hops=cfg.neighbor_hops)


def prepare_sequence(seq, cfg, graph, mode, rng=None):
    """Normalization and fixed-length sampling shared by train and eval."""
    if cfg.normalize:
        seq = center_root(seq, graph.root)
    return sample_fixed_length(seq, cfg.t_target, mode, rng)


def evaluate(net, dataset, cfg, graph):
    """Deterministic accuracy and confusion matrix over a dataset.

    confusion[true, predicted] counts samples; rows sum to per-class counts.
    """
    confusion = np.zeros((net.num_classes, net.num_classes), dtype=np.int64)
    correct = 0
    with no_grad():
        for seq in dataset:
            prepped = prepare_sequence(seq, cfg, graph, "eval")
            pred, _ = predict(net.forward(prepped))
            confusion[seq.label, pred] += 1
            correct += int(pred == seq.label)
    acc = correct / len(dataset) if dataset else 0.0
    return acc, confusion


@dataclass
class TrainResult:
    net: object
    rows: list            # metrics rows, one dict per epoch
    train_data: list
    test_data: list
    classes: tuple
    graph: object
    final_train_acc: float
    final_eval_acc: float
    metrics_path: str = ""
    checkpoint_path: str = ""


def _format_row(row):
    return ",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                    for c in METRICS_COLUMNS)


def write_metrics(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            fh.write(_format_row(row) + "\n")


def train(cfg, out_dir=None, log=None):
    """Run the full training loop; optionally write metrics and checkpoint.

    Deterministic per (config, seed): data generation, parameter init,
    shuffling, frame offsets, and dropout all derive from cfg.seed.
    """
    cfg.validate()
    train_data, test_data, names, graph, _ = load_datasets(cfg)
    ss = np.random.SeedSequence(cfg.seed)
    rng_init, rng_shuffle, rng_sample, rng_dropout = (
        np.random.default_rng(s) for s in ss.spawn(4))
    net = network_from_config(cfg, len(names), rng_init)
    params = net.params()
    opt = Adam(params, lr=cfg.lr)
    weights = LossWeights(lam=cfg.lam, beta=cfg.beta)

    rows = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        opt.lr = cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_decay_every)
        order = rng_shuffle.permutation(len(train_data))
        epoch_losses = []
        comp_sums = {"ce_global": 0.0, "ce_local": 0.0, "reg_uniform": 0.0,
                     "reg_count": 0.0, "alpha_sum_mean": 0.0}
        correct = 0
        for b0 in range(0, len(order), cfg.batch_size):
            batch = order[b0:b0 + cfg.batch_size]
            batch_id = b0 // cfg.batch_size
            zero_grads(params)
            inv_b = 1.0 / len(batch)
            for si in batch:
                seq = train_data[si]
                prepped = prepare_sequence(seq, cfg, graph, "train", rng_sample)
                out = net.forward(prepped, training=True, rng=rng_dropout)
                total, comps = loss(out, seq.label, weights)
                val = total.item()
                if not np.isfinite(val):
                    raise NumericError(
                        f"non-finite loss {val} at epoch {epoch}, batch "
                        f"{batch_id}, sample {seq.source!r}")
                (total * inv_b).backward()
                epoch_losses.append(val)
                for k in comp_sums:
                    comp_sums[k] += comps[k]
                pred, _ = predict(out)
                correct += int(pred == seq.label)
            opt.step()
        n_tr = len(train_data)
        train_acc = correct / n_tr
        eval_acc, _ = evaluate(net, test_data, cfg, graph) if test_data else (0.0, None)
        row = {"epoch": epoch,
               "train_loss": float(np.mean(epoch_losses)),
               "train_acc": float(train_acc),
               "eval_acc": float(eval_acc),
               "ce_global": comp_sums["ce_global"] / n_tr,
               "ce_local": comp_sums["ce_local"] / n_tr,
               "reg_uniform": comp_sums["reg_uniform"] / n_tr,
               "reg_count": comp_sums["reg_count"] / n_tr,
               "mean_alpha_sum": comp_sums["alpha_sum_mean"] / n_tr,
               "lr": float(opt.lr)}
        rows.append(row)
        if log:
            log(f"epoch {epoch + 1}/{cfg.epochs}: loss {row['train_loss']:.4f} "
                f"train_acc {train_acc:.3f} eval_acc {eval_acc:.3f} "
                f"lr {opt.lr:.2e} ({time.perf_counter() - t0:.1f}s)")

    result = TrainResult(net=net, rows=rows, train_data=train_data,
                         test_data=test_data, classes=tuple(names), graph=graph,
                         final_train_acc=rows[-1]["train_acc"],
                         final_eval_acc=rows[-1]["eval_acc"])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        result.metrics_path = os.path.join(out_dir, "metrics.csv")
        write_metrics(result.metrics_path, rows)
        result.checkpoint_path = os.path.join(out_dir, "model.ckpt")
        save_checkpoint(result.checkpoint_path, net, meta=checkpoint_meta(cfg, names))
    return result


def checkpoint_meta(cfg, names):
    return {"variant": cfg.variant, "stream": cfg.stream, "graph": cfg.graph,
            "classes": list(names), "c_enc": cfg.c_enc, "d_e": cfg.d_e,
            "d_hidden": cfg.d_hidden, "d_att": cfg.d_att_effective,
            "pool_window": cfg.pool_window, "pool_stride": cfg.pool_stride,
            "neighbor_hops": cfg.neighbor_hops, "seed": cfg.seed}


def export_attention(net, seq, cfg, graph):
    """Per-layer attention matrices (T_j rows, N columns) for one sequence."""
    prepped = prepare_sequence(seq, cfg, graph, "eval")
    with no_grad():
        out = net.forward(prepped)
    mats = []
    for alist in out.alphas:
        if alist is None:
            mats.append(None)
        else:
            mats.append(np.stack([a.data[:, 0] for a in alist]))
    return mats
