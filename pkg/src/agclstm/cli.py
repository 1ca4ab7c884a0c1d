"""Command-line interface: train, eval, gradcheck, gen-synth, export-attention.

Every command writes its artifacts under one run directory with a
manifest.json recording the command line, config hash, seed, and outputs.
Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
failure (non-finite loss or a failed gradient check).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .autodiff import custom_op, zero_grads
from .config import ConfigError, TrainConfig, config_hash, load_config, save_config
from .data import (DataFormatError, class_names, generate_split, read_dataset,
                   write_dataset)
from .graph import SkeletonGraph, get_preset
from .model import (LossWeights, build_network, hybrid_predict, load_checkpoint,
                    loss as model_loss, restore_params)
from .optim import finite_difference_check
from .plots import save_attention_heatmap, save_confusion, save_training_curves
from .training import (NumericError, evaluate, export_attention, load_datasets,
                       prepare_sequence, synthetic_spec_from_config, train)

GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so main() owns exit codes."""

    def error(self, message):
        raise ConfigError(message)


def _add_common(p, with_variant=True):
    p.add_argument("--config", help="config file (defaults used when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    if with_variant:
        p.add_argument("--variant",
                       choices=["agc-lstm", "gc-lstm", "gc-lstm+th", "lstm", "lstm+th"],
                       help="override the model variant")
        p.add_argument("--stream", choices=["joint", "part", "hybrid"],
                       help="override the stream")
    p.add_argument("--out", help="run directory (derived from config hash if omitted)")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")


def _config_from_args(args):
    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "variant", None):
        cfg.variant = args.variant
    if getattr(args, "stream", None):
        cfg.stream = args.stream
    if getattr(args, "epochs", None):
        cfg.epochs = args.epochs
    return cfg.validate()


def _run_dir(args, cfg, command):
    if args.out:
        path = args.out
    else:
        path = os.path.join("runs", f"{command}-{config_hash(cfg)[:8]}-seed{cfg.seed}")
    os.makedirs(path, exist_ok=True)
    return path


def _write_manifest(out_dir, cfg, outputs):
    manifest = {"command": sys.argv[1:] if sys.argv[1:] else [],
                "version": __version__,
                "config_hash": config_hash(cfg),
                "seed": cfg.seed,
                "outputs": sorted(outputs)}
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


def _load_checkpoint_net(path):
    """Rebuild a network from a checkpoint's recorded meta, then fill it."""
    try:
        meta, values = load_checkpoint(path)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None
    graph, part_map = get_preset(meta["graph"])
    net = build_network(
        graph, len(meta["classes"]), np.random.default_rng(0),
        variant=meta["variant"], stream=meta["stream"], part_map=part_map,
        c_enc=meta["c_enc"], d_e=meta["d_e"], d_hidden=meta["d_hidden"],
        d_att=meta["d_att"], pool_window=meta.get("pool_window", 2),
        pool_stride=meta.get("pool_stride", 2), dropout_p=0.0,
        max_hops=meta.get("neighbor_hops", 1))
    restore_params(net, values)
    return net, meta


def _eval_dataset(cfg, args):
    """Evaluation sequences plus class names, from --data or the config."""
    if getattr(args, "data", None):
        data, header = read_dataset(args.data)
        return data, tuple(header["classes"])
    _, test, names, _, _ = load_datasets(cfg)
    if not test:
        raise ConfigError("no evaluation data: give --data or configure a test set")
    return test, names


def _write_attention_files(net, seq, cfg, out_dir, quiet):
    graph = net.graph if net.part_map is None else None
    base_graph, _ = get_preset(cfg.graph)
    mats = export_attention(net, seq, cfg, base_graph)
    names = (graph.joint_names if graph is not None and graph.joint_names else None)
    outputs = []
    for li, mat in enumerate(mats, start=1):
        if mat is None:
            continue
        csv_path = os.path.join(out_dir, f"attention_layer{li}.csv")
        with open(csv_path, "w", encoding="utf-8") as fh:
            cols = names or [f"node_{i}" for i in range(mat.shape[1])]
            fh.write(",".join(cols) + "\n")
            for row in mat:
                fh.write(",".join(repr(v) for v in row) + "\n")
        png_path = os.path.join(out_dir, f"attention_layer{li}.png")
        save_attention_heatmap(mat, png_path, joint_names=names)
        outputs += [os.path.basename(csv_path), os.path.basename(png_path)]
        if not quiet:
            print(f"layer {li}: attention {mat.shape[0]}x{mat.shape[1]} "
                  f"-> {csv_path}")
    if not outputs:
        raise ConfigError("this variant has no attention scores to export")
    return outputs


def _write_confusion_files(confusion, names, out_dir):
    csv_path = os.path.join(out_dir, "confusion.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("true\\pred," + ",".join(names) + "\n")
        for i, row in enumerate(confusion):
            fh.write(names[i] + "," + ",".join(str(int(v)) for v in row) + "\n")
    png_path = os.path.join(out_dir, "confusion.png")
    save_confusion(confusion, names, png_path)
    return [os.path.basename(csv_path), os.path.basename(png_path)]


# -- commands -----------------------------------------------------------------


def cmd_train(args):
    cfg = _config_from_args(args)
    out_dir = _run_dir(args, cfg, "train")
    log = None if args.quiet else print
    result = train(cfg, out_dir=out_dir, log=log)
    save_config(cfg, os.path.join(out_dir, "config.ini"))
    curves = os.path.join(out_dir, "curves.png")
    save_training_curves(result.rows, curves)
    outputs = ["metrics.csv", "model.ckpt", "config.ini", "curves.png"]
    _write_manifest(out_dir, cfg, outputs)
    print(f"trained {cfg.variant} ({cfg.stream}) for {cfg.epochs} epochs: "
          f"train_acc {result.final_train_acc:.3f} "
          f"eval_acc {result.final_eval_acc:.3f} -> {out_dir}")
    return 0


def cmd_eval(args):
    cfg = _config_from_args(args)
    out_dir = _run_dir(args, cfg, "eval")
    data, names = _eval_dataset(cfg, args)
    net, meta = _load_checkpoint_net(args.checkpoint)
    if len(names) != net.num_classes:
        raise ConfigError(f"class-count mismatch: dataset has {len(names)} "
                          f"classes, checkpoint {net.num_classes}")
    base_graph, _ = get_preset(cfg.graph)

    part_net = None
    if args.part_checkpoint:
        part_net, _ = _load_checkpoint_net(args.part_checkpoint)
        if part_net.num_classes != net.num_classes:
            raise ConfigError(f"class-count mismatch: part checkpoint has "
                              f"{part_net.num_classes} classes, joint {net.num_classes}")
        confusion = np.zeros((net.num_classes, net.num_classes), dtype=np.int64)
        correct = 0
        for seq in data:
            prepped = prepare_sequence(seq, cfg, base_graph, "eval")
            pred, _ = hybrid_predict(net, part_net, prepped)
            confusion[seq.label, pred] += 1
            correct += int(pred == seq.label)
        acc = correct / len(data)
        mode = "hybrid"
    else:
        acc, confusion = evaluate(net, data, cfg, base_graph)
        mode = meta["stream"]

    outputs = _write_confusion_files(confusion, list(names), out_dir)
    att_net = net if net.layers[-1].attention is not None else None
    if att_net is not None:
        idx = args.sample_index
        if not 0 <= idx < len(data):
            raise ConfigError(f"--sample-index {idx} outside [0, {len(data)})")
        outputs += _write_attention_files(att_net, data[idx], cfg, out_dir, args.quiet)
    _write_manifest(out_dir, cfg, outputs)
    print(f"accuracy {acc!r} ({mode}, {len(data)} samples) -> {out_dir}")
    return 0


def _toy_gradcheck_setup(cfg, seed):
    """Tiny five-node chain model; dims small enough for fast differencing."""
    graph = SkeletonGraph(num_joints=5, edges=((0, 1), (1, 2), (2, 3), (3, 4)),
                          root=2)
    rng = np.random.default_rng(seed)
    net = build_network(graph, 3, rng, variant=cfg.variant, stream="joint",
                        c_enc=8, d_e=16, d_hidden=16, d_att=4,
                        pool_window=cfg.pool_window, pool_stride=cfg.pool_stride,
                        dropout_p=0.0, max_hops=cfg.neighbor_hops)
    frames = 0.3 * rng.standard_normal((min(cfg.t_target, 8), 5, 3))
    return net, frames, 1


def cmd_gradcheck(args):
    cfg = _config_from_args(args)
    if cfg.dropout > 0.0 and args.config:
        raise ConfigError("model.dropout: gradient checking needs a deterministic "
                          "loss; set dropout = 0")
    cfg.dropout = 0.0
    if cfg.t_target > 10 and args.config:
        raise ConfigError("train.t_target: gradient checking is restricted to "
                          "toy sizes (T <= 10)")
    net, frames, label = _toy_gradcheck_setup(cfg, cfg.seed)
    if net.graph.num_joints > 8:
        raise ConfigError("gradcheck is restricted to toy graphs (N <= 8)")
    weights = LossWeights(lam=cfg.lam, beta=cfg.beta)

    corrupt = getattr(args, "self_test_corrupt", False)
    victim = net.params()[0]

    def loss_fn():
        out = net.forward(frames, training=False)
        total, _ = model_loss(out, label, weights)
        if corrupt:
            # negative control: forward says d/dp = 0.01, backward claims 0.015
            bad = custom_op(
                np.full((1, 1), 0.01 * victim.data.sum()), (victim,),
                lambda g: victim.accumulate_grad(np.full_like(victim.data, 0.015) * g))
            total = total + bad
        return total

    # Default probing targets each tensor's largest-magnitude gradient
    # coordinates.  Coordinates whose true gradient sits near the float64
    # difference-quotient noise floor (eps * |loss| / 2h, around 1e-10 here)
    # cannot be resolved by central differences at any step size, so random
    # probing reports noise rather than correctness on them.
    if args.probes > 0:
        probe_desc = f"{args.probes} random probes per tensor"
    else:
        probe_desc = "2 largest-gradient probes per tensor"
        zero_grads(net.params())
        loss_fn().backward()
        signal = {id(p): np.argsort(np.abs(p.grad).ravel())[-2:]
                  for p in net.params()}

    probe_rng = np.random.default_rng(cfg.seed + 1)
    worst_overall = 0.0
    print(f"gradient check: toy model, variant {cfg.variant}, "
          f"{probe_desc}, h={args.step:g}")
    for group_name, group in net.param_groups():
        if args.probes > 0:
            probes = args.probes
        else:
            probes = [(i, int(j)) for i, p in enumerate(group)
                      for j in signal[id(p)]]
        err = finite_difference_check(loss_fn, group, probes,
                                      h=args.step, rng=probe_rng)
        n_vals = sum(p.data.size for p in group)
        flag = "ok" if err < GRADCHECK_TOLERANCE else "FAIL"
        print(f"  {group_name:<10s} worst rel err {err:.3e}  "
              f"({len(group)} tensors, {n_vals} values) {flag}")
        worst_overall = max(worst_overall, err)
    if corrupt:
        # the control passes only when the planted error is caught
        if worst_overall < GRADCHECK_TOLERANCE:
            raise NumericError("negative control failed: the corrupted "
                               "gradient went undetected")
        print(f"negative control passed: corruption detected at "
              f"{worst_overall:.3e}")
        return 0
    if worst_overall >= GRADCHECK_TOLERANCE:
        print(f"gradient check FAILED: worst {worst_overall:.3e} "
              f">= {GRADCHECK_TOLERANCE:g}")
        raise NumericError(f"gradient check failed at {worst_overall:.3e}")
    print(f"gradient check passed: worst {worst_overall:.3e} "
          f"< {GRADCHECK_TOLERANCE:g}")
    return 0


def cmd_gen_synth(args):
    cfg = _config_from_args(args)
    out_dir = _run_dir(args, cfg, "gen-synth")
    spec = synthetic_spec_from_config(cfg)
    graph, _ = get_preset(cfg.graph)
    train_data, test_data = generate_split(spec, cfg.synthetic_train,
                                           cfg.synthetic_test, cfg.seed)
    names = class_names(spec)
    train_path = os.path.join(out_dir, "train.skel")
    test_path = os.path.join(out_dir, "test.skel")
    write_dataset(train_path, train_data, graph, names)
    write_dataset(test_path, test_data, graph, names)
    _write_manifest(out_dir, cfg, ["train.skel", "test.skel"])
    print(f"wrote {len(train_data)} train / {len(test_data)} test samples "
          f"({len(names)} classes) -> {out_dir}")
    return 0


def cmd_export_attention(args):
    cfg = _config_from_args(args)
    out_dir = _run_dir(args, cfg, "attention")
    data, names = _eval_dataset(cfg, args)
    net, _ = _load_checkpoint_net(args.checkpoint)
    if len(names) != net.num_classes:
        raise ConfigError(f"class-count mismatch: dataset has {len(names)} "
                          f"classes, checkpoint {net.num_classes}")
    idx = args.sample_index
    if not 0 <= idx < len(data):
        raise ConfigError(f"--sample-index {idx} outside [0, {len(data)})")
    outputs = _write_attention_files(net, data[idx], cfg, out_dir, args.quiet)
    _write_manifest(out_dir, cfg, outputs)
    print(f"exported attention for sample {idx} -> {out_dir}")
    return 0


# -- entry point --------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="agclstm",
                     description="Skeleton action recognition with an "
                                 "attention-enhanced graph-convolutional LSTM")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a variant and write metrics/checkpoint")
    _add_common(p)
    p.add_argument("--epochs", type=int, help="override the config epoch count")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint; write confusion and "
                                    "attention matrices")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="trained model file")
    p.add_argument("--part-checkpoint",
                   help="part-stream checkpoint; enables hybrid fusion")
    p.add_argument("--data", help="container file to evaluate on "
                                  "(default: the config's test split)")
    p.add_argument("--sample-index", type=int, default=0,
                   help="sample whose attention matrices are exported")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="verify tape gradients against "
                                         "central differences on a toy model")
    _add_common(p)
    p.add_argument("--probes", type=int, default=0,
                   help="random probes per tensor; 0 picks each tensor's two "
                        "largest-gradient coordinates instead (default)")
    p.add_argument("--step", type=float, default=1e-4,
                   help="finite-difference step size")
    p.add_argument("--self-test-corrupt", action="store_true",
                   dest="self_test_corrupt",
                   help="inject a known-bad gradient; the check must fail "
                        "(negative control)")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("gen-synth", help="generate synthetic datasets as "
                                         "container files")
    _add_common(p, with_variant=False)
    p.set_defaults(fn=cmd_gen_synth)

    p = sub.add_parser("export-attention", help="write per-layer attention "
                                                "matrices for one sample")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="trained model file")
    p.add_argument("--data", help="container file (default: config test split)")
    p.add_argument("--sample-index", type=int, default=0)
    p.set_defaults(fn=cmd_export_attention)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
