"""End-to-end command tests driven through main()'s argv interface.

A module-scoped micro config (tiny dims, 6+6 synthetic samples, 2 epochs)
keeps the shared train runs to a few seconds; commands that only need to
fail are run inline.
"""

import json
import os

import numpy as np
import pytest

from agclstm.cli import main
from agclstm.config import TrainConfig, config_hash, load_config, save_config
from agclstm.data import read_dataset


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    return tmp_path_factory.mktemp("cliws")


@pytest.fixture(scope="module")
def ini_path(ws):
    cfg = TrainConfig(c_enc=6, d_e=8, d_hidden=8, d_att=2, dropout=0.0,
                      lr=0.003, batch_size=4, epochs=2, seed=3, t_target=8,
                      synthetic_train=6, synthetic_test=6,
                      frames_lo=10, frames_hi=12)
    path = ws / "micro.ini"
    save_config(cfg.validate(), str(path))
    return str(path)


@pytest.fixture(scope="module")
def train_dir(ws, ini_path):
    out = ws / "run-train"
    assert main(["train", "--config", ini_path, "--out", str(out),
                 "--quiet"]) == 0
    return out


@pytest.fixture(scope="module")
def part_dir(ws, ini_path):
    out = ws / "run-part"
    assert main(["train", "--config", ini_path, "--stream", "part",
                 "--out", str(out), "--quiet"]) == 0
    return out


@pytest.fixture(scope="module")
def synth_dir(ws, ini_path):
    out = ws / "synth"
    assert main(["gen-synth", "--config", ini_path, "--out", str(out),
                 "--quiet"]) == 0
    return out


# -- happy paths --------------------------------------------------------------


def test_gen_synth_writes_containers(synth_dir):
    for name in ("train.skel", "test.skel", "manifest.json"):
        assert (synth_dir / name).is_file()
    data, header = read_dataset(str(synth_dir / "train.skel"))
    assert len(data) == 6
    assert len(header["classes"]) == 3
    assert all(seq.num_joints == 15 for seq in data)


def test_train_writes_artifacts(train_dir, ini_path):
    expect = ["config.ini", "curves.png", "metrics.csv", "model.ckpt"]
    for name in expect + ["manifest.json"]:
        assert (train_dir / name).is_file(), name
    manifest = json.loads((train_dir / "manifest.json").read_text())
    assert manifest["outputs"] == expect  # sorted
    # the saved config must hash to what the manifest recorded
    saved = load_config(str(train_dir / "config.ini"))
    assert manifest["config_hash"] == config_hash(saved)
    assert manifest["seed"] == 3


def test_metrics_csv_layout(train_dir):
    lines = (train_dir / "metrics.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["epoch", "train_loss", "train_acc", "eval_acc"]
    assert "lr" in header
    assert len(lines) == 1 + 2  # header + one row per epoch
    for line in lines[1:]:
        vals = line.split(",")
        assert len(vals) == len(header)
        accs = dict(zip(header, vals))
        assert 0.0 <= float(accs["train_acc"]) <= 1.0
        assert 0.0 <= float(accs["eval_acc"]) <= 1.0


def test_eval_writes_confusion_and_attention(ws, ini_path, train_dir, capsys):
    out = ws / "run-eval"
    rc = main(["eval", "--config", ini_path,
               "--checkpoint", str(train_dir / "model.ckpt"),
               "--out", str(out), "--quiet"])
    assert rc == 0
    assert "accuracy" in capsys.readouterr().out
    assert (out / "confusion.csv").is_file()
    assert (out / "confusion.png").is_file()
    # every layer of the attention variant exports a matrix
    for li in (1, 2, 3):
        assert (out / f"attention_layer{li}.csv").is_file()
        assert (out / f"attention_layer{li}.png").is_file()
    rows = (out / "confusion.csv").read_text().splitlines()
    assert len(rows) == 1 + 3
    counts = np.array([[int(v) for v in r.split(",")[1:]] for r in rows[1:]])
    assert counts.sum() == 6  # one test sample per cell total
    att = (out / "attention_layer3.csv").read_text().splitlines()
    assert len(att[0].split(",")) == 15  # one column per node


def test_eval_on_external_container(ws, ini_path, train_dir, synth_dir):
    out = ws / "run-eval-ext"
    rc = main(["eval", "--config", ini_path,
               "--checkpoint", str(train_dir / "model.ckpt"),
               "--data", str(synth_dir / "test.skel"),
               "--out", str(out), "--quiet"])
    assert rc == 0
    assert (out / "confusion.csv").is_file()


def test_hybrid_eval(ws, ini_path, train_dir, part_dir, capsys):
    out = ws / "run-hybrid"
    rc = main(["eval", "--config", ini_path,
               "--checkpoint", str(train_dir / "model.ckpt"),
               "--part-checkpoint", str(part_dir / "model.ckpt"),
               "--out", str(out), "--quiet"])
    assert rc == 0
    assert "hybrid" in capsys.readouterr().out
    assert (out / "confusion.csv").is_file()


def test_export_attention_command(ws, ini_path, train_dir):
    out = ws / "run-att"
    rc = main(["export-attention", "--config", ini_path,
               "--checkpoint", str(train_dir / "model.ckpt"),
               "--sample-index", "2", "--out", str(out), "--quiet"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert "attention_layer1.csv" in manifest["outputs"]
    assert (out / "attention_layer1.png").is_file()


def test_same_seed_runs_are_byte_identical(ws, ini_path):
    outs = []
    for tag in ("a", "b"):
        out = ws / f"det-{tag}"
        assert main(["train", "--config", ini_path, "--seed", "11",
                     "--out", str(out), "--quiet"]) == 0
        outs.append(out)
    for name in ("metrics.csv", "model.ckpt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_default_run_dir_from_config_hash(monkeypatch, tmp_path, ini_path):
    monkeypatch.chdir(tmp_path)
    assert main(["gen-synth", "--config", ini_path, "--quiet"]) == 0
    tag = config_hash(load_config(ini_path))[:8]
    assert (tmp_path / "runs" / f"gen-synth-{tag}-seed3").is_dir()


def test_variant_override_drops_attention(ws, ini_path):
    out = ws / "run-lstm"
    assert main(["train", "--config", ini_path, "--variant", "lstm",
                 "--out", str(out), "--quiet"]) == 0
    ev = ws / "run-lstm-eval"
    assert main(["eval", "--config", ini_path, "--variant", "lstm",
                 "--checkpoint", str(out / "model.ckpt"),
                 "--out", str(ev), "--quiet"]) == 0
    assert (ev / "confusion.csv").is_file()
    assert not (ev / "attention_layer1.csv").exists()
    # asking for attention anyway is a usage error
    rc = main(["export-attention", "--config", ini_path, "--variant", "lstm",
               "--checkpoint", str(out / "model.ckpt"),
               "--out", str(ws / "run-lstm-att"), "--quiet"])
    assert rc == 1


def test_version_flag_exits_zero():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


# -- gradient check command ---------------------------------------------------


def test_gradcheck_passes_with_defaults(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "gradient check passed" in out
    for group in ("augmenter", "layer1", "layer3", "heads"):
        assert group in out


def test_gradcheck_corrupt_control_detects(capsys):
    assert main(["gradcheck", "--self-test-corrupt"]) == 0
    assert "negative control passed" in capsys.readouterr().out


def test_gradcheck_tiny_step_is_numeric_failure(capsys):
    # at h=1e-12 the difference quotient is pure rounding noise
    rc = main(["gradcheck", "--probes", "1", "--step", "1e-12"])
    assert rc == 3
    assert "numeric failure" in capsys.readouterr().err


@pytest.mark.parametrize("field", [{"dropout": 0.5}, {"t_target": 100}])
def test_gradcheck_rejects_nondeterministic_config(ws, field):
    cfg = TrainConfig(**field)
    path = ws / f"bad-{list(field)[0]}.ini"
    save_config(cfg.validate(), str(path))
    assert main(["gradcheck", "--config", str(path)]) == 1


# -- error paths --------------------------------------------------------------


def test_missing_checkpoint_is_data_error(ws, ini_path, capsys):
    rc = main(["eval", "--config", ini_path,
               "--checkpoint", str(ws / "nope.ckpt"),
               "--out", str(ws / "run-miss"), "--quiet"])
    assert rc == 2
    assert "data error" in capsys.readouterr().err


def test_malformed_container_is_data_error(ws, ini_path, train_dir, capsys):
    bad = ws / "bad.skel"
    bad.write_text("skeldata 1\nnot json at all\n")
    rc = main(["eval", "--config", ini_path,
               "--checkpoint", str(train_dir / "model.ckpt"),
               "--data", str(bad), "--out", str(ws / "run-bad"), "--quiet"])
    assert rc == 2
    assert "data error" in capsys.readouterr().err


def test_invalid_config_value_exits_one(ws, ini_path, capsys):
    text = open(ini_path).read().replace("dropout = 0.0", "dropout = 1.5")
    path = ws / "broken.ini"
    path.write_text(text)
    rc = main(["train", "--config", str(path), "--out", str(ws / "x")])
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_unknown_flag_exits_one(capsys):
    assert main(["train", "--bogus"]) == 1
    assert "config error" in capsys.readouterr().err


def test_sample_index_out_of_range(ws, ini_path, train_dir):
    rc = main(["eval", "--config", ini_path,
               "--checkpoint", str(train_dir / "model.ckpt"),
               "--sample-index", "99",
               "--out", str(ws / "run-idx"), "--quiet"])
    assert rc == 1
