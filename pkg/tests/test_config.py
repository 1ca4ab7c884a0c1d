"""Config file round-trips, validation, and the run-identity hash."""

import dataclasses

import pytest

from agclstm.config import (ConfigError, TrainConfig, config_fields,
                            config_hash, dump_config, load_config, save_config)


def test_defaults_carry_the_documented_training_recipe():
    cfg = TrainConfig()
    assert cfg.c_enc == 256 and cfg.d_e == 512 and cfg.d_hidden == 512
    assert cfg.lr == 0.0005
    assert cfg.lr_decay == 0.1 and cfg.lr_decay_every == 20
    assert cfg.dropout == 0.5
    assert cfg.lam == 0.01 and cfg.beta == 0.001
    assert cfg.epochs == 60 and cfg.batch_size == 64
    assert cfg.pool_window == 2 and cfg.pool_stride == 2
    assert cfg.num_subsets == 3 and cfg.neighbor_hops == 1
    assert cfg.t_target == 100
    cfg.validate()


def test_d_att_defaults_to_quarter_hidden():
    cfg = TrainConfig(d_hidden=64)
    assert cfg.d_att == 0
    assert cfg.d_att_effective == 16
    assert TrainConfig(d_hidden=64, d_att=5).d_att_effective == 5


def test_round_trip_through_ini(tmp_path):
    cfg = TrainConfig(variant="gc-lstm+th", lam=0.25, seed=9, d_hidden=32,
                      normalize=False, train_path="a.skel", epochs=3)
    path = tmp_path / "c.ini"
    save_config(cfg, str(path))
    back = load_config(str(path))
    assert back == cfg
    assert dump_config(back) == dump_config(cfg)


def test_lambda_is_the_file_key_for_lam(tmp_path):
    cfg = TrainConfig(lam=0.125)
    path = tmp_path / "c.ini"
    save_config(cfg, str(path))
    text = path.read_text()
    assert "lambda = 0.125" in text
    assert "lam =" not in text
    back = load_config(str(path))
    assert back.lam == 0.125


def test_unknown_keys_and_bad_types_are_rejected(tmp_path):
    good = tmp_path / "good.ini"
    save_config(TrainConfig(), str(good))
    text = good.read_text()

    bad1 = tmp_path / "bad1.ini"
    bad1.write_text(text + "\n[model]\nwidth = 3\n")
    with pytest.raises(ConfigError):
        load_config(str(bad1))

    bad2 = tmp_path / "bad2.ini"
    bad2.write_text(text.replace("epochs = 60", "epochs = soon"))
    with pytest.raises(ConfigError):
        load_config(str(bad2))


def test_validation_catches_bad_fields():
    for kw in ({"variant": "transformer"}, {"stream": "bone"},
               {"num_subsets": 2}, {"dropout": 1.0}, {"lr": 0.0},
               {"epochs": 0}, {"pool_window": 0}, {"lam": -1.0},
               {"t_target": 0}, {"graph": "body99"},
               {"data_source": "carrier-pigeon"},
               {"frames_lo": 50, "frames_hi": 40}):
        with pytest.raises(ConfigError):
            TrainConfig(**kw).validate()


def test_file_data_source_requires_paths():
    cfg = TrainConfig(data_source="container")
    with pytest.raises(ConfigError):
        cfg.validate()
    cfg.train_path = "t.skel"
    cfg.test_path = "e.skel"
    cfg.validate()


def test_hash_is_stable_and_sensitive():
    a = config_hash(TrainConfig())
    b = config_hash(TrainConfig())
    c = config_hash(TrainConfig(seed=2))
    assert a == b
    assert a != c
    assert len(a) == 64  # sha256 hex


def test_dump_is_canonical_and_complete():
    cfg = TrainConfig()
    dump = dump_config(cfg)
    for _, key, _, _ in config_fields():
        assert f"{key} = " in dump, key
    assert dump == dump_config(TrainConfig())


def test_config_fields_cover_every_attribute():
    rows = config_fields()
    attrs = {attr for _, _, attr, _ in rows}
    assert attrs == {f.name for f in dataclasses.fields(TrainConfig)}
    assert ("loss", "lambda", "lam", "float") in rows
    assert ("data", "source", "data_source", "str") in rows
