"""Training configuration: a flat sectioned key=value file.

Every knob that embodies a modeling decision is a key here, so defaults
are auditable and experiments reproducible. `config_hash` fingerprints the
canonical dump; runs log it so two runs are comparable at a glance.
"""

import configparser
import hashlib
import io
from dataclasses import dataclass, fields

from .model import VARIANT_TRAITS


class ConfigError(ValueError):
    """A config field failed validation; message names the field."""


@dataclass
class TrainConfig:
    graph: str = "body15"
    variant: str = "agc-lstm"
    stream: str = "joint"
    c_enc: int = 256
    d_e: int = 512
    d_hidden: int = 512
    d_att: int = 0          # 0 means d_hidden // 4
    neighbor_hops: int = 1
    num_subsets: int = 3
    pool_window: int = 2
    pool_stride: int = 2
    dropout: float = 0.5
    lam: float = 0.01
    beta: float = 0.001
    lr: float = 0.0005
    lr_decay: float = 0.1
    lr_decay_every: int = 20
    batch_size: int = 64
    epochs: int = 60
    seed: int = 1
    t_target: int = 100
    normalize: bool = True
    data_source: str = "synthetic"
    train_path: str = ""
    test_path: str = ""
    synthetic_train: int = 300
    synthetic_test: int = 90
    noise_sd: float = 0.015
    frames_lo: int = 40
    frames_hi: int = 60

    def validate(self):
        def need(cond, field, why):
            if not cond:
                raise ConfigError(f"{field}: {why}")

        need(self.graph in ("body15", "ntu25"), "model.graph",
             f"unknown skeleton preset {self.graph!r}")
        need(self.variant in VARIANT_TRAITS, "model.variant",
             f"unknown variant {self.variant!r}")
        need(self.stream in ("joint", "part", "hybrid"), "model.stream",
             f"unknown stream {self.stream!r}")
        for f in ("c_enc", "d_e", "d_hidden"):
            need(getattr(self, f) >= 1, f"model.{f}", "must be >= 1")
        need(self.d_att >= 0, "model.d_att", "must be >= 0 (0 = auto)")
        need(self.neighbor_hops >= 0, "model.neighbor_hops", "must be >= 0")
        need(self.num_subsets == 3, "model.num_subsets",
             "the root/centripetal/centrifugal partition is fixed at 3 subsets")
        need(self.pool_window >= 1 and self.pool_stride >= 1,
             "model.pool_window", "pooling window and stride must be >= 1")
        need(0.0 <= self.dropout < 1.0, "model.dropout", "must be in [0, 1)")
        need(self.lam >= 0.0, "loss.lambda", "must be >= 0")
        need(self.beta >= 0.0, "loss.beta", "must be >= 0")
        need(self.lr > 0.0, "train.lr", "must be > 0")
        need(0.0 < self.lr_decay <= 1.0, "train.lr_decay", "must be in (0, 1]")
        need(self.lr_decay_every >= 1, "train.lr_decay_every", "must be >= 1")
        need(self.batch_size >= 1, "train.batch_size", "must be >= 1")
        need(self.epochs >= 1, "train.epochs", "must be >= 1")
        need(self.t_target >= 1, "train.t_target", "must be >= 1")
        need(self.data_source in ("synthetic", "container"), "data.source",
             f"unknown source {self.data_source!r}")
        if self.data_source == "container":
            need(bool(self.train_path), "data.train_path",
                 "required when source = container")
        need(self.synthetic_train >= 1, "data.synthetic_train", "must be >= 1")
        need(self.synthetic_test >= 1, "data.synthetic_test", "must be >= 1")
        need(self.noise_sd >= 0.0, "data.noise_sd", "must be >= 0")
        need(2 <= self.frames_lo <= self.frames_hi, "data.frames_lo",
             f"need 2 <= frames_lo <= frames_hi, got {self.frames_lo}/{self.frames_hi}")
        return self

    @property
    def d_att_effective(self):
        return self.d_att if self.d_att > 0 else max(1, self.d_hidden // 4)


# (section, file key, attribute, type) in canonical dump order
_SCHEMA = [
    ("model", "graph", "graph", str),
    ("model", "variant", "variant", str),
    ("model", "stream", "stream", str),
    ("model", "c_enc", "c_enc", int),
    ("model", "d_e", "d_e", int),
    ("model", "d_hidden", "d_hidden", int),
    ("model", "d_att", "d_att", int),
    ("model", "neighbor_hops", "neighbor_hops", int),
    ("model", "num_subsets", "num_subsets", int),
    ("model", "pool_window", "pool_window", int),
    ("model", "pool_stride", "pool_stride", int),
    ("model", "dropout", "dropout", float),
    ("loss", "lambda", "lam", float),
    ("loss", "beta", "beta", float),
    ("train", "lr", "lr", float),
    ("train", "lr_decay", "lr_decay", float),
    ("train", "lr_decay_every", "lr_decay_every", int),
    ("train", "batch_size", "batch_size", int),
    ("train", "epochs", "epochs", int),
    ("train", "seed", "seed", int),
    ("train", "t_target", "t_target", int),
    ("train", "normalize", "normalize", bool),
    ("data", "source", "data_source", str),
    ("data", "train_path", "train_path", str),
    ("data", "test_path", "test_path", str),
    ("data", "synthetic_train", "synthetic_train", int),
    ("data", "synthetic_test", "synthetic_test", int),
    ("data", "noise_sd", "noise_sd", float),
    ("data", "frames_lo", "frames_lo", int),
    ("data", "frames_hi", "frames_hi", int),
]


def _format_value(value, typ):
    if typ is bool:
        return "true" if value else "false"
    if typ is float:
        return repr(float(value))
    return str(value)


def dump_config(cfg):
    """Canonical text form (fixed key order); the hash input."""
    out = io.StringIO()
    current = None
    for section, key, attr, typ in _SCHEMA:
        if section != current:
            if current is not None:
                out.write("\n")
            out.write(f"[{section}]\n")
            current = section
        out.write(f"{key} = {_format_value(getattr(cfg, attr), typ)}\n")
    return out.getvalue()


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))


def load_config(path):
    """Parse a config file; unknown sections/keys or bad values are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"bad config syntax: {exc}") from None

    known = {(s, k): (attr, typ) for s, k, attr, typ in _SCHEMA}
    for section in parser.sections():
        for key in parser[section]:
            if (section, key) not in known:
                raise ConfigError(f"{section}.{key}: unknown config field")

    cfg = TrainConfig()
    for section, key, attr, typ in _SCHEMA:
        if not parser.has_option(section, key):
            continue
        raw = parser.get(section, key).strip()
        try:
            if typ is bool:
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError("expected a boolean")
                value = raw.lower() in ("true", "1", "yes")
            elif typ is int:
                value = int(raw)
            elif typ is float:
                value = float(raw)
            else:
                value = raw
        except ValueError:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r} "
                              f"as {typ.__name__}") from None
        setattr(cfg, attr, value)
    return cfg.validate()


def config_hash(cfg):
    """Stable fingerprint of the canonical dump."""
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


def config_fields():
    """Schema rows (section, file key, attribute, type) in file order."""
    return [(sec, key, attr, typ.__name__) for sec, key, attr, typ in _SCHEMA]
