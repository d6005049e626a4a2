"""Flat dotted-key configuration.

Files are TOML (a sectioned ``key = value`` subset is enough); nested
tables flatten to dotted names such as ``train.lr`` or ``data.synth.n``.
Any key may be overridden from the command line with ``--train.lr 0.1``.
"""

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(Exception):
    pass


def _opt_int(v):
    return None if v in (None, "", "none") else int(v)


def _opt_str(v):
    return None if v in (None, "", "none") else str(v)


SCHEMA = {
    "seed": (_opt_int, None),
    "output.dir": (_opt_str, None),
    "compressor.kind": (str, "topk"),
    "compressor.k": (_opt_int, None),
    "compressor.k_ratio": (float, 0.01),
    "compressor.sample_ratio": (float, 0.01),
    "compressor.refine_iters": (int, 4),
    "train.workers": (int, 4),
    "train.lr": (float, 0.05),
    "train.momentum": (float, 0.9),
    "train.epochs": (int, 5),
    "train.iters": (_opt_int, None),
    "train.batch_size": (int, 32),
    "train.lr_decay": (float, 1.0),
    "train.lr_decay_epochs": (int, 0),
    "model.kind": (str, "mlp"),
    "model.hidden": (str, "100"),
    "model.activation": (str, "relu"),
    "data.images": (_opt_str, None),
    "data.labels": (_opt_str, None),
    "data.limit": (_opt_int, 10000),
    "data.synth.seed": (_opt_int, None),
    "data.synth.n": (int, 60000),
    "data.synth.m": (int, 784),
    "data.synth.C": (int, 10),
    "data.synth.separation": (float, 1.5),
    "hist.bins": (int, 100),
    "hist.checkpoints": (str, "0,100,200,300"),
}


def defaults():
    return {k: d for k, (_, d) in SCHEMA.items()}


def _flatten(table, prefix=""):
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        else:
            yield name, value


def coerce(key, value):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    conv = SCHEMA[key][0]
    if isinstance(value, list):
        value = ",".join(map(str, value))
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            table = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for key, value in _flatten(table):
        try:
            out[key] = coerce(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return out


def parse_overrides(args):
    """Turn ``['--train.lr', '0.1', '--seed=3']`` into a dict of coerced values."""
    out = {}
    it = iter(args)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key, eq, value = tok[2:].partition("=")
        if not eq:
            value = next(it, None)
            if value is None:
                raise ConfigError(f"missing value for --{key}")
        out[key] = coerce(key, value)
    return out
