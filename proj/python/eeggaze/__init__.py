"""Python access to the eeggaze C++ core.

Configs cross the boundary as JSON; the helpers here accept plain dicts.
"""

import json

from ._core import (  # noqa: F401
    BadMagicError,
    ConfigError,
    Dataset,
    Error,
    FormatError,
    IoError,
    Model,
    NumericError,
    ShapeError,
    ShapeMismatchError,
    TruncatedError,
    VersionError,
    audit_metric,
    gradient_suite,
    load_dataset,
    med,
    permute_channels,
    rmse,
    save_dataset,
    split_by_participant,
)
from . import _core


def _dump(cfg):
    return cfg if isinstance(cfg, str) else json.dumps(cfg)


def model_config(preset="default", **overrides):
    cfg = json.loads(_core.model_preset(preset))
    cfg.update(overrides)
    return cfg


def param_count(config):
    return _core.param_count(_dump(config))


def token_count(config):
    return _core.token_count(_dump(config))


def lr_at_epoch(train_config, epoch):
    return _core.lr_at_epoch(_dump(train_config), epoch)


def generate_synthetic(**config):
    return _core.generate_synthetic(json.dumps(config))


def build_model(config, seed=0):
    return Model(_dump(config), seed)


def train(model, train_set, val_set, **train_config):
    return model.train(train_set, val_set, json.dumps(train_config))


def run_experiment(spec, report_dir=None):
    return json.loads(_core.run_experiment(_dump(spec), report_dir))
