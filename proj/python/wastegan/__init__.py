"""Python front end for the wastegan C++ core.

Config arguments accept a dict in the same layout as the JSON run configs
(for example ``{"corpus": {"resolution": 16}}``), a path to such a file, or
None for the defaults. Missing keys keep their defaults; unknown keys raise
ConfigError.
"""

from __future__ import annotations

import json
import os
from typing import Any, Mapping, Optional, Union

from . import _core
from ._core import (
    NUM_CLASSES,
    ConfigError,
    ContractError,
    DimensionError,
    Error,
    GanModel as _GanModel,
    InvariantError,
    IoError,
    TrainingDiverged,
    corpus_checksum,
    file_checksum,
    miou,
    oracle_logits,
    read_checkpoint,
    read_corpus,
    select_grasp,
    slog,
    write_checkpoint,
)

ConfigLike = Optional[Union[Mapping[str, Any], str, os.PathLike]]

__all__ = [
    "NUM_CLASSES", "ConfigError", "ContractError", "DimensionError", "Error", "InvariantError", "IoError",
    "TrainingDiverged", "GanModel", "augmentation_sweep", "config_hash", "corpus_checksum", "file_checksum",
    "generate_scene", "load_config", "miou", "oracle_logits", "read_checkpoint", "read_corpus", "select_grasp",
    "slog", "train_gan", "write_checkpoint", "write_corpus",
]


def _config_json(config: ConfigLike) -> str:
    if config is None:
        return ""
    if isinstance(config, (str, os.PathLike)):
        with open(config, encoding="utf-8") as f:
            return f.read()
    return json.dumps(dict(config))


def load_config(config: ConfigLike = None) -> dict:
    """Fully populated config dict after validation."""
    return json.loads(_core.normalize_config(_config_json(config)))


def config_hash(config: ConfigLike = None) -> str:
    return _core.config_hash(_config_json(config))


def generate_scene(index: int, config: ConfigLike = None):
    """(image float32 [3, R, R], mask uint8 [R, R]) for scene `index`."""
    return _core.generate_scene(index, _config_json(config))


def write_corpus(directory: Union[str, os.PathLike], config: ConfigLike = None) -> None:
    _core.write_corpus(os.fspath(directory), _config_json(config))


class GanModel(_GanModel):
    """Generator plus both discriminators; `sample` returns (images, soft masks, hard labels)."""

    def __init__(self, config: ConfigLike = None):
        super().__init__(_config_json(config))


def train_gan(model, corpus_dir, out_dir=None, config: ConfigLike = None) -> dict:
    return _core.train_gan(model, os.fspath(corpus_dir), os.fspath(out_dir) if out_dir else "", _config_json(config))


def augmentation_sweep(checkpoint, corpus_dir, config: ConfigLike = None) -> dict:
    return _core.augmentation_sweep(os.fspath(checkpoint), os.fspath(corpus_dir), _config_json(config))
