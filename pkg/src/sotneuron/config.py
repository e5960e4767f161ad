"""Merged JSON run configuration with strict key checking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .arch import ComponentBudget
from .device import device_from_config
from .fet import fets_from_config
from .mlp import train_config_from
from .neuron import neuron_from_config

BLOCKS = ("device", "fet", "neuron", "mlp", "arch")
TOP_LEVEL = set(BLOCKS) | {"seed"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    device: dict = field(default_factory=dict)
    fet: dict = field(default_factory=dict)
    neuron: dict = field(default_factory=dict)
    mlp: dict = field(default_factory=dict)
    arch: dict = field(default_factory=dict)
    seed: int = 42

    def neuron_config(self, **device_overrides):
        device = {**self.device, **device_overrides}
        return neuron_from_config(device, self.fet, self.neuron)

    def device_params(self, **device_overrides):
        return device_from_config({**self.device, **device_overrides})

    def train_config(self):
        return train_config_from(self.mlp, self.seed)

    @property
    def dims(self) -> tuple:
        return tuple(self.mlp.get("dims", (400, 120, 84, 10)))

    def budget(self) -> ComponentBudget:
        return ComponentBudget.from_json(self.arch)


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for name in BLOCKS:
        if not isinstance(data.get(name, {}), dict):
            raise ConfigError(f"'{name}' must be an object")
    cfg = RunConfig(**{k: dict(data.get(k, {})) for k in BLOCKS}, seed=int(data.get("seed", 42)))
    # build every block once so bad keys and values fail before any work starts
    try:
        cfg.neuron_config()
        cfg.train_config()
        cfg.budget()
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return parse_config(data)
