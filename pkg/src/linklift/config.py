"""Flat key=value configuration files and the typed run configuration.

Precedence for `run`: command-line overrides > config file > defaults.
All randomness in a run flows from the named seeds here; nothing reads
the clock or OS entropy.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .records import IDENTITY_FIELDS
from .synth import SynthConfig


def parse_flat_file(path) -> dict:
    """``key = value`` lines; ``#`` comments and blank lines ignored."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _parse_pairs(text: str, what: str) -> dict:
    """``label:number,label:number`` lists used for groups and signal weights."""
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigError(f"bad {what} entry {part!r} (expected label:value)")
        label, value = part.split(":", 1)
        try:
            out[label.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"bad {what} value in {part!r}") from None
    if not out:
        raise ConfigError(f"empty {what} list")
    return out


_SYNTH_INT = {"size", "n_inputs", "n_features", "seed"}
_SYNTH_FLOAT = {"duplicate_rate", "base_rate", "typo_prob", "nickname_prob",
                "move_prob", "blank_phone_prob", "blank_email_prob",
                "blank_dob_prob", "phone_present", "email_present", "dob_present"}


def synth_config_from_dict(d: dict) -> SynthConfig:
    cfg = SynthConfig()
    for key, value in d.items():
        if key in _SYNTH_INT:
            setattr(cfg, key, _coerce_int(key, value))
        elif key in _SYNTH_FLOAT:
            setattr(cfg, key, _coerce_float(key, value))
        elif key == "groups":
            cfg.group_shares = _parse_pairs(value, "group share")
        elif key == "signal":
            cfg.signal_weights = _parse_pairs(value, "signal weight")
        else:
            raise ConfigError(f"unknown synth config key {key!r}")
    return cfg


def load_synth_config(path) -> SynthConfig:
    return synth_config_from_dict(parse_flat_file(path))


def bundled_synth_default_path():
    from importlib import resources

    return resources.files("linklift.data").joinpath("synth_default.cfg")


def _coerce_int(key, value):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


def _coerce_float(key, value):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


@dataclass
class RunConfig:
    reference: str = ""
    inputs: str = ""
    proportions: str = ""
    truth: str = ""                      # optional ground-truth file
    out_dir: str = ""
    mapping: dict = field(default_factory=dict)   # map.<field> keys
    backend: str = "memory"
    hot_key_cap: int = 1000
    threshold: float = 0.5
    k: int = 4
    n_lambdas: int = 50
    lambda_min_ratio: float = 1e-4
    n_targets: int = 10000
    min_group_positives: int = 500
    training_seed: int = 1
    cv_seed: int = 2
    workers: int = 1

    def validate(self) -> None:
        for name in ("reference", "inputs", "proportions", "out_dir"):
            if not getattr(self, name):
                raise ConfigError(f"missing required config key {name!r}")
        if self.backend not in ("memory", "sqlite"):
            raise ConfigError(f"backend must be memory or sqlite, got {self.backend!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0,1]")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.n_lambdas < 1:
            raise ConfigError("n_lambdas must be >= 1")
        if not 0.0 < self.lambda_min_ratio <= 1.0:
            raise ConfigError("lambda_min_ratio must be in (0,1]")
        if self.n_targets <= 0:
            raise ConfigError("n_targets must be positive")
        if self.hot_key_cap < 0:
            raise ConfigError("hot_key_cap must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for fieldname in self.mapping:
            if fieldname not in IDENTITY_FIELDS:
                raise ConfigError(f"map.{fieldname} is not a known record field")

    def resolved_lines(self) -> list:
        """Effective config as sorted key = value lines."""
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            if f.name == "mapping":
                for k in sorted(self.mapping):
                    lines.append(f"map.{k} = {self.mapping[k]}")
            else:
                lines.append(f"{f.name} = {getattr(self, f.name)}")
        return lines


_RUN_INT = {"hot_key_cap", "k", "n_lambdas", "n_targets", "min_group_positives",
            "training_seed", "cv_seed", "workers"}
_RUN_FLOAT = {"threshold", "lambda_min_ratio"}
_RUN_STR = {"reference", "inputs", "proportions", "truth", "out_dir", "backend"}


def run_config_from_dicts(*layers) -> RunConfig:
    """Build a RunConfig from low- to high-precedence key dicts."""
    cfg = RunConfig()
    for layer in layers:
        for key, value in layer.items():
            if key.startswith("map."):
                fieldname = key[4:]
                cfg.mapping[fieldname] = value
            elif key in _RUN_INT:
                setattr(cfg, key, _coerce_int(key, value))
            elif key in _RUN_FLOAT:
                setattr(cfg, key, _coerce_float(key, value))
            elif key in _RUN_STR:
                setattr(cfg, key, str(value))
            else:
                raise ConfigError(f"unknown run config key {key!r}")
    return cfg
