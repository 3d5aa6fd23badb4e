"""Run configuration: a flat key = value file format plus typed defaults.

Precedence, lowest to highest: built-in defaults, config file values, then
command-line flags.  Lines starting with ``#`` (and blank lines) are ignored;
inline comments are not supported.  Every key has a usable default, so an
empty config runs the synthetic end-to-end demo.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .data import SMOOTHING_KINDS, SplitConfig
from .fusion import FusionInputError, FusionWeights
from .models import (
    KIND_DENSENET,
    KIND_INCEPTION,
    ModelConfigError,
    ModelSpec,
    default_densenet_spec,
    default_inception_spec,
)
from .training import LOSS_KINDS, TrainConfig, TrainingError

ARCH_NAMES = ("inception", "densenet")
ARCH_KINDS = {"inception": KIND_INCEPTION, "densenet": KIND_DENSENET}


class ConfigError(ValueError):
    """Invalid configuration file, key, or value."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs; field names double as config-file keys."""

    manifest: str = ""  # empty: commands that need data use the synthetic set
    out_dir: str = "runs"
    seed: int = 0
    arch: str = "inception"
    test_fraction: float = 0.20
    val_fraction: float = 0.10
    epochs: int = 50
    batch_size: int = 32
    loss: str = "bce"
    smoothing: str = "none"
    inception_spec: str = ""  # empty: built-in default topology
    densenet_spec: str = ""
    weights: str = "0.45,0.55"
    threshold: float = 0.5
    sweep_step: float = 0.05
    demo_samples: int = 200
    demo_size: int = 8

    def validate(self):
        if self.arch not in ARCH_NAMES:
            raise ConfigError(f"unknown arch {self.arch!r}, expected one of {list(ARCH_NAMES)}")
        if self.smoothing not in SMOOTHING_KINDS:
            raise ConfigError(
                f"unknown smoothing {self.smoothing!r}, expected one of {list(SMOOTHING_KINDS)}"
            )
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.loss!r}, expected one of {list(LOSS_KINDS)}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in (0,1), got {self.test_fraction}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0,1), got {self.val_fraction}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0,1), got {self.threshold}")
        if not 0.0 < self.sweep_step <= 0.5:
            raise ConfigError(f"sweep_step must be in (0,0.5], got {self.sweep_step}")
        if self.demo_samples < 20:
            raise ConfigError(f"demo_samples must be >= 20, got {self.demo_samples}")
        if self.demo_size < 3:
            raise ConfigError(f"demo_size must be >= 3, got {self.demo_size}")
        self.fusion_weights()  # raises ConfigError on a malformed weights string
        return self

    # Typed views onto the flat fields -------------------------------------

    def split_config(self):
        return SplitConfig(
            test_fraction=self.test_fraction,
            val_fraction=self.val_fraction,
            seed=self.seed,
        )

    def train_config(self):
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            loss=self.loss,
            val_fraction=self.val_fraction,
        )

    def model_spec(self, arch=None):
        arch = self.arch if arch is None else arch
        if arch not in ARCH_NAMES:
            raise ConfigError(f"unknown arch {arch!r}, expected one of {list(ARCH_NAMES)}")
        output_units = 2 if self.loss == "softmax" else 1
        text = self.inception_spec if arch == "inception" else self.densenet_spec
        if not text:
            builder = default_inception_spec if arch == "inception" else default_densenet_spec
            return dataclasses.replace(builder(), output_units=output_units)
        try:
            spec = ModelSpec.from_text(text)
        except ModelConfigError as exc:
            raise ConfigError(f"bad {arch}_spec: {exc}") from exc
        if spec.kind != ARCH_KINDS[arch]:
            raise ConfigError(
                f"{arch}_spec declares kind {spec.kind!r}, expected {ARCH_KINDS[arch]!r}"
            )
        return dataclasses.replace(spec, output_units=output_units)

    def fusion_weights(self):
        parts = self.weights.split(",")
        if len(parts) != 2:
            raise ConfigError(f"weights must be 'w1,w2', got {self.weights!r}")
        try:
            values = [float(part) for part in parts]
        except ValueError as exc:
            raise ConfigError(f"weights must be numeric, got {self.weights!r}") from exc
        try:
            return FusionWeights(values)
        except FusionInputError as exc:
            raise ConfigError(f"bad weights: {exc}") from exc


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key, text):
    kind = _FIELDS[key].type
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"key {key!r} expects a number, got {text!r}") from exc


def parse_config_text(text, source="<config>"):
    """Parse flat ``key = value`` lines into a dict of typed values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source} line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{source} line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source} line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, value)
    return values


def load_config(path=None, overrides=None):
    """Build a validated RunConfig from defaults, an optional file, and flags."""
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), source=str(path)))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown config override {key!r}")
        values[key] = value
    config = RunConfig(**values)
    config.validate()
    return config
