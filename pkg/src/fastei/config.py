"""Experiment configuration: schema, defaults, file parsing, overrides.

The config file is a human-editable text format of ``[section]`` headers and
``key = value`` lines (a TOML subset: strings, numbers, booleans, flat
lists). Every run resolves a full config (defaults included), validates it
against the schema below, and writes the resolved snapshot next to its
outputs so the run is reproducible from the snapshot alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Union

from .errors import ConfigError

TRAINER_KINDS = ("mc", "ei", "fei", "pnp_fei", "eqpnp_fei", "supervised")


@dataclass
class DataConfig:
    source: str = "shepp_logan_variants"
    size: int = 64
    train_ids: str = "1-10"
    test_ids: str = "11-20"
    noise_std: float = 0.0

    def validate(self):
        if self.size < 8:
            raise ConfigError("data.size must be >= 8")
        if self.noise_std < 0:
            raise ConfigError("data.noise_std must be >= 0")


@dataclass
class PhysicsConfig:
    kind: str = "radon"
    num_angles: int = 50
    angle_set: List[float] = field(default_factory=list)
    normalize: bool = True
    mask_keep: float = 0.5
    mask_seed: int = 0
    num_measurements: int = 0

    def validate(self):
        if self.kind not in ("radon", "inpainting", "gaussian"):
            raise ConfigError(f"physics.kind must be radon|inpainting|gaussian, got {self.kind!r}")
        if self.kind == "radon" and not self.angle_set and self.num_angles < 1:
            raise ConfigError("physics.num_angles must be >= 1")
        if self.kind == "inpainting" and not 0.0 < self.mask_keep <= 1.0:
            raise ConfigError("physics.mask_keep must lie in (0, 1]")
        if self.kind == "gaussian" and self.num_measurements < 1:
            raise ConfigError("physics.num_measurements must be >= 1 for gaussian physics")


@dataclass
class GroupConfig:
    family: str = "rotation"
    angles: List[float] = field(default_factory=list)
    max_shift: int = 8
    samples: int = 1

    def validate(self):
        if self.family not in ("rotation", "shift", "flip"):
            raise ConfigError(f"group.family must be rotation|shift|flip, got {self.family!r}")
        if self.samples < 1:
            raise ConfigError("group.samples must be >= 1")


@dataclass
class ModelConfig:
    arch: str = "small_cnn"
    channels: int = 16
    unet_channels: List[int] = field(default_factory=lambda: [64, 128, 256, 512])
    init: str = "random"

    def validate(self):
        if self.arch not in ("unet_residual", "small_cnn", "linear"):
            raise ConfigError(f"model.arch must be unet_residual|small_cnn|linear, got {self.arch!r}")


@dataclass
class TrainerSection:
    kind: str = "fei"
    alpha: float = 100.0
    lambda_: float = 1.0

    def validate(self):
        if self.kind not in TRAINER_KINDS:
            raise ConfigError(f"trainer.kind must be one of {TRAINER_KINDS}, got {self.kind!r}")
        if self.alpha < 0:
            raise ConfigError("trainer.alpha must be >= 0")
        if self.lambda_ <= 0:
            raise ConfigError("trainer.lambda must be > 0")


@dataclass
class NagConfig:
    beta: float = 0.1
    eta: float = 0.01
    J: int = 10
    persist_velocity: bool = False

    def validate(self):
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("nag.beta must lie in [0, 1)")
        if self.eta <= 0:
            raise ConfigError("nag.eta must be > 0")
        if self.J < 0:
            raise ConfigError("nag.J must be >= 0")


@dataclass
class PnpConfig:
    gamma: float = 0.01
    warm_start: bool = False

    def validate(self):
        if self.gamma < 0:
            raise ConfigError("pnp.gamma must be >= 0")


@dataclass
class DenoiserConfig:
    name: str = "identity"
    weights_path: str = ""

    def validate(self):
        if self.name not in ("identity", "median", "tv", "cnn_pretrained", "bm3d_external"):
            raise ConfigError(f"unknown denoiser.name {self.name!r}")


@dataclass
class OptimConfig:
    lr: float = 0.001
    weight_decay: float = 1e-8
    epochs: int = 100

    def validate(self):
        if self.lr <= 0:
            raise ConfigError("optim.lr must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("optim.weight_decay must be >= 0")
        if self.epochs < 1:
            raise ConfigError("optim.epochs must be >= 1")


@dataclass
class EmaConfig:
    decay: float = 0.99
    weights_decay: float = 0.99

    def validate(self):
        if not 0.0 <= self.decay < 1.0:
            raise ConfigError("ema.decay must lie in [0, 1)")
        if not 0.0 <= self.weights_decay < 1.0:
            raise ConfigError("ema.weights_decay must lie in [0, 1)")


@dataclass
class SeedConfig:
    model: int = 10
    group: int = 20
    noise: int = 30

    def validate(self):
        pass


@dataclass
class OutputConfig:
    dir: str = "runs"

    def validate(self):
        if not self.dir:
            raise ConfigError("output.dir must be nonempty")


@dataclass
class RunConfig:
    checkpoint_every: int = 0
    torch_threads: int = 1

    def validate(self):
        if self.checkpoint_every < 0:
            raise ConfigError("run.checkpoint_every must be >= 0")
        if self.torch_threads < 0:
            raise ConfigError("run.torch_threads must be >= 0")


@dataclass
class BenchmarkConfig:
    kinds: List[str] = field(default_factory=lambda: ["ei", "fei", "pnp_fei"])
    threshold_method: str = "ei"
    # per-method hyperparameter choices, as "kind:section.key=value" strings;
    # only method-level sections may differ so the data, physics, seeds and
    # optimizer stay shared across the comparison
    overrides: List[str] = field(default_factory=list)

    _OVERRIDABLE = ("trainer", "nag", "pnp", "denoiser")

    def validate(self):
        for k in self.kinds:
            if k not in TRAINER_KINDS:
                raise ConfigError(f"benchmark.kinds contains unknown trainer {k!r}")
        for item in self.overrides:
            if ":" not in item:
                raise ConfigError(
                    f"benchmark.overrides entries look like kind:section.key=value, got {item!r}"
                )
            kind, rest = item.split(":", 1)
            if kind not in TRAINER_KINDS:
                raise ConfigError(f"benchmark.overrides names unknown trainer {kind!r}")
            if "=" not in rest or "." not in rest.split("=", 1)[0]:
                raise ConfigError(
                    f"benchmark.overrides entries look like kind:section.key=value, got {item!r}"
                )
            section = rest.split(".", 1)[0].strip()
            if section not in self._OVERRIDABLE:
                raise ConfigError(
                    f"benchmark.overrides may only touch {self._OVERRIDABLE}, got [{section}]"
                )

    def kind_overrides(self, kind: str) -> List[str]:
        return [item.split(":", 1)[1] for item in self.overrides
                if item.split(":", 1)[0] == kind]


_SECTIONS = {
    "data": DataConfig,
    "physics": PhysicsConfig,
    "group": GroupConfig,
    "model": ModelConfig,
    "trainer": TrainerSection,
    "nag": NagConfig,
    "pnp": PnpConfig,
    "denoiser": DenoiserConfig,
    "optim": OptimConfig,
    "ema": EmaConfig,
    "seed": SeedConfig,
    "output": OutputConfig,
    "run": RunConfig,
    "benchmark": BenchmarkConfig,
}

# 'lambda' is a Python keyword, so the file key maps to the lambda_ field
_KEY_ALIASES = {("trainer", "lambda"): "lambda_"}

# id selections may be a range string like "1-10" or an explicit list
_ID_KEYS = {("data", "train_ids"), ("data", "test_ids")}


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    group: GroupConfig = field(default_factory=GroupConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainerSection = field(default_factory=TrainerSection)
    nag: NagConfig = field(default_factory=NagConfig)
    pnp: PnpConfig = field(default_factory=PnpConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    ema: EmaConfig = field(default_factory=EmaConfig)
    seed: SeedConfig = field(default_factory=SeedConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    run: RunConfig = field(default_factory=RunConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)

    def validate(self) -> "ExperimentConfig":
        for f in fields(self):
            getattr(self, f.name).validate()
        return self

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            section = getattr(self, f.name)
            sec_out = {}
            for sf in fields(section):
                key = "lambda" if sf.name == "lambda_" else sf.name
                sec_out[key] = getattr(section, sf.name)
            out[f.name] = sec_out
        return out

    def snapshot(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def _parse_scalar(text: str, where: str, bare_strings: bool = False):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part, where, bare_strings) for part in inner.split(",")]
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    # command-line overrides may pass strings unquoted; files must quote them
    if bare_strings and text and all(c.isalnum() or c in "_-./" for c in text):
        return text
    raise ConfigError(f"{where}: cannot parse value {text!r}")


def parse_config_text(text: str) -> dict:
    """Parse the [section] / key = value subset into nested dicts."""
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = line.split("=", 1)
        sections[current][key.strip()] = _parse_scalar(value, f"line {lineno}")
    return sections


def _coerce(section: str, key: str, value, target_type):
    if (section, key) in _ID_KEYS:
        if isinstance(value, str) or (
            isinstance(value, list) and all(isinstance(v, int) for v in value)
        ):
            return value
        raise ConfigError(f"{section}.{key}: expected a range string or list of ints")
    # ints are acceptable where floats are expected; everything else must match
    if target_type is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if target_type is int and isinstance(value, bool):
        raise ConfigError(f"{section}.{key}: expected int, got bool")
    if target_type in (int, float, bool, str) and not isinstance(value, target_type):
        raise ConfigError(
            f"{section}.{key}: expected {target_type.__name__}, got {type(value).__name__}"
        )
    if target_type is list and not isinstance(value, list):
        raise ConfigError(f"{section}.{key}: expected a list")
    return value


def from_dict(raw: dict) -> ExperimentConfig:
    """Build a validated ExperimentConfig; unknown sections or keys are errors."""
    cfg = ExperimentConfig()
    for section_name, payload in raw.items():
        if section_name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section_name}]")
        section = getattr(cfg, section_name)
        valid = {f.name: f for f in fields(section)}
        for key, value in payload.items():
            field_name = _KEY_ALIASES.get((section_name, key), key)
            if field_name not in valid:
                raise ConfigError(f"unknown config key {section_name}.{key}")
            current = getattr(section, field_name)
            target_type = type(current) if not isinstance(current, list) else list
            setattr(section, field_name, _coerce(section_name, key, value, target_type))
    return cfg.validate()


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return from_dict(parse_config_text(path.read_text()))


def apply_overrides(cfg: ExperimentConfig, overrides: List[str]) -> ExperimentConfig:
    """Apply 'section.key=value' override strings on top of a config."""
    raw = {}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        raw.setdefault(section.strip(), {})[key.strip()] = _parse_scalar(
            value, f"override {item!r}", bare_strings=True
        )
    merged = cfg.to_dict()
    for section, payload in raw.items():
        if section not in merged:
            raise ConfigError(f"unknown config section [{section}]")
        merged[section].update(payload)
    return from_dict(merged)
