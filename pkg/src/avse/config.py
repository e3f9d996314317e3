"""Run configuration: an INI file with one section per stage.

Precedence is command-line flag > file value > built-in default.  Every
section maps onto a dataclass so the defaults live in exactly one place::

    [run]      seed
    [corpus]   CorpusSpec fields
    [model]    ModelConfig fields (kind is chosen with --model)
    [train]    epochs, patience, batch_size, step_size
    [mcem]     McemConfig fields (the seed comes from [run])
    [evaluate] snrs, noise kinds, baselines
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import NOISE_KINDS, CorpusSpec
from .errors import ValidationError
from .mcem import McemConfig
from .models import ModelConfig


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 500
    patience: int = 20
    batch_size: int = 128
    step_size: float = 1e-4

    def __post_init__(self):
        if self.epochs < 0 or self.patience < 1 or self.batch_size < 1 or self.step_size <= 0:
            raise ValidationError("invalid training settings")


@dataclass(frozen=True)
class EvaluateSettings:
    snrs: tuple = (-5.0, 0.0, 5.0)
    noises: tuple = NOISE_KINDS
    nmf_baseline: bool = True
    identity_baseline: bool = False
    nmf_rank: int = 64
    nmf_iters: int = 100

    def __post_init__(self):
        unknown = set(self.noises) - set(NOISE_KINDS)
        if unknown:
            raise ValidationError(f"unknown noise kinds {sorted(unknown)}")
        if not self.snrs:
            raise ValidationError("need at least one SNR")


SECTIONS = {
    "run": RunSettings,
    "corpus": CorpusSpec,
    "model": ModelConfig,
    "train": TrainSettings,
    "mcem": McemConfig,
    "evaluate": EvaluateSettings,
}
_HIDDEN = {"mcem": {"seed"}}  # filled in from [run]


@dataclass
class Settings:
    run: RunSettings = field(default_factory=RunSettings)
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    mcem: McemConfig = field(default_factory=McemConfig)
    evaluate: EvaluateSettings = field(default_factory=EvaluateSettings)

    @property
    def seed(self) -> int:
        return self.run.seed

    def mcem_config(self) -> McemConfig:
        return dataclasses.replace(self.mcem, seed=self.seed)


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse(raw: str, default, name: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool) or (default is None and raw.lower() in ("auto", "true", "false")):
            if raw.lower() == "auto":
                return None
            lowered = raw.lower()
            if lowered not in configparser.RawConfigParser.BOOLEAN_STATES:
                raise ValueError(raw)
            return configparser.RawConfigParser.BOOLEAN_STATES[lowered]
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(s) for s in items)
            return tuple(items)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ValidationError(f"cannot parse {name} = {raw!r}") from None


def _defaults(cls) -> dict:
    return {f.name: f.default for f in fields(cls)}


def _build(section: str, values: dict):
    try:
        return SECTIONS[section](**values)
    except TypeError as exc:
        raise ValidationError(f"[{section}]: {exc}") from None


def load_settings(path=None, overrides: dict | None = None) -> Settings:
    """Defaults, then the INI file at ``path``, then ``overrides``.

    ``overrides`` maps ``"section.key"`` to an already-typed value.
    """
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file {path} not found")
        parser.read(path, encoding="utf-8")
        for section in parser.sections():
            if section not in SECTIONS:
                raise ValidationError(f"unknown config section [{section}]")

    built = {}
    for section, cls in SECTIONS.items():
        defaults = _defaults(cls)
        values = {}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                if key not in defaults or key in _HIDDEN.get(section, ()):
                    raise ValidationError(f"unknown key {key!r} in [{section}]")
                values[key] = _parse(raw, defaults[key], f"{section}.{key}")
        for dotted, value in (overrides or {}).items():
            sec, key = dotted.split(".", 1)
            if sec == section and value is not None:
                values[key] = value
        built[section] = _build(section, values)
    return Settings(**built)


def render_settings(settings: Settings | None = None) -> str:
    """The full configuration as INI text; ``print-config`` emits this."""
    settings = settings or Settings()
    lines = []
    for section in SECTIONS:
        obj = getattr(settings, section)
        lines.append(f"[{section}]")
        for f in fields(obj):
            if f.name in _HIDDEN.get(section, ()):
                continue
            value = getattr(obj, f.name)
            if section == "model" and f.name == "use_embedder" and value == (obj.visual_input_dim != obj.visual_dim):
                value = None
            lines.append(f"{f.name} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)
