"""Run configuration: flat ``[section]`` / ``key = value`` files with includes.

A line ``@include other.cfg`` splices another file (path relative to the
including file); later assignments win.  Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import os
import types
import typing
from dataclasses import dataclass, field

from .datagen import AugmentConfig, DataConfig
from .ltl import GenConfig
from .neural.finetune import FinetuneConfig
from .neural.train import TrainConfig, paper_scale_config
from .verifier import Limits

ENV_VAR = "CNML_CONFIG"
SNAPSHOT_SUFFIX = ".config.ini"


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    seed: int = 0
    workers: int = 1
    deterministic: bool = False
    log_level: str = "INFO"


@dataclass
class GenSection:
    count: int = 2000
    n_inputs: int = 4
    n_outputs: int = 4
    min_assumptions: int = 0
    max_assumptions: int = 2
    min_guarantees: int = 1
    max_guarantees: int = 3
    max_depth: int = 6
    conj_prob: float = 0.25
    neg_prob: float = 0.3
    noise_output_prob: float = 0.5
    dead_logic_prob: float = 0.3
    fallback_attempts: int = 200
    synth_command: str = ""            # external synthesizer; empty disables it
    synth_timeout: float = 60.0

    def data_config(self) -> DataConfig:
        gen = GenConfig(self.n_inputs, self.n_outputs, self.min_assumptions, self.max_assumptions,
                        self.min_guarantees, self.max_guarantees, self.max_depth, self.conj_prob, self.neg_prob)
        return DataConfig(count=self.count, gen=gen, noise_output_prob=self.noise_output_prob,
                          dead_logic_prob=self.dead_logic_prob, fallback_attempts=self.fallback_attempts)


@dataclass
class AugmentSection:
    shuffle: bool = True
    pad: bool = True
    split: bool = False
    target_inputs: int = 0             # 0: maximum over the input pairs
    target_outputs: int = 0

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(self.shuffle, self.pad, self.split, self.target_inputs or None,
                             self.target_outputs or None)


@dataclass
class BatchSection:
    batch_size: int = 64
    filter_mode: str = "none"
    sample_cells: int = 32


@dataclass
class RetrievalSection:
    n: int = 100
    mode: str = "cross"
    count: int = 20


@dataclass
class FinetuneSection(FinetuneConfig):
    count: int = 2000                  # labeled pairs drawn from the corpus


@dataclass
class EvalSection:
    wl_h: int = 3
    baselines: str = "untrained,random,levenshtein,bag_of_keywords,wl"
    siamese_checkpoint: str = ""
    bins: int = 20


@dataclass
class VerifierSection(Limits):
    refute_trials: int = 16


SECTIONS = {
    "run": RunSection, "gen": GenSection, "augment": AugmentSection, "batch": BatchSection,
    "retrieval": RetrievalSection, "train": TrainConfig, "finetune": FinetuneSection, "eval": EvalSection,
    "verifier": VerifierSection,
}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    gen: GenSection = field(default_factory=GenSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    batch: BatchSection = field(default_factory=BatchSection)
    retrieval: RetrievalSection = field(default_factory=RetrievalSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)
    eval: EvalSection = field(default_factory=EvalSection)
    verifier: VerifierSection = field(default_factory=VerifierSection)

    def limits(self) -> Limits:
        v = self.verifier
        return Limits(v.max_states, v.timeout, v.max_automaton_states)

    def set(self, section: str, key: str, raw) -> None:
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        obj = getattr(self, section)
        types_ = _field_types(type(obj))
        if key not in types_:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        setattr(obj, key, _coerce(raw, types_[key], f"{section}.{key}"))

    def to_text(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            obj = getattr(self, name)
            for key in _field_types(type(obj)):
                lines.append(f"{key} = {_render(getattr(obj, key))}")
            lines.append("")
        return "\n".join(lines)


def _field_types(cls) -> dict:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(raw, typ, where: str):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if isinstance(typ, types.UnionType) or typing.get_origin(typ) is typing.Union:
        args = [a for a in typing.get_args(typ) if a is not type(None)]
        if text.lower() in ("", "none"):
            return None
        typ = args[0]
    try:
        if typ is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        if typ is str:
            return text
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {typ.__name__}") from None
    raise ConfigError(f"{where}: unsupported field type {typ}")


def _expand_includes(path: str, seen: tuple = ()) -> str:
    path = os.path.abspath(path)
    if path in seen:
        raise ConfigError(f"include cycle through {path}")
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    out = []
    for line in lines:
        stripped = line.strip()
        if stripped.startswith("@include"):
            target = stripped[len("@include"):].strip()
            if not target:
                raise ConfigError(f"{path}: @include without a path")
            out.append(_expand_includes(os.path.join(os.path.dirname(path), target), seen + (path,)))
        else:
            out.append(line)
    return "\n".join(out)


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    parser = configparser.ConfigParser(interpolation=None, strict=False, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    for section in parser.sections():
        for key, value in parser.items(section, raw=True):
            cfg.set(section, key, value)
    return cfg


def load_config(path: str | None = None, preset: str | None = None,
                overrides: typing.Iterable[str] = ()) -> RunConfig:
    """Preset, then the config file (``path`` or ``$CNML_CONFIG``), then
    ``section.key=value`` overrides."""
    cfg = preset_config(preset) if preset else RunConfig()
    path = path or os.environ.get(ENV_VAR) or None
    if path:
        cfg = parse_config_text(_expand_includes(path), cfg)
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        cfg.set(section, name, value)
    return cfg


def preset_config(name: str) -> RunConfig:
    if name == "desk":
        return RunConfig()
    if name == "paper-scale":
        cfg = RunConfig()
        cfg.train = paper_scale_config()
        cfg.batch.batch_size = cfg.train.batch_size
        cfg.run.seed = cfg.train.seed
        return cfg
    raise ConfigError(f"unknown preset {name!r} (desk, paper-scale)")


def write_snapshot(artifact_path: str, cfg: RunConfig, extra: dict | None = None) -> str:
    """Write the resolved config next to ``artifact_path``."""
    path = artifact_path + SNAPSHOT_SUFFIX
    text = cfg.to_text()
    if extra:
        text += "\n# invocation: " + json.dumps(extra, sort_keys=True) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return path
