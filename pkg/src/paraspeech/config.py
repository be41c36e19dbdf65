"""Run configuration: flat section.key values from file and flags.

A config file holds `section.key = value` lines (JSON-style scalars).  Flag
overrides use the same dotted keys.  Every resolved value is traceable to a
default, the file, or a flag, and the canonical sorted snapshot of that
resolution is written into each run directory so a run can be reproduced
from the snapshot plus the seed alone.
"""

import dataclasses
import json
from pathlib import Path

from .audio import AudioConfig
from .errors import InvalidConfig
from .model import ModelConfig
from .semantic import CUAttentionConfig
from .train import TrainConfig

# section name -> the dataclass whose fields it may set
_SECTIONS = {
    "audio": AudioConfig,
    "model": ModelConfig,
    "cu": CUAttentionConfig,
    "train": TrainConfig,
}
# settable only when the owning object is built (not from file/flags)
_RESERVED = {"model.vocab_size", "model.cu"}

_SEMANTIC_DEFAULTS = {"embedder": "hash", "hash_seed": 0, "model_dir": ""}


def parse_value(text: str):
    """JSON scalar when it parses as one, raw string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config_file(path) -> dict:
    """`section.key = value` lines; blank lines and # comments ignored."""
    values = {}
    path = Path(path)
    if not path.exists():
        raise InvalidConfig(f"config file not found: {path}")
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{path}:{lineno}: expected `section.key = value`")
        key, _, raw = line.partition("=")
        values[key.strip()] = parse_value(raw.strip())
    return values


def _check_key(key: str):
    section, _, name = key.partition(".")
    if section == "semantic":
        if name not in _SEMANTIC_DEFAULTS:
            raise InvalidConfig(f"unknown config key {key!r}")
        return
    cls = _SECTIONS.get(section)
    if cls is None or not name:
        raise InvalidConfig(f"unknown config section in {key!r}")
    if key in _RESERVED or name not in {f.name for f in dataclasses.fields(cls)}:
        raise InvalidConfig(f"unknown config key {key!r}")


class RunConfig:
    """Merged settings with per-key provenance (default < file < flag)."""

    def __init__(self, file_values=None, flag_values=None):
        self.values = {}
        self.provenance = {}
        for source, bundle in (("file", file_values or {}), ("flag", flag_values or {})):
            for key, value in bundle.items():
                _check_key(key)
                self.values[key] = value
                self.provenance[key] = source

    @classmethod
    def load(cls, config_path=None, flag_values=None) -> "RunConfig":
        file_values = load_config_file(config_path) if config_path else {}
        return cls(file_values, flag_values)

    def _section(self, name: str) -> dict:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def audio(self) -> AudioConfig:
        return AudioConfig(**self._section("audio"))

    def train(self, **overrides) -> TrainConfig:
        kwargs = {**self._section("train"), **overrides}
        return TrainConfig(**kwargs)

    def model(self, vocab_size: int) -> ModelConfig:
        cu = CUAttentionConfig(**self._section("cu"))
        audio_cfg = self.audio()
        kwargs = {"mel_bins": audio_cfg.mel_bins, **self._section("model")}
        return ModelConfig(vocab_size=vocab_size, cu=cu, **kwargs)

    def semantic(self) -> dict:
        return {**_SEMANTIC_DEFAULTS, **self._section("semantic")}

    def snapshot(self, seed=None) -> str:
        """Canonical sorted resolution of every field with its source."""
        resolved = {}
        for section, cls in _SECTIONS.items():
            instance = cls(vocab_size=1) if cls is ModelConfig else cls()
            for fld in dataclasses.fields(instance):
                key = f"{section}.{fld.name}"
                if key in _RESERVED:
                    continue
                resolved[key] = getattr(instance, fld.name)
        for name, value in _SEMANTIC_DEFAULTS.items():
            resolved[f"semantic.{name}"] = value
        for key, value in self.values.items():
            resolved[key] = value
        if seed is not None:
            resolved["run.seed"] = seed
            self.provenance.setdefault("run.seed", "flag")
        lines = [
            f"{key} = {json.dumps(resolved[key])}  # {self.provenance.get(key, 'default')}"
            for key in sorted(resolved)
        ]
        return "\n".join(lines) + "\n"

    def write_snapshot(self, run_dir, seed=None, name="config_snapshot.txt"):
        path = Path(run_dir) / name
        path.write_text(self.snapshot(seed), encoding="utf-8")
        return path
