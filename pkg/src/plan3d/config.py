"""YAML descriptor loading and stable CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import numpy as np
import yaml

from . import hardware, model
from .errors import ConfigError, PlannerError
from .memory import ParallelConfig


def load_yaml(path: str | os.PathLike) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read ({exc.strerror})") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{p}: YAML parse error at {where}: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return data


def _section(data: dict, key: str, path) -> dict:
    sub = data.get(key, data)
    if not isinstance(sub, dict):
        raise ConfigError(f"{path}: section {key!r} must be a mapping")
    return sub


def load_model(ref: str) -> model.ModelConfig:
    """Preset name (e.g. ``gpt-175b``) or path to a YAML model descriptor."""
    if ref in model.PRESETS:
        return model.PRESETS[ref]
    if not Path(ref).exists():
        raise ConfigError(f"model {ref!r} is neither a preset ({', '.join(model.PRESETS)}) nor a file")
    data = _section(load_yaml(ref), "model", ref)
    try:
        return model.ModelConfig.from_dict(data)
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"{ref}: {exc}") from None


def load_hardware(ref: str) -> hardware.HardwareConfig:
    if ref in hardware.PRESETS:
        return hardware.PRESETS[ref]
    if not Path(ref).exists():
        raise ConfigError(f"hardware {ref!r} is neither a preset ({', '.join(hardware.PRESETS)}) nor a file")
    data = _section(load_yaml(ref), "hardware", ref)
    try:
        return hardware.HardwareConfig.from_dict(data)
    except (ConfigError, TypeError, ValueError) as exc:
        raise ConfigError(f"{ref}: {exc}") from None


def load_parallel(path: str | None, overrides: dict) -> ParallelConfig:
    """Parallel config from an optional YAML file; non-None ``overrides`` win."""
    data = {}
    if path:
        data = dict(_section(load_yaml(path), "parallel", path))
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ParallelConfig.from_dict(data)
    except (PlannerError, TypeError) as exc:
        raise ConfigError(f"{path or 'flags'}: {exc}") from None


def fmt(v) -> str:
    """Shortest round-trip text for numbers, lower-case booleans."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path, header, rows) -> None:
    path.write_text(csv_text(header, rows))


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
