"""Structured run configuration: YAML file sections with CLI-flag overrides.

A config file holds nested key-value sections named after the component they
configure (``weights``, ``model``, ``feedback``, ``solver``, ``noise``,
``split``, ``synth``).  Explicitly passed CLI flags always win over file
values.
"""

from __future__ import annotations

from dataclasses import fields

import yaml

from .errors import ConfigError


def load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    return data


def build(cls, file_section: dict | None, overrides: dict):
    """Instantiate a config dataclass from a file section plus CLI overrides.

    ``overrides`` entries with value None (flag not given) are ignored.
    Unknown keys in the file section raise ConfigError.
    """
    known = {f.name for f in fields(cls)}
    values = {}
    section = file_section or {}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} config keys: {sorted(unknown)}")
    values.update(section)
    values.update({k: v for k, v in overrides.items() if v is not None})
    bad = set(values) - known
    if bad:
        raise ConfigError(f"unknown {cls.__name__} option(s): {sorted(bad)}")
    obj = cls(**values)
    validate = getattr(obj, "validate", None)
    if validate is not None:
        validate()
    return obj
