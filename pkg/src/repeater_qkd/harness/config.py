"""Flat key = value configuration with one section per protocol.

Example::

    [channel]
    alpha_att = 0.17
    c = 2e5

    [original]
    F0 = 0.9
    p_G = 0.995

Keys in ``[channel]`` apply to every protocol. Values are parsed as int,
float (``inf`` allowed) or left as strings.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .search import CHANNEL_KEYS, PARAM_DEFAULTS, PROTOCOLS, ConfigError

SECTIONS = ("channel",) + PROTOCOLS


def parse_value(text: str) -> Any:
    text = text.strip()
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


@dataclass
class Config:
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)

    def params(self, protocol: str) -> dict[str, Any]:
        """Protocol defaults overlaid with the channel and protocol sections."""
        if protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {protocol!r}")
        return {
            **PARAM_DEFAULTS[protocol],
            **self.sections.get("channel", {}),
            **self.sections.get(protocol, {}),
        }

    def set(self, assignment: str, default_section: str) -> None:
        """Apply ``[section.]key=value``; without a section the key goes to ``default_section``."""
        key, sep, value = assignment.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {assignment!r} is not of the form key=value")
        section, dot, name = key.strip().rpartition(".")
        if not dot:
            section = "channel" if name in CHANNEL_KEYS else default_section
        self._put(section, name, value)

    def _put(self, section: str, name: str, value: str) -> None:
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        allowed = set(CHANNEL_KEYS) if section == "channel" else set(PARAM_DEFAULTS[section]) | set(CHANNEL_KEYS)
        if name not in allowed:
            raise ConfigError(f"unknown key {name!r} in [{section}]")
        self.sections.setdefault(section, {})[name] = parse_value(value)


def load_config(path: str | Path | None = None, overrides: Iterable[str] = (), default_section: str = "original") -> Config:
    cfg = Config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        parser.optionxform = str  # keep F0, p_G case
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            for name, value in parser.items(section):
                cfg._put(section, name, value)
    for assignment in overrides:
        cfg.set(assignment, default_section)
    return cfg
