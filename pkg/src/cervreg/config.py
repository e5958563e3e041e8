"""Plain-text experiment configuration.

Format::

    # comment
    [section]
    key = value
    [section.sub]        # nested section, addressed as "section.sub"
    other = 1, 2, 3      # comma lists

Values keep their source position so type errors can point at the exact
line and column.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w]*(?:\.[A-Za-z_][\w]*)*)\s*\]$")
_KEY = re.compile(r"^[A-Za-z_][\w]*$")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0, source: str = "<config>"):
        where = f"{source}:{line}:{col}: " if line else f"{source}: "
        super().__init__(where + message)
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Value:
    text: str
    line: int
    col: int


class Config:
    """Parsed sections: ``{section: {key: Value}}`` plus typed accessors."""

    def __init__(self, sections: dict, source: str = "<config>"):
        self.sections = sections
        self.source = source

    def has(self, section: str, key: str | None = None) -> bool:
        if section not in self.sections:
            return False
        return key is None or key in self.sections[section]

    def keys(self, section: str):
        return list(self.sections.get(section, {}))

    def _value(self, section, key):
        try:
            return self.sections[section][key]
        except KeyError:
            raise ConfigError(f"missing key '{key}' in section [{section}]", source=self.source) from None

    def _convert(self, v: Value, kind, what):
        try:
            return kind(v.text)
        except ValueError:
            raise ConfigError(f"expected {what}, got '{v.text}'", v.line, v.col, self.source) from None

    def get_str(self, section, key, default=None):
        if default is not None and not self.has(section, key):
            return default
        return self._value(section, key).text

    def get_int(self, section, key, default=None):
        if default is not None and not self.has(section, key):
            return default
        return self._convert(self._value(section, key), int, "an integer")

    def get_float(self, section, key, default=None):
        if default is not None and not self.has(section, key):
            return default
        return self._convert(self._value(section, key), float, "a number")

    def get_list(self, section, key, kind=str, default=None):
        if default is not None and not self.has(section, key):
            return list(default)
        v = self._value(section, key)
        out = []
        offset = 0
        for part in v.text.split(","):
            item = part.strip()
            col = v.col + offset + (len(part) - len(part.lstrip()))
            offset += len(part) + 1
            if not item:
                raise ConfigError("empty list item", v.line, col, self.source)
            out.append(self._convert(Value(item, v.line, col), kind, f"a list of {kind.__name__}"))
        return out

    def get_pair(self, section, key, kind=float, default=None):
        vals = self.get_list(section, key, kind, default)
        if len(vals) != 2:
            v = self._value(section, key)
            raise ConfigError("expected two comma-separated values", v.line, v.col, self.source)
        return tuple(vals)

    def error(self, section, key, message):
        v = self._value(section, key)
        return ConfigError(message, v.line, v.col, self.source)


def parse(text: str, source: str = "<config>") -> Config:
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            m = _SECTION.match(stripped)
            if not m:
                raise ConfigError(f"malformed section header '{stripped}'", lineno, col, source)
            current = m.group(1)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", lineno, col, source)
            sections[current] = {}
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", lineno, col, source)
        if current is None:
            raise ConfigError("key outside of any section", lineno, col, source)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        if not _KEY.match(key):
            raise ConfigError(f"invalid key '{key}'", lineno, col, source)
        if key in sections[current]:
            raise ConfigError(f"duplicate key '{key}' in [{current}]", lineno, col, source)
        value = value_part.strip()
        vcol = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not value:
            raise ConfigError(f"empty value for '{key}'", lineno, vcol, source)
        sections[current][key] = Value(value, lineno, vcol)
    return Config(sections, source)


def load(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), str(path))
