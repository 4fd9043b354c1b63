"""Flat TOML-style configuration: one dotted key per line.

Grammar::

    # comment
    preprocess.otsu = true
    preprocess.stretch.p_low = 15
    preprocess.clahe.tiles = 8,8
    augment.profile = aug2

Values parse as booleans (true/false), integers, floats, comma lists of
numbers, or bare/quoted strings. Command-line flags override file
values.
"""

from __future__ import annotations

from .errors import ConfigError


def _parse_scalar(text: str):
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def parse_config_text(text: str) -> dict:
    """Parse config text into a flat {dotted.key: value} dict."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        if "," in value and not (value[0] in "'\""):
            out[key] = tuple(_parse_scalar(v.strip()) for v in value.split(","))
        else:
            out[key] = _parse_scalar(value)
    return out


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def get_typed(cfg: dict, key: str, kind: type, default):
    """Fetch a config value, checking its type; None default means optional."""
    if key not in cfg:
        return default
    val = cfg[key]
    if kind is float and isinstance(val, (int, bool)) and not isinstance(val, bool):
        return float(val)
    if kind is bool and not isinstance(val, bool):
        raise ConfigError(f"{key} must be true or false, got {val!r}")
    if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ConfigError(f"{key} must be {kind.__name__}, got {val!r}")
    return val
