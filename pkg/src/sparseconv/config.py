"""Layer config files.

Grammar::

    # comment (also allowed after a value)
    layer <name>
    key = value        # keys: n m c h w r s stride pad sparsity seed

Blank lines separate records.  Missing keys default to n=1, stride=1, pad=0,
sparsity=0, seed=42; m, c, h, w, r and s are required.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .tensor import ConvShape, ShapeError

INT_KEYS = ("n", "m", "c", "h", "w", "r", "s", "stride", "pad", "seed")
REQUIRED = ("m", "c", "h", "w", "r", "s")
DEFAULTS = {"n": 1, "stride": 1, "pad": 0, "sparsity": 0.0, "seed": 42}

_NAME = re.compile(r"^[A-Za-z0-9_.\-]+$")


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass(frozen=True)
class LayerConfig:
    name: str
    shape: ConvShape
    sparsity: float = 0.0
    seed: int = 42


def _finish(name, start, values, lines) -> LayerConfig:
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"layer {name!r} missing key(s) {', '.join(missing)}", start)
    merged = {**DEFAULTS, **values}
    try:
        shape = ConvShape(**{k: merged[k] for k in INT_KEYS if k != "seed"})
    except ShapeError as exc:
        raise ConfigError(f"layer {name!r}: {exc}", start) from None
    sp = merged["sparsity"]
    if not 0.0 <= sp < 1.0:
        raise ConfigError(f"sparsity must be in [0, 1), got {sp}", lines.get("sparsity", start))
    return LayerConfig(name, shape, sp, merged["seed"])


def parse_config(text: str) -> list[LayerConfig]:
    layers: list[LayerConfig] = []
    seen: set[str] = set()
    cur = None  # (name, line, values, key lines)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.split()[0] == "layer":
            parts = line.split()
            if len(parts) != 2 or not _NAME.match(parts[1]):
                raise ConfigError("expected 'layer <name>'", lineno)
            if cur is not None:
                layers.append(_finish(*cur))
            name = parts[1]
            if name in seen:
                raise ConfigError(f"duplicate layer name {name!r}", lineno)
            seen.add(name)
            cur = (name, lineno, {}, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if cur is None:
            raise ConfigError("key before any 'layer' line", lineno)
        key, val = (t.strip() for t in line.split("=", 1))
        values, key_lines = cur[2], cur[3]
        if key not in INT_KEYS and key != "sparsity":
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"key {key!r} given twice", lineno)
        try:
            values[key] = float(val) if key == "sparsity" else int(val, 0)
        except ValueError:
            raise ConfigError(f"invalid value {val!r} for {key!r}", lineno) from None
        if key == "seed" and not 0 <= values[key] < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer", lineno)
        key_lines[key] = lineno
    if cur is not None:
        layers.append(_finish(*cur))
    return layers


def load_config(path) -> list[LayerConfig]:
    return parse_config(Path(path).read_text())


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default.cfg"
