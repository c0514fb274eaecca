"""Key-value parameter files and deterministic CSV/JSON writers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

FORMAT_VERSION = "1.0"


class ConfigError(ValueError):
    """Malformed configuration; carries the file and line where it happened."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        self.message = message
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class KVFile(dict):
    """Ordered ``name -> value`` mapping that remembers source line numbers."""

    def __init__(self, path="<memory>"):
        super().__init__()
        self.path = str(path)
        self.lines: dict[str, int] = {}

    def error(self, key: str | None, message: str) -> ConfigError:
        return ConfigError(self.path, self.lines.get(key) if key else None, message)

    def get_float(self, key: str, default: float | None = None) -> float:
        if key not in self:
            if default is None:
                raise self.error(None, f"missing required key '{key}'")
            return float(default)
        try:
            return float(self[key])
        except ValueError:
            raise self.error(key, f"'{key}' expects a number, got {self[key]!r}") from None

    def get_int(self, key: str, default: int | None = None) -> int:
        value = self.get_float(key, default)
        if value != int(value):
            raise self.error(key, f"'{key}' expects an integer, got {self[key]!r}")
        return int(value)

    def get_str(self, key: str, default: str | None = None) -> str:
        if key not in self:
            if default is None:
                raise self.error(None, f"missing required key '{key}'")
            return default
        return self[key]

    def get_floats(self, key: str, default: Sequence[float] | None = None) -> list[float]:
        if key not in self:
            if default is None:
                raise self.error(None, f"missing required key '{key}'")
            return [float(v) for v in default]
        try:
            return [float(v) for v in self[key].replace(",", " ").split()]
        except ValueError:
            raise self.error(key, f"'{key}' expects a list of numbers, got {self[key]!r}") from None

    def get_bool(self, key: str, default: bool = False) -> bool:
        if key not in self:
            return default
        v = self[key].strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise self.error(key, f"'{key}' expects a boolean, got {self[key]!r}")


def parse_kv(text: str, path="<memory>") -> KVFile:
    """Parse ``name = value`` lines; ``#`` starts a comment."""
    out = KVFile(path)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(path, lineno, f"expected 'name = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(path, lineno, "empty key")
        if key in out:
            raise ConfigError(path, lineno, f"duplicate key '{key}' (first on line {out.lines[key]})")
        out[key] = value
        out.lines[key] = lineno
    return out


def read_kv(path) -> KVFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(path, None, f"cannot read file: {exc.strerror}") from None
    return parse_kv(text, path)


def format_float(x: float) -> str:
    """Round-trippable, platform-stable float formatting."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0.0:
        return "0"
    return repr(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv_columns(path, required: Sequence[str]) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise ConfigError(path, None, f"cannot read file: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(path, 1, "empty CSV file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise ConfigError(path, 1, f"missing column(s) {missing}; header is {header}")
        idx = [header.index(c) for c in required]
        cols: list[list[float]] = [[] for _ in required]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                for out, i in zip(cols, idx):
                    out.append(float(row[i]))
            except (ValueError, IndexError):
                raise ConfigError(path, lineno, f"bad row {row}") from None
    return {c: np.asarray(v) for c, v in zip(required, cols)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else format_float(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, payload: dict) -> Path:
    """Write a JSON report. Every report carries the ``spec_version`` format field."""
    path = Path(path)
    data = {"spec_version": FORMAT_VERSION}
    data.update(_jsonable(payload))
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path
