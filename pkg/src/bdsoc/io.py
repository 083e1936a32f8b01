"""Plain-text artifacts: CSV tables with provenance headers, JSON summaries, TOML configs."""
from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _cell(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns, rows, meta: dict | None = None):
    """Comment lines ``# key=value`` (sorted), then a header row and the data.

    Floats are written with ``repr`` so equal runs give equal bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for key in sorted(meta or {}):
            fh.write(f"# {key}={_cell(meta[key])}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    """Returns ``(meta, columns, rows)`` with cells as strings."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("# ") and not lines:
                key, _, val = line[2:].rstrip("\n").partition("=")
                meta[key] = val
            else:
                lines.append(line)
    reader = csv.reader(lines)
    try:
        columns = next(reader)
    except StopIteration:
        raise ValueError(f"{path}: no header row") from None
    return meta, columns, [r for r in reader]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        # JSON has no inf or nan; keep the sign of an infinite tolerance readable
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def parse_value(text: str):
    """TOML scalar or array syntax; bare words stay strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text
