"""CSV emission with bit-stable float formatting.

All experiment outputs go through this writer: comma-separated, one header
row, '.' decimal, floats at 17 significant digits so replays compare
byte-identically.  Values never need quoting by construction (no commas or
newlines in cells).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

__all__ = ["format_value", "write_csv", "sha256_of_file"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    s = str(v)
    if any(ch in s for ch in ",\n\r\""):
        raise ValueError(f"cell value would need quoting: {s!r}")
    return s


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def sha256_of_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
