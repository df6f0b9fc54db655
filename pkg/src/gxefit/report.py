"""Deterministic report serialization.

Reports must be byte-identical for identical inputs, so floats are printed
with 17 significant digits (enough to round-trip any double exactly) and
key order is the insertion order of the dicts the commands build.
"""

from __future__ import annotations

import io
import json

import numpy as np


def fmt_float(value: float) -> str:
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"reports may not contain non-finite numbers, got {value!r}")
    return format(value, ".17g")


def _normalize(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def json_text(obj, indent: int = 0) -> str:
    """Serialize to JSON with fixed float formatting; returns text with a
    trailing newline at the top level."""
    text = _json(obj, 0)
    return text + "\n"


def _json(obj, level: int) -> str:
    obj = _normalize(obj)
    pad = "  " * level
    inner = "  " * (level + 1)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, int):
        return repr(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{inner}{json.dumps(str(key))}: {_json(value, level + 1)}" for key, value in obj.items()]
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [f"{inner}{_json(value, level + 1)}" for value in obj]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    raise TypeError(f"cannot serialize {type(obj).__name__} into a report")


def csv_text(rows) -> str:
    """Render rows as CSV with '\\n' line endings and 17-digit floats.

    Cells may be str, int, float, None (empty), or numpy scalars.
    """
    import csv

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    for row in rows:
        rendered = []
        for cell in row:
            cell = _normalize(cell)
            if cell is None:
                rendered.append("")
            elif isinstance(cell, bool):
                rendered.append("true" if cell else "false")
            elif isinstance(cell, float):
                rendered.append(fmt_float(cell))
            else:
                rendered.append(cell)
        writer.writerow(rendered)
    return buffer.getvalue()
