"""Deterministic CSV / JSON output and tolerant CSV input."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .errors import SpecError

GEOMETRY_COLUMNS = ("t", "s", "x", "y", "rho", "theta", "kappa", "gamma", "e_plus", "e_minus")
TRAJECTORY_COLUMNS = ("t", "re_a_plus", "im_a_plus", "re_a_minus", "im_a_minus", "pop_plus", "pop_minus")


def fmt_float(value: float) -> str:
    """17 significant digits; the same bits always give the same text."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def write_csv(target: Path | str | TextIO, columns: Sequence[str], data: Mapping[str, Iterable]) -> None:
    cols = [np.asarray(data[c], dtype=float) for c in columns]
    n = len(cols[0]) if cols else 0
    lines = [",".join(columns)]
    for i in range(n):
        lines.append(",".join(fmt_float(c[i]) for c in cols))
    text = "\n".join(lines) + "\n"
    _write_text(target, text)


def write_long_csv(target, rows: Iterable[tuple[str, float, float]]) -> None:
    """Long-format plot data: one ``series,x,y`` row per point."""
    lines = ["series,x,y"]
    lines.extend(f"{name},{fmt_float(x)},{fmt_float(y)}" for name, x, y in rows)
    _write_text(target, "\n".join(lines) + "\n")


def _write_text(target, text: str) -> None:
    if hasattr(target, "write"):
        target.write(text)
    else:
        Path(target).write_text(text, encoding="utf-8")


def dumps_json(obj, indent: int = 2) -> str:
    """JSON with sorted keys and floats at 17 significant digits.

    Non-finite floats become ``null``.
    """
    out = io.StringIO()
    _emit(obj, out, indent, 0)
    out.write("\n")
    return out.getvalue()


def _emit(obj, out: TextIO, indent: int, level: int) -> None:
    pad = " " * (indent * (level + 1))
    end_pad = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        out.write({None: "null", True: "true", False: "false"}[obj])
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(fmt_float(obj) if math.isfinite(obj) else "null")
    elif isinstance(obj, str):
        out.write(_json_str(obj))
    elif isinstance(obj, Mapping):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        items = sorted((str(k), v) for k, v in obj.items())
        for i, (k, v) in enumerate(items):
            out.write(f"{pad}{_json_str(k)}: ")
            _emit(v, out, indent, level + 1)
            out.write(",\n" if i < len(items) - 1 else "\n")
        out.write(end_pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.write("[]")
            return
        out.write("[\n")
        for i, v in enumerate(seq):
            out.write(pad)
            _emit(v, out, indent, level + 1)
            out.write(",\n" if i < len(seq) - 1 else "\n")
        out.write(end_pad + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def _json_str(s: str) -> str:
    import json

    return json.dumps(s)


def write_json(target, obj) -> None:
    _write_text(target, dumps_json(obj))


def read_columns(path: Path | str, required: Sequence[str]) -> dict[str, np.ndarray]:
    """Read a headed CSV and return the ``required`` columns as float arrays.

    Extra columns are ignored, so a geometry table can be fed back in as a
    curvature profile.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc}") from None
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SpecError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise SpecError(f"{path}: missing column(s) {missing}; header is {header}")
    idx = [header.index(c) for c in required]
    data: dict[str, list] = {c: [] for c in required}
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            for c, j in zip(required, idx):
                data[c].append(float(row[j]))
        except (IndexError, ValueError):
            raise SpecError(f"{path}:{lineno}: malformed row {row!r}") from None
    return {c: np.asarray(v) for c, v in data.items()}
