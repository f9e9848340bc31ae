"""Flat-file output: numeric CSV with 17 significant digits and a JSON mirror."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def parse_value(text: str):
    """Inverse of :func:`format_value` for numeric cells; other text is returned as is."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_csv(stream: TextIO, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    """Parse CSV text written by this package back into typed records."""
    reader = csv.DictReader(io.StringIO(text))
    return [{key: parse_value(val) for key, val in row.items()} for row in reader]


def read_csv(path) -> list[dict]:
    return parse_csv(Path(path).read_text())


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    return value


def records(header: Sequence[str], rows: Iterable[Sequence]) -> list[dict]:
    return [dict(zip(header, row)) for row in rows]


def json_text(meta: Mapping, **tables: list) -> str:
    """``{"meta": ..., <name>: [records...]}`` with stable key order."""
    doc = {"meta": _jsonable(meta)}
    for name, recs in tables.items():
        doc[name] = _jsonable(recs)
    return json.dumps(doc, indent=2) + "\n"
