"""CSV output: UTF-8, one header row, floats written with ``repr`` so they round-trip."""

from __future__ import annotations

import csv
import math
from typing import Iterable, Sequence

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Write ``rows`` under a ``columns`` header; returns the number of data rows."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            row = list(row)
            if len(row) != len(columns):
                raise ValueError(f"row {n} has {len(row)} fields, header has {len(columns)}")
            w.writerow([_fmt(v) for v in row])
            n += 1
    return n


def read_csv(path) -> dict:
    """Read a CSV written by :func:`write_csv` into ``column -> float array``."""
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(v) for v in row] for row in r]
    arr = np.asarray(data, dtype=np.float64).reshape(len(data), len(header))
    return {c: arr[:, i] for i, c in enumerate(header)}
