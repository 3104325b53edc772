"""CSV emission with exact round-tripping.

Floats are written with ``repr`` (shortest string that parses back to the
same double), so parsing a file and re-emitting it reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence


def cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(float(v))  # plain float repr, also for numpy float64
    if hasattr(v, "item"):  # numpy scalar
        return cell(v.item())
    return str(v)


def parse_cell(s: str):
    """Typed value of a cell: int, then float, else the string itself. A cell is
    only converted when the value prints back to the same text (so bit-strings
    such as ``0110`` stay strings)."""
    try:
        i = int(s)
    except ValueError:
        pass
    else:
        return i if str(i) == s else s
    try:
        f = float(s)
    except ValueError:
        return s
    return f if cell(f) == s else s


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([cell(v) for v in r])
    return buf.getvalue()


def parse_csv(text: str) -> tuple[list[str], list[list]]:
    rd = csv.reader(io.StringIO(text))
    header = next(rd)
    return header, [[parse_cell(c) for c in rec] for rec in rd]


def roundtrip(text: str) -> str:
    header, rows = parse_csv(text)
    return to_csv(header, rows)


def write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8", newline="")
    return path
