"""CSV tables for plot data.

Layout: one comment line ``# manifest=<hash>``, a header row, then one row
per record.  Floats are written with ``repr`` so they read back bit-exactly;
integer and boolean columns stay integral.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Mapping

import numpy as np

__all__ = ["format_table", "parse_table", "write_table", "read_table"]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_table(columns: Mapping[str, np.ndarray], manifest_hash: str) -> str:
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    lengths = {c.shape[0] for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    buf = io.StringIO()
    buf.write(f"# manifest={manifest_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*(c.tolist() for c in cols)):
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _column(values: list[str]) -> np.ndarray:
    try:
        ints = [int(v) for v in values]
        return np.array(ints, dtype=np.int64)
    except ValueError:
        pass
    try:
        return np.array([float(v) for v in values], dtype=float)
    except ValueError:
        return np.array(values, dtype=object)


def parse_table(text: str) -> tuple[str | None, dict[str, np.ndarray]]:
    lines = text.splitlines()
    manifest = None
    if lines and lines[0].startswith("# manifest="):
        manifest = lines[0].split("=", 1)[1].strip()
        lines = lines[1:]
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    return manifest, {name: _column([r[i] for r in body]) for i, name in enumerate(header)}


def write_table(path: str | Path, columns: Mapping[str, np.ndarray], manifest_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_table(columns, manifest_hash))
    return path


def read_table(path: str | Path) -> tuple[str | None, dict[str, np.ndarray]]:
    return parse_table(Path(path).read_text())
