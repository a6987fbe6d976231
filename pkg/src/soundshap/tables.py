"""CSV reading and writing: comma separated, one header row, LF line endings.

Floats are written with ``repr`` so that reading them back is exact.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np


class CSVParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path, self.line = path, line


@dataclass(frozen=True, eq=False)
class Table:
    header: list[str]
    data: np.ndarray  # n x len(header), float

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.header.index(name)]


def format_number(v) -> str:
    v = float(v)
    if not math.isfinite(v):
        return repr(v)
    if v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_number(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path) -> Table:
    """Parse a numeric CSV with a header row; errors carry the 1-based line number."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError(path, 1, "file is empty") from None
        if not header or any(not h.strip() for h in header):
            raise CSVParseError(path, 1, "header has an empty column name")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise CSVParseError(path, line, f"expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise CSVParseError(path, line, str(exc)) from None
    if not rows:
        raise CSVParseError(path, 2, "no data rows")
    return Table([h.strip() for h in header], np.asarray(rows, dtype=float))


def read_dataset(path) -> np.ndarray:
    """Numeric data matrix; non-finite entries are rejected."""
    table = read_csv(path)
    bad = np.argwhere(~np.isfinite(table.data))
    if len(bad):
        r, c = bad[0]
        raise CSVParseError(path, int(r) + 2, f"non-finite value in column {table.header[c]!r}")
    return table.data


def write_heatmap(path, row_values, col_values, matrix) -> None:
    """2-D array as CSV: the header holds the column feature values, the first field each row value."""
    header = ["x0\\x1"] + [format_number(v) for v in col_values]
    rows = [[r, *vals] for r, vals in zip(row_values, np.asarray(matrix))]
    write_csv(path, header, rows)


def read_heatmap(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    table = read_csv(path)
    try:
        cols = np.array([float(h) for h in table.header[1:]])
    except ValueError as exc:
        raise CSVParseError(path, 1, str(exc)) from None
    return table.data[:, 0], cols, table.data[:, 1:]
