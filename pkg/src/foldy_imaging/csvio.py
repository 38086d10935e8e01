"""Plain-text CSV helpers shared by the library and the command line tool.

Complex matrices are written with one ``re,im`` column pair per matrix
column. Numbers use ``repr``-exact formatting so that files round-trip and
identical inputs give byte-identical output.
"""

from __future__ import annotations

import csv
import io
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    """Shortest round-trip representation of a real number."""
    return repr(float(x))


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV file atomically (temporary file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def write_complex_matrix(path, M) -> None:
    """Write a complex matrix (a vector is written as one column)."""
    M = np.asarray(M, dtype=complex)
    if M.ndim == 1:
        M = M[:, None]
    header = [f"{part}_{j}" for j in range(M.shape[1]) for part in ("re", "im")]
    rows = []
    for row in M:
        rows.append([v for z in row for v in (float(z.real), float(z.imag))])
    write_rows(path, header, rows)


def read_complex_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if data.size == 0:
        return np.zeros((0, 0), dtype=complex)
    return data[:, 0::2] + 1j * data[:, 1::2]
