"""Small CSV writer shared by the dump helpers.

Floats are rendered with repr so that files are reproducible bit for bit
across runs with the same inputs.
"""

from __future__ import annotations

import csv
from pathlib import Path


def _cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])
