"""CSV and JSON writers; every file is written to a temporary name and renamed."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np


def _atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header: list[str], columns) -> int:
    """
    Write equally long ``columns`` under ``header`` with 17 significant digits.

    Returns the number of data rows written.
    """
    data = np.column_stack([np.asarray(c, dtype=float).ravel() for c in columns])
    lines = [",".join(header)]
    lines.extend(",".join(f"{v:.17g}" for v in row) for row in data)
    _atomic_write_text(path, "\n".join(lines) + "\n")
    return data.shape[0]


def read_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header == [""]:
            raise ValueError(f"{path}: missing header")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size and data.shape[1] != len(header):
        raise ValueError(f"{path}: {data.shape[1]} columns but header has {len(header)}")
    return header, data


def write_json(path, obj) -> Path:
    return _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
