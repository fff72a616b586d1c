"""CSV/JSON writers with a fixed, bit-exact text format."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"

FIELDS_COLUMNS = ("time", "x", "rho", "S", "V", "Q", "mask")
FIELDS2D_COLUMNS = ("time", "x1", "x2", "rho", "Q", "mask")
TRAJECTORY_COLUMNS = ("path_id", "time", "x")
WIGNER_COLUMNS = ("time", "x", "p", "W")
STATS_COLUMNS = ("lag", "msd_langevin", "msd_meanfield", "vacf_langevin", "vacf_meanfield")


def write_csv(path, columns, data: dict, integer=()) -> Path:
    """Write equal-length 1D arrays as CSV with a header row.

    Floats carry 17 significant digits so values round-trip exactly.
    """
    path = Path(path)
    arrays = [np.asarray(data[c]) for c in columns]
    n = arrays[0].shape[0]
    if any(a.shape != (n,) for a in arrays):
        raise ValueError("columns must be 1D arrays of equal length")
    fmt = ["%d" if c in integer else FLOAT_FMT for c in columns]
    table = np.empty((n, len(columns)), dtype=object)
    for j, (c, a) in enumerate(zip(columns, arrays)):
        table[:, j] = a.astype(np.int64) if c in integer else a.astype(float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        np.savetxt(fh, table, fmt=fmt, delimiter=",")
    return path


def read_csv(path) -> dict:
    """Read back a CSV written by :func:`write_csv` into float columns."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: table[:, j] for j, name in enumerate(header)}


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, payload) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, allow_nan=True)
        fh.write("\n")
    return path
