"""File formats: ``.fld`` field dumps and per-s CSV tables.

A ``.fld`` file is one line of compact JSON (the header, newline
terminated) followed by the node values as little-endian float64 in grid
order (s-major, then u, then u3).
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .operator import Field, Grid

__all__ = ["write_field", "read_field", "write_reconstruction_csv", "write_rows_csv", "atomic_write_text"]

FLD_VERSION = 1


def write_field(path, phi: Field, **meta) -> Path:
    path = Path(path)
    header = {"format": "fld", "version": FLD_VERSION, "dtype": "<f8", "order": "s-major"}
    header.update(phi.grid.to_dict())
    header["shape"] = list(phi.grid.shape)
    if meta:
        header["meta"] = meta
    line = json.dumps(header, separators=(",", ":"), sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(phi.values, dtype="<f8").tobytes())
    return path


def read_field(path) -> tuple[Field, dict]:
    """Read a ``.fld`` file; returns the field and its header."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        data = fh.read()
    if header.get("format") != "fld":
        raise ValueError(f"{path}: not a .fld file")
    grid = Grid(
        dim=header["dim"],
        L=header["L"],
        n_s=header["n_s"],
        n_u=header["n_u"],
        widths=tuple(header["widths"]),
    )
    values = np.frombuffer(data, dtype="<f8")
    if values.size != grid.size:
        raise ValueError(f"{path}: {values.size} values for a grid of {grid.size} nodes")
    return Field(grid, values.astype(float)), header


def write_rows_csv(path, columns: list[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return v


def write_reconstruction_csv(path, res) -> Path:
    """Columns: s, gamma_true, gamma_sq_recon, gamma_recon, mask, abs_err.

    Optional columns are dropped when the result does not carry them.
    """
    cols = ["s"]
    has_true = res.gamma_true is not None
    has_signed = res.gamma_signed is not None
    if has_true:
        cols.append("gamma_true")
    cols.append("gamma_sq_recon")
    if has_signed:
        cols.append("gamma_recon")
    cols.append("mask")
    if has_true:
        cols.append("abs_err")
    rows = []
    for i, s in enumerate(res.s_nodes):
        row = [s]
        if has_true:
            row.append(res.gamma_true[i])
        row.append(res.gamma_sq[i])
        if has_signed:
            row.append(res.gamma_signed[i])
        row.append(bool(res.mask[i]))
        if has_true:
            err = abs(res.gamma_sq[i] - res.gamma_true[i] ** 2) if res.mask[i] else float("nan")
            row.append(err)
        rows.append(row)
    return write_rows_csv(path, cols, rows)


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path
