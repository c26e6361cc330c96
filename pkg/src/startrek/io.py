"""CSV matrices, JSON documents and the binary ensemble cache."""

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import InvalidInput, NegativeUnderLog, ParseError, ShapeError, ZeroVariance
from .quantile import BootstrapEnsemble

ENSEMBLE_MAGIC = b"STKB"
ENSEMBLE_VERSION = 1


@dataclass
class DataMatrix:
    """Observations in rows, variables in columns."""

    values: np.ndarray
    labels: List[str]

    @property
    def shape(self):
        return self.values.shape


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_matrix(path, delimiter=",", header=None, min_rows=2, min_cols=2):
    """Read a rectangular numeric CSV.

    Parameters
    ----------
    header : bool, optional
        Whether the first row holds column labels. Detected when ``None``:
        a first row with any non-numeric cell is a header.

    Raises
    ------
    ParseError
        A cell is not a finite real or a row has the wrong number of fields.
    ShapeError
        Fewer than ``min_rows`` observations or ``min_cols`` variables.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh, delimiter=delimiter))]
    rows = [(ln, r) for ln, r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ShapeError(f"{path}: no data")
    first = rows[0][1]
    if header is None:
        header = not all(_is_number(c) for c in first)
    if header:
        labels = [c.strip() for c in first]
        rows = rows[1:]
    else:
        labels = [f"V{i + 1}" for i in range(len(first))]
    width = len(labels)
    values = np.empty((len(rows), width))
    for r, (ln, row) in enumerate(rows):
        if len(row) != width:
            raise ParseError(ln, len(row), f"expected {width} fields, found {len(row)}")
        for c, cell in enumerate(row):
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(ln, c + 1, f"cannot parse {cell!r} as a number") from None
            if not math.isfinite(x):
                raise ParseError(ln, c + 1, f"non-finite value {cell!r}")
            values[r, c] = x
    if values.shape[0] < min_rows or width < min_cols:
        raise ShapeError(f"{path}: need at least {min_rows}x{min_cols}, got {values.shape}")
    return DataMatrix(values, labels)


def save_matrix(path, values, labels=None):
    """Write a CSV with shortest round-trip float formatting."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if labels is not None:
            w.writerow(labels)
        for row in values:
            w.writerow([repr(float(x)) for x in row])


def preprocess(X, log_transform=False, standardize=False):
    """Optional ``log1p`` followed by per-column centring and unit sample variance."""
    labels = X.labels if isinstance(X, DataMatrix) else [f"V{i + 1}" for i in range(np.shape(X)[1])]
    values = np.array(X.values if isinstance(X, DataMatrix) else X, dtype=float)
    if log_transform:
        if np.any(values < 0):
            r, c = np.argwhere(values < 0)[0]
            raise NegativeUnderLog(f"negative entry at row {r + 1}, column {labels[c]!r}")
        values = np.log1p(values)
    if standardize:
        sd = values.std(axis=0, ddof=1)
        bad = np.flatnonzero(~(sd > 0))
        if bad.size:
            raise ZeroVariance([labels[i] for i in bad])
        values = (values - values.mean(axis=0)) / sd
    return DataMatrix(values, list(labels))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj):
    """Deterministic JSON text: sorted keys, fixed indent, trailing newline."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, exc.colno, exc.msg) from None


def save_ensemble(path, ens):
    """Binary cache: magic, u32 version, u64 B, u64 |E|, u64 edge pairs, f64 draws (little-endian)."""
    draws = np.ascontiguousarray(ens.draws, dtype="<f8")
    edges = np.asarray(ens.edge_universe, dtype="<u8").reshape(-1, 2)
    with open(path, "wb") as fh:
        fh.write(ENSEMBLE_MAGIC)
        fh.write(struct.pack("<IQQ", ENSEMBLE_VERSION, draws.shape[0], draws.shape[1]))
        fh.write(edges.tobytes())
        fh.write(draws.tobytes())


def load_ensemble(path):
    raw = Path(path).read_bytes()
    if raw[:4] != ENSEMBLE_MAGIC:
        raise InvalidInput(f"{path}: not an ensemble cache (bad magic)")
    version, B, E = struct.unpack_from("<IQQ", raw, 4)
    if version != ENSEMBLE_VERSION:
        raise InvalidInput(f"{path}: unsupported ensemble cache version {version}")
    off = 4 + struct.calcsize("<IQQ")
    expected = off + 16 * E + 8 * B * E
    if len(raw) != expected:
        raise InvalidInput(f"{path}: truncated or oversized cache ({len(raw)} != {expected} bytes)")
    edges = np.frombuffer(raw, dtype="<u8", count=2 * E, offset=off).reshape(E, 2)
    draws = np.frombuffer(raw, dtype="<f8", count=B * E, offset=off + 16 * E).reshape(B, E)
    return BootstrapEnsemble(draws.astype(float), [tuple(e) for e in edges.tolist()])
