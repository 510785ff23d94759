"""File formats: observation dumps (CSV and binary) and rate-record CSV.

All floats are written with 17 significant digits so a write/read cycle is
lossless for doubles.  The binary observation dump is magic "MFPC", a u16
format version, the array dimensions (n, D, p) as little-endian u64, then the
row-major float64 payload.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import fields as dataclass_fields
from typing import Sequence

import numpy as np

from .harness import RateRecord

MAGIC = b"MFPC"
BINARY_VERSION = 1

_HEADER = struct.Struct("<4sH3Q")

RATE_COLUMNS = tuple(f.name for f in dataclass_fields(RateRecord))

_INT_COLUMNS = frozenset({"n", "p", "D", "M", "s", "seed", "iterations"})
_BOOL_COLUMNS = frozenset({"oracle_satisfied"})
_STR_COLUMNS = frozenset({"status"})


def _fmt(name: str, value) -> str:
    if name in _INT_COLUMNS:
        return str(int(value))
    if name in _BOOL_COLUMNS:
        return str(bool(value))
    if name in _STR_COLUMNS:
        return str(value)
    return f"{float(value):.17g}"


# ------------------------------------------------------------- rate records

def write_rate_csv(records: Sequence[RateRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RATE_COLUMNS)
        for rec in records:
            w.writerow([_fmt(c, getattr(rec, c)) for c in RATE_COLUMNS])


def read_rate_csv(path) -> list[RateRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RATE_COLUMNS:
            raise ValueError(f"unexpected rate CSV header in {path}: "
                             f"{reader.fieldnames}")
        for row in reader:
            kwargs = {}
            for c in RATE_COLUMNS:
                raw = row[c]
                if c in _INT_COLUMNS:
                    kwargs[c] = int(raw)
                elif c in _BOOL_COLUMNS:
                    kwargs[c] = raw == "True"
                elif c in _STR_COLUMNS:
                    kwargs[c] = raw
                else:
                    kwargs[c] = float(raw)
            out.append(RateRecord(**kwargs))
    return out


# ------------------------------------------------------------- observations

def write_observations_binary(Y: np.ndarray, path) -> None:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 3:
        raise ValueError(f"expected an (n, D, p) array, got shape {Y.shape}")
    n, D, p = Y.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, BINARY_VERSION, n, D, p))
        fh.write(np.ascontiguousarray(Y, dtype="<f8").tobytes())


def read_observations_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path} is too short to be an observation dump")
        magic, version, n, D, p = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path} is not an observation dump "
                             f"(magic {magic!r})")
        if version != BINARY_VERSION:
            raise ValueError(f"unsupported observation dump version {version}")
        payload = fh.read()
    expected = n * D * p * 8
    if len(payload) != expected:
        raise ValueError(f"truncated observation dump: expected {expected} "
                         f"payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").reshape(n, D, p).copy()


def write_observations_csv(Y: np.ndarray, path) -> None:
    """One row per (subject, component): i, d, then the p grid values."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 3:
        raise ValueError(f"expected an (n, D, p) array, got shape {Y.shape}")
    n, D, p = Y.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "d"] + [f"y{h}" for h in range(p)])
        for i in range(n):
            for d in range(D):
                w.writerow([i, d] + [f"{v:.17g}" for v in Y[i, d]])


def read_observations_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["i", "d"]:
            raise ValueError(f"{path} is not an observation CSV")
        p = len(header) - 2
        rows = [(int(r[0]), int(r[1]), [float(v) for v in r[2:]])
                for r in reader if r]
    if not rows:
        raise ValueError(f"{path} holds no observation rows")
    n = max(r[0] for r in rows) + 1
    D = max(r[1] for r in rows) + 1
    Y = np.full((n, D, p), np.nan)
    seen = set()
    for i, d, vals in rows:
        if len(vals) != p:
            raise ValueError(f"row ({i},{d}) has {len(vals)} values, expected {p}")
        if (i, d) in seen:
            raise ValueError(f"duplicate observation row ({i},{d})")
        seen.add((i, d))
        Y[i, d] = vals
    if len(seen) != n * D:
        raise ValueError(f"missing observation rows: have {len(seen)} of {n * D}")
    return Y


def sniff_observation_format(path) -> str:
    """'binary' when the file opens with the dump magic, else 'csv'."""
    with open(path, "rb") as fh:
        return "binary" if fh.read(4) == MAGIC else "csv"


def read_observations(path) -> np.ndarray:
    if sniff_observation_format(path) == "binary":
        return read_observations_binary(path)
    return read_observations_csv(path)
