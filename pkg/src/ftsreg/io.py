"""CSV serialization of functional samples.

Two layouts are supported:

* long: header ``curve_index,t,y``, one row per observation;
* wide: header ``t,y_0,...,y_{N-1}``, one row per common design point.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .core import Design, DomainInterval, FunctionalSample
from .errors import DataError

__all__ = [
    "write_long_csv",
    "write_wide_csv",
    "read_long_csv",
    "read_wide_csv",
    "read_sample_csv",
    "format_float",
]

LONG_HEADER = ["curve_index", "t", "y"]


def format_float(x: float) -> str:
    """Shortest round-trip representation; keeps output byte-stable."""
    return repr(float(x))


def write_long_csv(sample: FunctionalSample, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_HEADER)
        for n, curve in enumerate(sample.curves):
            for t, y in zip(curve.times.tolist(), curve.values.tolist()):
                w.writerow([n, repr(t), repr(y)])


def write_wide_csv(times, matrix, path, prefix: str = "y") -> None:
    """Write ``matrix`` (N x len(times)) column-per-curve."""
    times = np.asarray(times, dtype=float)
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != times.size:
        raise DataError("matrix must have one column per time point")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"{prefix}_{n}" for n in range(matrix.shape[0])])
        for j, t in enumerate(times.tolist()):
            w.writerow([repr(t)] + [repr(v) for v in matrix[:, j].tolist()])


def _parse_float(s: str, where: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise DataError(f"cannot parse number {s!r} at {where}") from None


def read_long_csv(path, design: Design | str | None = None, domain=None) -> FunctionalSample:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != LONG_HEADER:
        raise DataError(f"long CSV must start with header {','.join(LONG_HEADER)}")
    per_curve: dict[int, list[tuple[float, float]]] = {}
    for k, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"line {k}: expected 3 fields, got {len(row)}")
        try:
            n = int(row[0])
        except ValueError:
            raise DataError(f"line {k}: bad curve index {row[0]!r}") from None
        per_curve.setdefault(n, []).append(
            (_parse_float(row[1], f"line {k}"), _parse_float(row[2], f"line {k}"))
        )
    if sorted(per_curve) != list(range(len(per_curve))):
        raise DataError("curve indices must be 0..N-1 without gaps")
    times, values = [], []
    for n in range(len(per_curve)):
        pts = sorted(per_curve[n])
        times.append([p[0] for p in pts])
        values.append([p[1] for p in pts])
    if design is None:
        first = times[0]
        design = Design.COMMON if all(t == first for t in times) else Design.INDEPENDENT
    return FunctionalSample.from_arrays(times, values, design, domain or DomainInterval())


def read_wide_csv(path, domain=None) -> FunctionalSample:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0].strip() != "t":
        raise DataError("wide CSV must start with a 't' column")
    width = len(rows[0])
    if width < 3:
        raise DataError("wide CSV needs at least two curve columns")
    times, cols = [], []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(f"line {k}: expected {width} fields, got {len(row)}")
        times.append(_parse_float(row[0], f"line {k}"))
        cols.append([_parse_float(v, f"line {k}") for v in row[1:]])
    t = np.array(times)
    if np.any(np.diff(t) <= 0):
        raise DataError("time column must be strictly increasing")
    mat = np.array(cols).T
    return FunctionalSample.from_arrays(
        [t] * mat.shape[0], list(mat), Design.COMMON, domain or DomainInterval()
    )


def read_sample_csv(path, domain=None) -> FunctionalSample:
    """Read either layout, detected from the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        head = fh.readline()
    first = next(csv.reader(io.StringIO(head)), [])
    if [c.strip() for c in first] == LONG_HEADER:
        return read_long_csv(path, domain=domain)
    if first and first[0].strip() == "t":
        return read_wide_csv(path, domain=domain)
    raise DataError(f"{Path(path).name}: unrecognised CSV header {head.strip()!r}")
