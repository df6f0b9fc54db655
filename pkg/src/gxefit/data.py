"""Case-control sample container and CSV ingestion."""

from __future__ import annotations

import csv
import dataclasses

import numpy as np

from .errors import DataError

CSV_HEADER = ("d", "g", "e")


@dataclasses.dataclass(frozen=True)
class CaseControlSample:
    """Records (d, g, e) drawn under a case-control design.

    The stratum counts are part of the design, so they are derived from the
    stored records and exposed as n0 (controls) and n1 (cases).
    """

    d: np.ndarray
    g: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.int64)
        g = np.asarray(self.g, dtype=float)
        e = np.asarray(self.e, dtype=float)
        if not (d.ndim == g.ndim == e.ndim == 1) or not (d.size == g.size == e.size):
            raise DataError("d, g, e must be one-dimensional arrays of equal length")
        if d.size == 0:
            raise DataError("sample is empty")
        if not np.isin(d, (0, 1)).all():
            raise DataError("disease status column may only contain 0 and 1")
        if not (np.isfinite(g).all() and np.isfinite(e).all()):
            raise DataError("gene and environment columns must be finite")
        for name, arr in (("d", d), ("g", g), ("e", e)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return int(self.d.size)

    @property
    def n1(self) -> int:
        return int(np.count_nonzero(self.d))

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def subset(self, index) -> "CaseControlSample":
        index = np.asarray(index)
        return CaseControlSample(self.d[index], self.g[index], self.e[index])


def load_csv(path) -> CaseControlSample:
    """Read a sample from a CSV file with header ``d,g,e``.

    All malformed rows are collected and reported together, each with its
    file line number.
    """
    try:
        handle = open(path, "r", newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc.strerror or exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if tuple(cell.strip() for cell in header) != CSV_HEADER:
            raise DataError(f"{path}: header must be exactly 'd,g,e', got {','.join(header)!r}")
        d, g, e = [], [], []
        problems = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != 3:
                problems.append(f"line {line_no}: expected 3 fields, got {len(row)}")
                continue
            try:
                dv, gv, ev = (float(cell) for cell in row)
            except ValueError:
                problems.append(f"line {line_no}: non-numeric field in {row!r}")
                continue
            if dv not in (0.0, 1.0):
                problems.append(f"line {line_no}: d must be 0 or 1, got {row[0].strip()!r}")
                continue
            if not (np.isfinite(gv) and np.isfinite(ev)):
                problems.append(f"line {line_no}: g and e must be finite")
                continue
            d.append(int(dv))
            g.append(gv)
            e.append(ev)
        if problems:
            raise DataError(f"{path}: malformed rows: " + "; ".join(problems))
        if not d:
            raise DataError(f"{path}: no data rows")
    return CaseControlSample(np.array(d), np.array(g), np.array(e))


def write_csv(sample: CaseControlSample, path) -> None:
    """Write a sample in the same ``d,g,e`` layout that load_csv reads."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for d, g, e in zip(sample.d, sample.g, sample.e):
            writer.writerow([int(d), repr(float(g)), repr(float(e))])
