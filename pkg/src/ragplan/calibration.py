"""Profiled lookup tables that replace analytical estimates.

Calibration CSV: header ``op,key1,key2,...,seconds``; blank trailing key
cells shorten a row's key. Recall CSV: header ``recall,nprobe``.
"""
from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass

from .errors import EstimationError, SchemaError

MODES = ("nearest", "log-linear")


@dataclass(frozen=True)
class CalibrationTable:
    entries: tuple  # of ((op, keys), seconds), sorted
    mode: str = "log-linear"

    def __post_init__(self):
        if self.mode not in MODES:
            raise SchemaError(("mode", f"expected one of {MODES}"))
        seen = set()
        for (op, keys), t in self.entries:
            if (op, keys) in seen:
                raise SchemaError(("", f"duplicate key {op},{','.join(map(str, keys))}"))
            seen.add((op, keys))
            if not t > 0:
                raise SchemaError(("", f"non-positive time for {op},{','.join(map(str, keys))}"))
        object.__setattr__(self, "entries", tuple(sorted(self.entries)))

    def ops(self):
        return sorted({op for (op, _), _ in self.entries})

    def lookup(self, op, keys):
        """Measured seconds for ``(op, keys)``, interpolating if allowed."""
        keys = tuple(keys)
        rows = [(k, t) for (o, k), t in self.entries if o == op and len(k) == len(keys)]
        for k, t in rows:
            if k == keys:
                return t
        if not rows:
            raise EstimationError(f"calibration table has no {op!r} entries with {len(keys)} keys")
        if any(x <= 0 for x in keys):
            raise EstimationError("calibration keys must be positive")
        if self.mode == "nearest":
            return min(rows, key=lambda kt: (_log_dist(kt[0], keys), kt[0]))[1]
        return self._log_linear(op, keys, rows)

    def _log_linear(self, op, keys, rows):
        for axis in range(len(keys)):
            line = sorted(
                (k[axis], t) for k, t in rows
                if all(k[j] == keys[j] for j in range(len(keys)) if j != axis)
            )
            xs = [x for x, _ in line]
            i = bisect.bisect_left(xs, keys[axis])
            if 0 < i < len(line):
                (x0, t0), (x1, t1) = line[i - 1], line[i]
                f = (math.log(keys[axis]) - math.log(x0)) / (math.log(x1) - math.log(x0))
                return math.exp(math.log(t0) + f * (math.log(t1) - math.log(t0)))
        raise EstimationError(f"no calibration entry brackets {op}{keys}")


def _log_dist(a, b):
    return sum((math.log(x) - math.log(y)) ** 2 for x, y in zip(a, b))


def _num(cell, where):
    try:
        x = float(cell)
    except ValueError:
        raise SchemaError((where, f"not a number: {cell!r}")) from None
    return int(x) if x.is_integer() else x


def load_calibration(text, mode="log-linear"):
    """Parse a calibration CSV into a validated :class:`CalibrationTable`."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaError(("", "empty calibration document"))
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "op" or header[-1] != "seconds":
        raise SchemaError(("line 1", "header must be op,key1,...,seconds"))
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(c.strip() for c in row):
            continue
        where = f"line {lineno}"
        if len(row) != len(header):
            raise SchemaError((where, f"expected {len(header)} cells, got {len(row)}"))
        cells = [c.strip() for c in row]
        keys = cells[1:-1]
        while keys and keys[-1] == "":
            keys.pop()
        if "" in keys:
            raise SchemaError((where, "blank key cell before a filled one"))
        entries.append(((cells[0], tuple(_num(k, where) for k in keys)), _num(cells[-1], where)))
    return CalibrationTable(tuple(entries), mode)


@dataclass(frozen=True)
class RecallTable:
    """Measured recall at each nprobe, monotone non-decreasing."""

    points: tuple  # of (recall, nprobe), sorted by recall

    def __post_init__(self):
        pts = tuple(sorted(self.points))
        if not pts:
            raise SchemaError(("", "recall table is empty"))
        for i, (r, p) in enumerate(pts):
            if not (0 < r <= 1 and p >= 1):
                raise SchemaError(("", f"bad recall point ({r}, {p})"))
            if i and (r == pts[i - 1][0] or p <= pts[i - 1][1]):
                raise SchemaError(("", "recall table is not monotone (recall must rise strictly with nprobe)"))
        object.__setattr__(self, "points", pts)

    def nprobe_for(self, quality_req):
        """Smallest tabulated nprobe whose recall meets ``quality_req``."""
        for r, p in self.points:
            if r >= quality_req:
                return p
        return None


def load_recall_table(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != ["recall", "nprobe"]:
        raise SchemaError(("line 1", "header must be recall,nprobe"))
    pts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(c.strip() for c in row):
            continue
        if len(row) != 2:
            raise SchemaError((f"line {lineno}", "expected 2 cells"))
        pts.append((float(_num(row[0].strip(), f"line {lineno}")), int(_num(row[1].strip(), f"line {lineno}"))))
    return RecallTable(tuple(pts))
