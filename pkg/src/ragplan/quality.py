"""Pluggable generation-quality evaluators.

``eval_table`` looks measured scores up by configuration key.
``eval_synthetic`` is a deterministic logistic surface used as a test
oracle::

    q = sigmoid(w0 + w1*log(top_k) + w2*quality_req + w3*[reranker]
                + w4*log(main_llm.params) - w5*[kv-cache-insert] - w6*[speculative])

``w0`` is drawn from U(-4, 0) - w4*log(1e9) so that billion-parameter
models sit near the middle of the sigmoid; ``w1..w6`` are drawn from
U(0.1, 1.5) by ``numpy.random.default_rng(seed)`` in that order. Terms are
summed left to right and the result is rounded to 12 decimals, kept inside
[1e-12, 1 - 1e-12].
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import QualityMiss, SchemaError
from .space import config_key


@dataclass(frozen=True)
class QualityScore:
    value: float
    source: str

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise ValueError(f"quality {self.value} outside [0, 1]")


@dataclass(frozen=True)
class QualityTable:
    scores: dict  # config key -> quality

    def __post_init__(self):
        for k, v in self.scores.items():
            if not 0 <= v <= 1:
                raise SchemaError((k, f"quality {v} outside [0, 1]"))


def load_quality_table(text):
    """Parse a ``config_key,quality`` CSV."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["config_key", "quality"]:
        raise SchemaError(("line 1", "header must be config_key,quality"))
    scores = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(c.strip() for c in row):
            continue
        if len(row) != 2:
            raise SchemaError((f"line {lineno}", "expected 2 cells"))
        key = row[0].strip()
        try:
            q = float(row[1])
        except ValueError:
            raise SchemaError((f"line {lineno}", f"not a number: {row[1]!r}")) from None
        if not 0 <= q <= 1:
            raise SchemaError((f"line {lineno}", f"quality {q} outside [0, 1]"))
        if key in scores:
            raise SchemaError((f"line {lineno}", f"duplicate config_key {key}"))
        scores[key] = q
    return QualityTable(scores)


def dump_quality_table(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_key", "quality"])
    for k in sorted(table.scores):
        w.writerow([k, repr(float(table.scores[k]))])
    return buf.getvalue()


def eval_table(q, a):
    key = config_key(a)
    try:
        return QualityScore(q.scores[key], "table")
    except KeyError:
        raise QualityMiss(f"no quality measured for config {key}") from None


def synthetic_weights(seed):
    rng = np.random.default_rng(seed)
    w0 = float(rng.uniform(-4.0, 0.0))
    rest = [float(x) for x in rng.uniform(0.1, 1.5, size=6)]
    w0 -= rest[3] * math.log(1e9)
    return (w0, *rest)


def eval_synthetic(seed, a, weights=None):
    w0, w1, w2, w3, w4, w5, w6 = weights if weights is not None else synthetic_weights(seed)
    z = w0
    z += w1 * math.log(a.top_k)
    z += w2 * a.quality_req
    z += w3 * (a.reranker is not None)
    z += w4 * math.log(a.main_llm.params)
    z -= w5 * (a.integration == "kv-cache-insert")
    z -= w6 * bool(a.speculative)
    q = 1.0 / (1.0 + math.exp(-z))
    q = min(max(round(q, 12), 1e-12), 1.0 - 1e-12)
    return QualityScore(q, "synthetic")


class SyntheticQuality:
    """Callable evaluator bound to one seed."""

    def __init__(self, seed=0):
        self.seed = seed
        self.weights = synthetic_weights(seed)

    def __call__(self, a):
        return eval_synthetic(self.seed, a, self.weights)

    def __repr__(self):
        return f"SyntheticQuality(seed={self.seed})"


class TableQuality:
    def __init__(self, table):
        self.table = table

    def __call__(self, a):
        return eval_table(self.table, a)

    def __repr__(self):
        return f"TableQuality({len(self.table.scores)} entries)"
