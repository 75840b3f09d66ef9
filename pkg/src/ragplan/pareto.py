"""Pareto dominance, frontier maintenance and hypervolume."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

PERF_METRICS = {"ttft": "min", "tpot": "min", "rps": "max", "req_per_dollar": "max"}


@dataclass(frozen=True)
class ObjectiveSpec:
    """Quality (maximized) followed by one or more performance metrics."""

    perf: tuple = (("req_per_dollar", "max"),)

    def __post_init__(self):
        perf = tuple((m, d) for m, d in self.perf)
        if not perf:
            raise ValueError("at least one performance metric is required")
        for m, d in perf:
            if m not in PERF_METRICS:
                raise ValueError(f"unknown performance metric {m!r}")
            if d not in ("min", "max"):
                raise ValueError(f"direction of {m!r} must be 'min' or 'max'")
        if len({m for m, _ in perf}) != len(perf):
            raise ValueError("duplicate performance metric")
        object.__setattr__(self, "perf", perf)

    @classmethod
    def from_names(cls, names):
        """Build from metric names; a leading ``quality`` is optional.

        ``name:min`` / ``name:max`` overrides the default direction.
        """
        names = [n for n in names if n != "quality"]
        perf = []
        for n in names:
            metric, _, direction = n.partition(":")
            if metric not in PERF_METRICS:
                raise ValueError(f"unknown performance metric {metric!r}")
            perf.append((metric, direction or PERF_METRICS[metric]))
        return cls(tuple(perf))

    @property
    def names(self):
        return ("quality",) + tuple(m for m, _ in self.perf)

    @property
    def directions(self):
        return ("max",) + tuple(d for _, d in self.perf)

    @property
    def arity(self):
        return 1 + len(self.perf)

    def extract(self, quality, perf):
        return (float(quality),) + tuple(float(perf.metric(m)) for m, _ in self.perf)

    def to_doc(self):
        return [{"metric": n, "direction": d} for n, d in zip(self.names, self.directions)]


def _signed(v, spec):
    return tuple(x if d == "max" else -x for x, d in zip(v, spec.directions))


def dominates(a, b, spec):
    """True iff ``a`` is at least as good as ``b`` everywhere and better somewhere."""
    if len(a) != len(b) or len(a) != spec.arity:
        raise ValueError(f"arity mismatch: {len(a)} vs {len(b)} (spec has {spec.arity})")
    sa, sb = _signed(a, spec), _signed(b, spec)
    return all(x >= y for x, y in zip(sa, sb)) and any(x > y for x, y in zip(sa, sb))


@dataclass(frozen=True)
class EvaluatedPoint:
    config: Any
    key: str
    quality: Any
    perf: Any
    objectives: tuple


@dataclass(frozen=True)
class ParetoSet:
    points: tuple = ()
    spec: ObjectiveSpec = ObjectiveSpec()

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def keys(self):
        return {p.key for p in self.points}

    def is_mutually_nondominated(self):
        return not any(
            dominates(p.objectives, q.objectives, self.spec)
            for p in self.points for q in self.points if p is not q
        )


def frontier_update(s, p):
    """Insert ``p`` unless dominated; drop members that ``p`` dominates."""
    if len(p.objectives) != s.spec.arity:
        raise ValueError("objective arity does not match the set's spec")
    if any(dominates(q.objectives, p.objectives, s.spec) for q in s.points):
        return s
    kept = tuple(q for q in s.points if not dominates(p.objectives, q.objectives, s.spec))
    return ParetoSet(kept + (p,), s.spec)


def nondominated_fronts(vectors, spec):
    """Indices grouped by non-domination depth (front 0 first)."""
    n = len(vectors)
    dominated_by = [[] for _ in range(n)]
    count = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(vectors[i], vectors[j], spec):
                dominated_by[i].append(j)
                count[j] += 1
            elif dominates(vectors[j], vectors[i], spec):
                dominated_by[j].append(i)
                count[i] += 1
    fronts = []
    current = [i for i in range(n) if count[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                count[j] -= 1
                if count[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
    return fronts


def crowding_distance(vectors, front):
    """Crowding distance of each index in ``front`` (boundary points get inf)."""
    dist = {i: 0.0 for i in front}
    if len(front) <= 2:
        return {i: float("inf") for i in front}
    for m in range(len(vectors[front[0]])):
        order = sorted(front, key=lambda i: (vectors[i][m], i))
        lo, hi = vectors[order[0]][m], vectors[order[-1]][m]
        dist[order[0]] = dist[order[-1]] = float("inf")
        if hi == lo:
            continue
        for k in range(1, len(order) - 1):
            dist[order[k]] += (vectors[order[k + 1]][m] - vectors[order[k - 1]][m]) / (hi - lo)
    return dist


def _hv2d(points, ref):
    area, best_y = 0.0, ref[1]
    for x, y in sorted(points, key=lambda p: (-p[0], -p[1])):
        if y > best_y:
            area += (x - ref[0]) * (y - best_y)
            best_y = y
    return area


def hypervolume(points, ref, spec: Optional[ObjectiveSpec] = None):
    """Volume dominated by ``points`` and bounded by ``ref``.

    ``points`` are objective vectors (or a :class:`ParetoSet`); minimized
    coordinates are handled through ``spec``. Exact for 2 or 3 objectives.
    """
    if isinstance(points, ParetoSet):
        spec = spec or points.spec
        points = [p.objectives for p in points.points]
    points = [tuple(p) for p in points]
    dim = len(ref)
    if dim not in (2, 3):
        raise ValueError("hypervolume supports 2 or 3 objectives")
    if spec is not None:
        if spec.arity != dim:
            raise ValueError("reference point arity does not match spec")
        points = [_signed(p, spec) for p in points]
        ref = _signed(ref, spec)
    pts = [p for p in points if len(p) == dim and all(x > r for x, r in zip(p, ref))]
    if len(points) != len([p for p in points if len(p) == dim]):
        raise ValueError("point arity does not match reference point")
    if not pts:
        return 0.0
    if dim == 2:
        return _hv2d(pts, ref)
    pts.sort(key=lambda p: -p[2])
    vol = 0.0
    for i, p in enumerate(pts):
        z_next = pts[i + 1][2] if i + 1 < len(pts) else ref[2]
        if p[2] > z_next:
            vol += _hv2d([q[:2] for q in pts[: i + 1]], ref[:2]) * (p[2] - z_next)
    return vol
