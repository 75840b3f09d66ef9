"""Plan exploration loop and next-configuration strategies.

Each iteration evaluates one configuration's quality, lowers it to RAG-IR,
places it on the pool, estimates performance, and updates the Pareto set;
the strategy then proposes the next configuration from the full history.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import _doc
from .costmodel import DEFAULT_CONTEXT, estimate, map_resources
from .errors import QualityMiss, RagPlanError, SpaceExhausted
from .pareto import EvaluatedPoint, ObjectiveSpec, ParetoSet, crowding_distance, frontier_update, nondominated_fronts
from .space import KNOBS, REBUILD_KNOBS, AlgoConfig, WorkloadProfile, config_key, config_to_doc, knob_change_class, lower

log = logging.getLogger(__name__)

SCHEMA = "rag-pareto/1"


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    config: AlgoConfig
    key: str
    status: str  # "ok", "quality-miss" or "error"
    quality: Optional[float] = None
    perf: Any = None
    objectives: Optional[tuple] = None
    error: Optional[str] = None


@dataclass
class ExploreResult:
    frontier: ParetoSet
    trace: list
    strategy: str = ""
    seed: int = 0
    n_iter: int = 0


def _rng(seed, tag, history):
    return random.Random(f"{seed}:{tag}:{len(history)}")


def _explored_ranks(history, space):
    return {space.rank(h.config) for h in history if h.config in space}


def _random_unexplored(history, space, rng):
    explored = _explored_ranks(history, space)
    size = space.size
    remaining = size - len(explored)
    if remaining <= 0:
        raise SpaceExhausted("every configuration has been explored")
    if len(explored) * 2 < size:
        while True:
            i = rng.randrange(size)
            if i not in explored:
                return space.unrank(i)
    k = rng.randrange(remaining)
    for i in range(size):
        if i not in explored:
            if k == 0:
                return space.unrank(i)
            k -= 1
    raise AssertionError("unreachable")


def get_next_grid(history, space, seed=0):
    """Next unexplored configuration in enumeration order."""
    explored = _explored_ranks(history, space)
    start = 0
    if history and history[-1].config in space:
        start = space.rank(history[-1].config) + 1
    for i in list(range(start, space.size)) + list(range(0, start)):
        if i not in explored:
            return space.unrank(i)
    raise SpaceExhausted("grid exhausted")


def get_next_random(history, space, seed=0):
    """Uniform draw without replacement, seeded by ``(seed, len(history))``."""
    return _random_unexplored(history, space, _rng(seed, "random", history))


@dataclass(frozen=True)
class EvolutionParams:
    """Mutation rate ``p_mut`` (``None``: one over the number of varying
    knobs) is scaled by ``lambdas`` for (rebuild, medium, cheap) changes.

    Parents are tournament-selected among the ``population`` best evaluated
    points by (non-domination depth, crowding); ``None`` means
    ``n_initial``, as in an elitist NSGA-II with a fixed population.
    """

    p_mut: Optional[float] = None
    lambdas: tuple = (0.2, 0.5, 1.0)
    retries: int = 20
    n_initial: int = 6
    population: Optional[int] = None

    def scale(self, cls):
        return {"rebuild": self.lambdas[0], "medium": self.lambdas[1], "cheap": self.lambdas[2]}[cls]


def _tournament(n, rank, crowd, rng):
    i, j = rng.randrange(n), rng.randrange(n)

    def key(k):
        return (rank[k], -crowd[k], k)

    return i if key(i) <= key(j) else j


def make_offspring(parents, objectives, space, rng, spec, params=EvolutionParams()):
    """One child of two tournament-selected parents.

    Database-defining knobs (rebuild class, and the index type) are
    inherited as a block from the base parent; other knobs cross over
    uniformly. Returns ``(child, base_parent)``.
    """
    fronts = nondominated_fronts(objectives, spec)
    rank, crowd = {}, {}
    for depth, front in enumerate(fronts):
        for i, c in crowding_distance(objectives, front).items():
            rank[i], crowd[i] = depth, c
    elite = sorted(range(len(parents)), key=lambda i: (rank[i], -crowd[i], i))
    pop = params.population if params.population is not None else params.n_initial
    elite = elite[: max(2, pop)]
    pick = [elite[_tournament(len(elite), {k: rank[i] for k, i in enumerate(elite)},
                              {k: crowd[i] for k, i in enumerate(elite)}, rng)] for _ in range(2)]
    a, b = parents[pick[0]], parents[pick[1]]
    base, donor = (a, b) if rng.random() < 0.5 else (b, a)
    values = {}
    for k in KNOBS:
        bv, dv = getattr(base, k), getattr(donor, k)
        if k in REBUILD_KNOBS or (k == "index" and knob_change_class(k, bv, dv) == "rebuild"):
            values[k] = bv
        else:
            values[k] = dv if rng.random() < 0.5 else bv
    varying = [(k, vals) for k, vals in space.domains if len(vals) > 1]
    p_mut = params.p_mut if params.p_mut is not None else 1.0 / max(1, len(varying))
    for k, vals in varying:
        if rng.random() >= p_mut:
            continue
        current = values[k]
        choices = [v for v in vals if v != current]
        new = choices[rng.randrange(len(choices))]
        if rng.random() < params.scale(knob_change_class(k, current, new)):
            values[k] = new
    return AlgoConfig(**values), base


def initial_design(space, seed, n):
    """``n`` configurations stratified per knob (Latin-hypercube style).

    Each knob's domain is cycled in shuffled order and the columns are
    permuted independently, so every value of a domain with at most ``n``
    entries appears in the design.
    """
    rng = random.Random(f"{seed}:initial-design")
    columns = {}
    for k, vals in space.domains:
        order = list(vals)
        rng.shuffle(order)
        col = [order[i % len(order)] for i in range(n)]
        rng.shuffle(col)
        columns[k] = col
    return [AlgoConfig(**{k: columns[k][i] for k in KNOBS}) for i in range(n)]


def get_next_evolutionary(history, space, seed=0, params=EvolutionParams(), spec=ObjectiveSpec()):
    """NSGA-style proposal from the successful part of ``history``.

    The first ``params.n_initial`` proposals come from
    :func:`initial_design`; a random unexplored point is used while too few
    evaluations have succeeded or after ``params.retries`` duplicate
    children.
    """
    rng = _rng(seed, "evolutionary", history)
    ok = [h for h in history if h.status == "ok"]
    if len(ok) < max(2, params.n_initial):
        if len(history) < params.n_initial:
            a = initial_design(space, seed, params.n_initial)[len(history)]
            if config_key(a) not in {h.key for h in history}:
                return a
        return _random_unexplored(history, space, rng)
    explored = {h.key for h in history}
    parents = [h.config for h in ok]
    objectives = [h.objectives for h in ok]
    for _ in range(params.retries):
        child, _base = make_offspring(parents, objectives, space, rng, spec, params)
        if config_key(child) not in explored:
            return child
    return _random_unexplored(history, space, rng)


STRATEGIES = ("grid", "random", "evolutionary")


def resolve_strategy(name, params=None, spec=ObjectiveSpec()):
    """Return a ``get_next(history, space, seed)`` callable for ``name``."""
    if name == "grid":
        return get_next_grid
    if name == "random":
        return get_next_random
    if name == "evolutionary":
        p = params or EvolutionParams()
        return lambda history, space, seed: get_next_evolutionary(history, space, seed, p, spec)
    raise ValueError(f"unsupported strategy {name!r} (choose from {', '.join(STRATEGIES)})")


@dataclass
class Evaluation:
    """Everything one explore iteration needs besides the strategy."""

    quality: Callable
    pool: Any
    profile: WorkloadProfile = field(default_factory=WorkloadProfile)
    ctx: Any = DEFAULT_CONTEXT
    slo_ttft: Optional[float] = None
    slo_tpot: Optional[float] = None
    batch_cap: int = 8
    placement_objective: str = "rps"

    def __call__(self, i, a, spec):
        key = config_key(a)
        try:
            q = self.quality(a)
        except QualityMiss as exc:
            log.info("iteration %d: %s", i, exc)
            return TraceEntry(i, a, key, "quality-miss", error=str(exc))
        try:
            ir = lower(a, self.profile)
            placement = map_resources(ir, self.pool, self.ctx, self.slo_ttft, self.slo_tpot,
                                      self.batch_cap, self.placement_objective)
            perf = estimate(ir, self.pool, placement, self.ctx)
        except RagPlanError as exc:
            log.info("iteration %d: %s", i, exc)
            return TraceEntry(i, a, key, "error", quality=q.value, error=f"{type(exc).__name__}: {exc}")
        return TraceEntry(i, a, key, "ok", q.value, perf, spec.extract(q.value, perf))


def explore(space, n_iter, strategy, evaluation, spec=ObjectiveSpec(), seed=0, strategy_params=None):
    """Run at most ``n_iter`` evaluations and return the frontier and trace."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    get_next = resolve_strategy(strategy, strategy_params, spec) if isinstance(strategy, str) else strategy
    frontier = ParetoSet(spec=spec)
    trace = []
    seen = set()
    try:
        a = get_next(trace, space, seed)
    except SpaceExhausted:
        raise ValueError("configuration space is empty") from None
    duplicates = 0
    while len(trace) < n_iter:
        key = config_key(a)
        if key in seen:
            duplicates += 1
            if duplicates > n_iter:
                break
        else:
            duplicates = 0
            seen.add(key)
            entry = evaluation(len(trace), a, spec)
            trace.append(entry)
            if entry.status == "ok":
                frontier = frontier_update(frontier, EvaluatedPoint(a, key, entry.quality, entry.perf, entry.objectives))
            if len(trace) >= n_iter:
                break
        try:
            a = get_next(trace, space, seed)
        except SpaceExhausted:
            log.info("space exhausted after %d evaluations", len(trace))
            break
    if not any(e.status == "ok" for e in trace):
        raise NoFeasibleConfig(f"none of the {len(trace)} evaluated configurations is feasible", trace)
    name = strategy if isinstance(strategy, str) else getattr(strategy, "__name__", "custom")
    return ExploreResult(frontier, trace, name, seed, n_iter)


class NoFeasibleConfig(RagPlanError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


# ------------------------------------------------------------ documents

def _perf_summary(perf):
    rnd = _doc.round_sig
    return {
        "ttft_s": rnd(perf.ttft_s), "tpot_s": rnd(perf.tpot_s), "rps": rnd(perf.rps),
        "req_per_dollar": rnd(perf.req_per_dollar), "pool_cost_per_hour": rnd(perf.pool_cost_per_hour),
        "placement": perf.placement.to_doc(),
    }


def _objectives_doc(names, values):
    return {n: _doc.round_sig(v) for n, v in zip(names, values)}


def result_to_doc(result):
    spec = result.frontier.spec
    frontier = sorted(result.frontier.points, key=lambda p: (-p.objectives[0], p.key))
    trace = []
    for e in result.trace:
        doc = {"iteration": e.iteration, "config_key": e.key, "config": config_to_doc(e.config), "status": e.status}
        if e.quality is not None:
            doc["quality"] = _doc.round_sig(e.quality)
        if e.objectives is not None:
            doc["objectives"] = _objectives_doc(spec.names, e.objectives)
            doc["perf"] = _perf_summary(e.perf)
        if e.error:
            doc["error"] = e.error
        trace.append(doc)
    return {
        "schema": SCHEMA,
        "strategy": result.strategy,
        "seed": result.seed,
        "iterations": result.n_iter,
        "objectives": spec.to_doc(),
        "frontier": [
            {
                "config_key": p.key, "config": config_to_doc(p.config), "quality": _doc.round_sig(p.quality),
                "objectives": _objectives_doc(spec.names, p.objectives), "perf": _perf_summary(p.perf),
            }
            for p in frontier
        ],
        "trace": trace,
    }


def dump_result(result):
    return _doc.dumps(result_to_doc(result))
