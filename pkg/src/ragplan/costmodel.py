"""Analytical roofline cost model for RAG-IR workloads.

Every analytical :class:`NodeCost` satisfies
``time_s * efficiency == max(flops / peak_flops, mem_bytes / mem_bw)``.
:func:`estimate` turns an IR, a pool and a placement into TTFT, TPOT, RPS
and requests per dollar; :func:`map_resources` searches placements.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from . import _doc
from .calibration import CalibrationTable, RecallTable
from .errors import EstimationError, InfeasibleError, PlacementError, SchemaError
from .hardware import pool_cost
from .ir import Calibrated, Flat, Ivf, ModelNode, RetrievalNode

log = logging.getLogger(__name__)

SCHEMA = "rag-cm/1"
OBJECTIVES = ("rps", "req_per_dollar")


@dataclass(frozen=True)
class CostConstants:
    """Precision and model constants; every field is overridable per run."""

    weight_bytes: float = 2
    kv_bytes: float = 2
    vector_bytes: float = 4
    efficiency: float = 0.5
    recall_gamma: float = 4.0
    ivf_nlist: int = 1024
    strict: bool = False


@dataclass(frozen=True)
class CostContext:
    constants: CostConstants = CostConstants()
    calibration: Optional[CalibrationTable] = None
    recall_table: Optional[RecallTable] = None


DEFAULT_CONTEXT = CostContext()


@dataclass(frozen=True)
class NodeCost:
    flops: float
    mem_bytes: float
    time_s: float
    mem_resident_bytes: float = 0.0
    detail: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Placement:
    """Node id -> (device id, units) and node id -> batch size.

    Nodes sharing a device time-share the same ``units`` of it.
    """

    assignment: dict
    batch_size: dict

    def device_units(self):
        out = {}
        for node in sorted(self.assignment):
            dev, units = self.assignment[node]
            out[dev] = units
        return out

    def to_doc(self):
        return {
            "assignment": {n: {"device": d, "units": u} for n, (d, u) in sorted(self.assignment.items())},
            "batch_size": dict(sorted(self.batch_size.items())),
        }

    @classmethod
    def from_doc(cls, obj, path="placement"):
        r = _doc.Reader(obj, path)
        assignment = {}
        ar = r.obj_at("assignment")
        for node in sorted(ar.obj):
            nr = ar.obj_at(node)
            assignment[node] = (nr.get("device", "str"), nr.get("units", "int"))
            nr.done()
        ar.done()
        br = r.obj_at("batch_size")
        batch = {n: br.get(n, "int") for n in sorted(br.obj)}
        br.done()
        r.done()
        return cls(assignment, batch)


@dataclass(frozen=True)
class StageReport:
    device: str
    batch: int
    latency_s: float
    busy_s: float
    phases: dict


@dataclass(frozen=True)
class PerfEstimate:
    ttft_s: float
    tpot_s: float
    rps: float
    req_per_dollar: float
    per_stage: dict
    placement: Placement
    pool_cost_per_hour: float = 0.0
    device_rps: dict = field(default_factory=dict)
    warnings: tuple = ()

    def metric(self, name):
        return getattr(self, {"ttft": "ttft_s", "tpot": "tpot_s"}.get(name, name))

    def to_doc(self):
        rnd = _doc.round_sig

        def cost_doc(c):
            doc = {k: rnd(getattr(c, k)) for k in ("flops", "mem_bytes", "time_s", "mem_resident_bytes")}
            if c.detail:
                doc["detail"] = {k: (rnd(v) if isinstance(v, float) else v) for k, v in sorted(c.detail.items())}
            return doc

        return {
            "ttft_s": rnd(self.ttft_s),
            "tpot_s": rnd(self.tpot_s),
            "rps": rnd(self.rps),
            "req_per_dollar": rnd(self.req_per_dollar),
            "pool_cost_per_hour": rnd(self.pool_cost_per_hour),
            "device_rps": {d: rnd(v) for d, v in sorted(self.device_rps.items())},
            "placement": self.placement.to_doc(),
            "per_stage": {
                g: {
                    n: {
                        "device": s.device, "batch": s.batch, "latency_s": rnd(s.latency_s),
                        "busy_s": rnd(s.busy_s), "phases": {p: cost_doc(c) for p, c in sorted(s.phases.items())},
                    }
                    for n, s in sorted(nodes.items())
                }
                for g, nodes in sorted(self.per_stage.items())
            },
            "warnings": list(self.warnings),
        }


# ----------------------------------------------------------- node costs

def _efficiency(device, constants):
    return device.efficiency if device.efficiency is not None else constants.efficiency


def roofline(flops, mem_bytes, device, efficiency):
    """Seconds for ``flops`` and ``mem_bytes`` on ``device`` at ``efficiency``."""
    return max(flops / device.peak_flops, mem_bytes / device.mem_bw) / efficiency


def _kv(node, length, constants):
    if node.arch is None:
        return 0.0
    return 2 * node.arch.n_layers * node.arch.d_model * length * constants.kv_bytes


def model_prefill_cost(n, d, batch=1, constants=CostConstants(), warnings=None):
    """Prefill of ``input_len - reused_tokens`` tokens for ``batch`` requests.

    Reused KV caches are loaded from memory rather than recomputed.
    """
    eff_len = n.input_len - n.reused_tokens
    if eff_len < 0:
        raise EstimationError(f"{n.id}: reused_tokens exceeds input_len")
    flops = 2 * n.params * eff_len
    if n.arch is not None:
        flops += 4 * n.arch.n_layers * n.arch.d_model * eff_len**2
    elif constants.strict and warnings is not None:
        warnings.append(f"{n.id}: no architecture given, attention term dropped")
    flops *= batch
    mem = n.params * constants.weight_bytes + batch * _kv(n, n.input_len, constants)
    if n.kv_cache_reuse:
        mem += batch * _kv(n, n.reused_tokens, constants)
    resident = n.params * constants.weight_bytes + batch * _kv(n, n.input_len + n.output_len, constants)
    time_s = roofline(flops, mem, d, _efficiency(d, constants))
    return NodeCost(flops, mem, time_s, resident, {"effective_len": eff_len})


def model_decode_cost(n, d, batch=1, constants=CostConstants()):
    """Per-token decode cost at mean context length, and total decode seconds."""
    if n.output_len == 0:
        return NodeCost(0.0, 0.0, 0.0), 0.0
    ctx = n.input_len + n.output_len / 2
    flops = 2 * n.params
    if n.arch is not None:
        flops += 4 * n.arch.n_layers * n.arch.d_model * ctx
    flops *= batch
    mem = n.params * constants.weight_bytes + batch * _kv(n, ctx, constants)
    resident = n.params * constants.weight_bytes + batch * _kv(n, n.input_len + n.output_len, constants)
    per_token = NodeCost(flops, mem, roofline(flops, mem, d, _efficiency(d, constants)), resident,
                         {"context_len": ctx})
    return per_token, n.output_len * per_token.time_s


def recall_to_nprobe(quality_req, nlist, num_rows, gamma=4.0, table=None):
    """Clusters to probe so that recall meets ``quality_req``.

    Uses the tabulated recall curve when given, else the surrogate
    ``ceil(nlist * quality_req ** gamma)``; the result lies in ``[1, nlist]``.
    """
    if not 0 < quality_req <= 1:
        raise ValueError("quality_req must lie in (0, 1]")
    if not 1 <= nlist <= num_rows:
        raise ValueError("requires 1 <= nlist <= num_rows")
    if table is not None:
        p = table.nprobe_for(quality_req)
        nprobe = nlist if p is None else p
    else:
        nprobe = math.ceil(nlist * quality_req**gamma)
    return min(max(1, nprobe), nlist)


def _search_terms(n, index, constants):
    """Per-query, per-iteration flops breakdown and bytes for Flat/IVF."""
    dim, rows = n.dim, n.num_rows
    vb = constants.vector_bytes
    if isinstance(index, Flat):
        coarse, fine, scanned = 0, 2 * dim * rows, rows
        mem = vb * dim * rows
        resident = vb * dim * rows
    else:
        nlist, nprobe = index.nlist, index.nprobe
        coarse = 2 * dim * nlist
        fine = 2 * dim * nprobe * rows / nlist
        scanned = nprobe * rows / nlist
        mem = vb * dim * (nlist + nprobe * rows / nlist)
        resident = vb * dim * (rows + nlist)
    select = scanned * math.log2(n.top_k)
    return {"coarse_flops": coarse, "fine_scan_flops": fine, "select_flops": select, "scanned_rows": scanned}, mem, resident


def _analytic_search(n, d, batch, index, constants):
    terms, mem, resident = _search_terms(n, index, constants)
    scale = batch * n.iterations
    flops = scale * (terms["coarse_flops"] + terms["fine_scan_flops"] + terms["select_flops"])
    mem_total = scale * mem
    detail = dict(terms)
    detail["index"] = _index_label(index)
    return NodeCost(flops, mem_total, roofline(flops, mem_total, d, _efficiency(d, constants)), resident, detail)


def _index_label(index):
    if isinstance(index, Flat):
        return "flat"
    if isinstance(index, Ivf):
        return f"ivf(nlist={index.nlist},nprobe={index.nprobe})"
    return f"calibrated({index.table_ref})"


def derived_ivf(n, ctx=DEFAULT_CONTEXT):
    """IVF configuration chosen from ``quality_req`` when no index is given."""
    nlist = min(ctx.constants.ivf_nlist, n.num_rows)
    nprobe = recall_to_nprobe(n.quality_req, nlist, n.num_rows, ctx.constants.recall_gamma, ctx.recall_table)
    return Ivf(nlist, nprobe)


def retrieval_cost(n, d, batch=1, ctx=DEFAULT_CONTEXT):
    """Search cost of ``batch`` queries, over all ``iterations``.

    Without an explicit index the cheaper of Flat and a recall-derived IVF
    is used; both satisfy the quality requirement.
    """
    constants = ctx.constants
    index = n.index_config
    if isinstance(index, Calibrated):
        if ctx.calibration is None:
            raise EstimationError(f"{n.id}: calibrated index {index.table_ref!r} but no calibration table loaded")
        t = ctx.calibration.lookup(index.table_ref, (n.num_rows, n.dim, n.top_k))
        resident = constants.vector_bytes * n.dim * n.num_rows
        return NodeCost(0.0, 0.0, t * batch * n.iterations, resident,
                        {"index": _index_label(index), "seconds_per_query": t})
    if isinstance(index, Ivf):
        if not 1 <= index.nprobe <= index.nlist <= n.num_rows:
            raise EstimationError(f"{n.id}: IVF requires 1 <= nprobe <= nlist <= num_rows")
        return _analytic_search(n, d, batch, index, constants)
    if isinstance(index, Flat):
        return _analytic_search(n, d, batch, index, constants)
    ivf = _analytic_search(n, d, batch, derived_ivf(n, ctx), constants)
    flat = _analytic_search(n, d, batch, Flat(), constants)
    return flat if flat.time_s <= ivf.time_s else ivf


def edge_cost(e, pool, placement=None):
    """Transfer seconds of edge ``e``; free when both ends share a device."""
    if e.bytes == 0:
        return 0.0
    if placement is not None and placement.assignment[e.src][0] == placement.assignment[e.dst][0]:
        return 0.0
    return e.bytes / pool.interconnect_bw


# ------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class _Stage:
    latency: float  # contribution to the TTFT path
    busy: float  # seconds to process one batch
    tpot: float  # main-llm per-token seconds
    stall: float  # iterative retrieval seconds exposed during decode
    resident: float
    phases: dict


def _stage(n, d, batch, ctx, warnings):
    c = ctx.constants
    if isinstance(n, ModelNode):
        pre = model_prefill_cost(n, d, batch, c, warnings)
        tok, decode_total = model_decode_cost(n, d, batch, c)
        phases = {"prefill": pre}
        if n.output_len:
            phases["decode_token"] = tok
        busy = pre.time_s + decode_total
        resident = max(pre.mem_resident_bytes, tok.mem_resident_bytes)
        if n.role == "main-llm":
            return _Stage(pre.time_s, busy, tok.time_s, 0.0, resident, phases)
        return _Stage(busy, busy, 0.0, 0.0, resident, phases)
    if isinstance(n, RetrievalNode):
        total = retrieval_cost(n, d, batch, ctx)
        per_iter = total.time_s
        if n.iterations > 1:
            # priced directly so the first-token path is exactly independent of iterations
            per_iter = retrieval_cost(replace(n, iterations=1), d, batch, ctx).time_s
        stall = total.time_s if (n.iterations > 1 and not n.speculative) else 0.0
        return _Stage(per_iter, total.time_s, 0.0, stall, total.mem_resident_bytes, {"search": total})
    raise EstimationError(f"unknown node type {type(n).__name__}")


class _GraphPlan:
    def __init__(self, g, weight):
        self.graph, self.weight, self.name = g, weight, g.name
        llms = [n.id for n in g.nodes if isinstance(n, ModelNode) and n.role == "main-llm"]
        if len(llms) != 1:
            raise EstimationError(f"graph {g.name!r} needs exactly one main-llm node, found {len(llms)}")
        self.llm = llms[0]
        self.out_tokens = g.node(self.llm).output_len
        self.order = g.topological_order()
        self.preds = {v: [] for v in self.order}
        for e in g.edges:
            self.preds[e.dst].append((e.src, e.bytes))
        anc, stack = {self.llm}, [self.llm]
        while stack:
            for u, _ in self.preds[stack.pop()]:
                if u not in anc:
                    anc.add(u)
                    stack.append(u)
        self.ttft_order = [v for v in self.order if v in anc]
        self.nodes = {n.id: n for n in g.nodes}


class _Evaluator:
    """Caches per-(graph, node, device, batch) stage costs for one IR."""

    def __init__(self, ir, pool, ctx):
        self.ir, self.pool, self.ctx = ir, pool, ctx
        self.plans = [_GraphPlan(g, w) for g, w in ir.graphs]
        self.node_ids = ir.node_ids()
        self._cache = {}
        self._resident = {}
        self.devices = {d.id: d for d in pool.devices}
        self.warnings = []

    def stage(self, gi, node_id, dev_id, batch):
        key = (gi, node_id, dev_id, batch)
        s = self._cache.get(key)
        if s is None:
            s = _stage(self.plans[gi].nodes[node_id], self.pool.device(dev_id), batch, self.ctx, self.warnings)
            self._cache[key] = s
        return s

    def resident(self, node_id, dev_id, batch):
        key = (node_id, dev_id, batch)
        r = self._resident.get(key)
        if r is None:
            r = max(self.stage(gi, node_id, dev_id, batch).resident
                    for gi, p in enumerate(self.plans) if node_id in p.nodes)
            self._resident[key] = r
        return r

    def metrics(self, devices, units, batches):
        """Metrics for node->device, device->units, node->batch, or ``None``
        when memory does not fit."""
        resident = {}
        for node, dev in devices.items():
            resident[dev] = resident.get(dev, 0.0) + self.resident(node, dev, batches[node])
        for dev, used in resident.items():
            if used > units[dev] * self.devices[dev].mem_capacity:
                return None
        bw = self.pool.interconnect_bw
        ttft = tpot = 0.0
        load = {}
        for gi, p in enumerate(self.plans):
            dist = {}
            for v in p.ttft_order:
                s = self.stage(gi, v, devices[v], batches[v])
                best = 0.0
                for u, nbytes in p.preds[v]:
                    t = dist[u] + (nbytes / bw if nbytes and devices[u] != devices[v] else 0.0)
                    if t > best:
                        best = t
                dist[v] = best + s.latency
            stall = 0.0
            g_tpot = 0.0
            for v in p.order:
                s = self.stage(gi, v, devices[v], batches[v])
                load[devices[v]] = load.get(devices[v], 0.0) + p.weight * s.busy / batches[v]
                stall += s.stall
                if v == p.llm:
                    g_tpot = s.tpot
            ttft += p.weight * dist[p.llm]
            tpot += p.weight * (g_tpot + (stall / p.out_tokens if p.out_tokens else 0.0))
        device_rps = {d: units[d] / l for d, l in load.items() if l > 0}
        if not device_rps:
            raise EstimationError("pipeline has zero cost on every device")
        rps = min(device_rps.values())
        cost = sum(units[d] * self.devices[d].cost_per_hour for d in sorted(set(devices.values())))
        return ttft, tpot, rps, rps * 3600 / cost, cost, device_rps


def _check_placement(ir, pool, placement):
    issues = []
    ids = ir.node_ids()
    for node in ids:
        if node not in placement.assignment:
            issues.append(f"node {node!r} is not assigned")
        if placement.batch_size.get(node, 0) < 1:
            issues.append(f"node {node!r} needs a batch size >= 1")
    units = {}
    for node, (dev, u) in sorted(placement.assignment.items()):
        if node not in ids:
            issues.append(f"assignment names unknown node {node!r}")
            continue
        try:
            d = pool.device(dev)
        except KeyError:
            issues.append(f"node {node!r} assigned to unknown device {dev!r}")
            continue
        if not 1 <= u <= d.count:
            issues.append(f"node {node!r}: {u} units of {dev!r} requested, {d.count} available")
        if units.setdefault(dev, u) != u:
            issues.append(f"colocated nodes on {dev!r} must share one unit count")
    if issues:
        raise PlacementError("; ".join(issues))
    return units


def estimate(ir, pool, placement, ctx=DEFAULT_CONTEXT):
    """Predict TTFT, TPOT, RPS and requests per dollar for a placement.

    TTFT and TPOT are probability-weighted over the IR's graphs; RPS is the
    slowest device's throughput under probability-weighted load.
    """
    units = _check_placement(ir, pool, placement)
    ev = _Evaluator(ir, pool, ctx)
    devices = {n: placement.assignment[n][0] for n in ev.node_ids}
    batches = {n: placement.batch_size[n] for n in ev.node_ids}
    m = ev.metrics(devices, units, batches)
    if m is None:
        over = []
        for dev in sorted(units):
            used = sum(ev.resident(n, dev, batches[n]) for n in ev.node_ids if devices[n] == dev)
            cap = units[dev] * pool.device(dev).mem_capacity
            if used > cap:
                over.append(f"{dev!r} needs {used:.4g} B, has {cap:.4g} B")
        raise PlacementError("memory capacity exceeded: " + "; ".join(over))
    ttft, tpot, rps, rpd, cost, device_rps = m
    per_stage = {}
    for gi, p in enumerate(ev.plans):
        per_stage[p.name] = {}
        for v in p.order:
            s = ev.stage(gi, v, devices[v], batches[v])
            per_stage[p.name][v] = StageReport(devices[v], batches[v], s.latency, s.busy, s.phases)
    assert cost == pool_cost(pool, units)
    return PerfEstimate(ttft, tpot, rps, rpd, per_stage, placement, cost, device_rps,
                        tuple(dict.fromkeys(ev.warnings)))


# ------------------------------------------------------------ placement

def _batch_options(cap):
    out, b = [], 1
    while b <= cap:
        out.append(b)
        b *= 2
    return out


def placement_options(n_nodes, counts, n_batches):
    """Exact number of (assignment, units, batches) combinations."""
    # e_k: elementary symmetric polynomials of the unit counts
    e = [1] + [0] * len(counts)
    for c in counts:
        for k in range(len(counts), 0, -1):
            e[k] += e[k - 1] * c
    total = 0
    for k in range(1, min(len(counts), n_nodes) + 1):
        surj = sum((-1) ** j * math.comb(k, j) * (k - j) ** n_nodes for j in range(k + 1))
        total += e[k] * surj
    return total * n_batches**n_nodes


class _Search:
    def __init__(self, ir, pool, ctx, slo_ttft, slo_tpot, objective):
        if objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        self.ev = _Evaluator(ir, pool, ctx)
        self.pool = pool
        self.slo_ttft, self.slo_tpot, self.objective = slo_ttft, slo_tpot, objective
        self.evaluations = 0

    def score(self, devices, units, batches):
        self.evaluations += 1
        m = self.ev.metrics(devices, units, batches)
        if m is None:
            return None
        ttft, tpot, rps, rpd = m[:4]
        ok = (self.slo_ttft is None or ttft <= self.slo_ttft) and (self.slo_tpot is None or tpot <= self.slo_tpot)
        value = rps if self.objective == "rps" else rpd
        return (1, value) if ok else (0, -ttft)


def _placement(devices, units, batches):
    return Placement({n: (d, units[d]) for n, d in sorted(devices.items())}, dict(sorted(batches.items())))


def _exhaustive(search, node_ids, dev_ids, batch_opts):
    best = None
    pool = search.pool
    for combo in itertools.product(dev_ids, repeat=len(node_ids)):
        devices = dict(zip(node_ids, combo))
        used = sorted(set(combo))
        for ucombo in itertools.product(*(range(1, pool.device(d).count + 1) for d in used)):
            units = dict(zip(used, ucombo))
            for bcombo in itertools.product(batch_opts, repeat=len(node_ids)):
                batches = dict(zip(node_ids, bcombo))
                s = search.score(devices, units, batches)
                if s is not None and (best is None or s > best[0]):
                    best = (s, devices, units, batches)
    return best


def _min_units(search, devices, dev, batches):
    need = sum(search.ev.resident(n, dev, batches[n]) for n, d in devices.items() if d == dev)
    cap = search.pool.device(dev).mem_capacity
    return max(1, math.ceil(need / cap))


def _greedy(search, node_ids, dev_ids, batch_opts):
    ev, pool = search.ev, search.pool

    def work(n, d):
        return sum(p.weight * search.ev.stage(gi, n, d, 1).busy for gi, p in enumerate(ev.plans) if n in p.nodes)

    devices = {}
    load = {}
    for n in sorted(node_ids, key=lambda n: (-min(work(n, d) for d in dev_ids), n)):
        choice = None
        for d in dev_ids:
            trial = dict(devices, **{n: d})
            if _min_units(search, trial, d, {m: 1 for m in trial}) > pool.device(d).count:
                continue
            peak = max(load.get(x, 0.0) + (work(n, d) if x == d else 0.0) for x in set(load) | {d})
            if choice is None or peak < choice[0]:
                choice = (peak, d)
        if choice is None:
            raise InfeasibleError(f"greedy placement could not fit node {n!r}", oversized=(n,))
        devices[n] = choice[1]
        load[choice[1]] = load.get(choice[1], 0.0) + work(n, choice[1])
    batches = {n: 1 for n in node_ids}
    units = {d: _min_units(search, devices, d, batches) for d in sorted(set(devices.values()))}
    current = search.score(devices, units, batches)
    if current is None:
        raise InfeasibleError("greedy start does not fit in memory")
    while True:
        m = ev.metrics(devices, units, batches)
        bottleneck = min(sorted(m[5]), key=lambda d: m[5][d])
        moves = []
        if units[bottleneck] < pool.device(bottleneck).count:
            moves.append((devices, dict(units, **{bottleneck: units[bottleneck] + 1}), batches))
        on_b = [n for n in node_ids if devices[n] == bottleneck]
        for n in on_b:
            if batches[n] * 2 <= batch_opts[-1]:
                nb = dict(batches, **{n: batches[n] * 2})
                nu = dict(units, **{bottleneck: max(units[bottleneck], _min_units(search, devices, bottleneck, nb))})
                if nu[bottleneck] <= pool.device(bottleneck).count:
                    moves.append((devices, nu, nb))
        for n in on_b:
            for d in dev_ids:
                if d == bottleneck:
                    continue
                nd = dict(devices, **{n: d})
                nu = {x: units.get(x, 1) for x in sorted(set(nd.values()))}
                nu[d] = max(nu[d], _min_units(search, nd, d, batches))
                if nu[d] <= pool.device(d).count:
                    moves.append((nd, nu, batches))
        best = None
        for mv in moves:
            s = search.score(*mv)
            if s is not None and s > current and (best is None or s > best[0]):
                best = (s, mv)
        if best is None:
            return current, devices, units, batches
        current, (devices, units, batches) = best[0], best[1]


def map_resources(ir, pool, ctx=DEFAULT_CONTEXT, slo_ttft=None, slo_tpot=None, batch_cap=8,
                  objective="rps", exhaustive_limit=10**5, method="auto"):
    """Choose device, units and batch size per node.

    Maximizes ``objective`` subject to the optional latency SLOs. The search
    is exhaustive when the option count is at most ``exhaustive_limit``,
    otherwise greedy (grow the bottleneck device). Ties keep the candidate
    with the lowest device ids in node-id order.
    """
    search = _Search(ir, pool, ctx, slo_ttft, slo_tpot, objective)
    node_ids = search.ev.node_ids
    dev_ids = pool.device_ids
    batch_opts = _batch_options(batch_cap)
    oversized = [n for n in node_ids
                 if not any(search.ev.resident(n, d, 1) <= pool.device(d).count * pool.device(d).mem_capacity
                            for d in dev_ids)]
    if oversized:
        raise InfeasibleError("nodes fit on no device: " + ", ".join(oversized), oversized=oversized)
    n_opts = placement_options(len(node_ids), [pool.device(d).count for d in dev_ids], len(batch_opts))
    if method == "exhaustive" or (method == "auto" and n_opts <= exhaustive_limit):
        best = _exhaustive(search, node_ids, dev_ids, batch_opts)
    else:
        best = _greedy(search, node_ids, dev_ids, batch_opts)
    log.debug("map_resources: %d options, %d evaluated", n_opts, search.evaluations)
    if best is None:
        raise InfeasibleError("no placement fits the pool's memory")
    score, devices, units, batches = best
    placement = _placement(devices, units, batches)
    if score[0] == 0:
        raise InfeasibleError("no placement meets the latency SLO", best_effort=placement)
    return placement


# ------------------------------------------------------------ run config

@dataclass(frozen=True)
class RunConfig:
    """Cost-model and exploration settings from a ``rag-cm/1`` document."""

    constants: CostConstants = CostConstants()
    slo_ttft: Optional[float] = None
    slo_tpot: Optional[float] = None
    batch_cap: int = 8
    placement_objective: str = "rps"
    objectives: tuple = ("quality", "req_per_dollar")
    strategy: dict = field(default_factory=dict)
    seed: int = 0
    calibration: Optional[str] = None
    calibration_mode: str = "log-linear"
    recall_table: Optional[str] = None


def load_run_config(text):
    r = _doc.Reader(_doc.loads(text))
    _doc.check_schema(r, SCHEMA)
    d = RunConfig()
    cr = r.obj_at("constants", optional=True)
    constants = d.constants
    if cr is not None:
        kinds = {"strict": "bool", "ivf_nlist": "int"}
        over = {}
        for f in fields(CostConstants):
            if f.name in cr.obj:
                over[f.name] = cr.get(f.name, kinds.get(f.name, "num"))
        cr.done()
        constants = replace(constants, **over)
    sr = r.obj_at("slo", optional=True)
    slo_ttft = slo_tpot = None
    if sr is not None:
        slo_ttft = sr.get("ttft_s", "num", None)
        slo_tpot = sr.get("tpot_s", "num", None)
        sr.done()
    objectives = r.raw("objectives", list(d.objectives))
    if not (isinstance(objectives, list) and all(isinstance(o, str) for o in objectives)):
        raise SchemaError(("objectives", "expected an array of metric names"))
    strategy = r.raw("strategy", {})
    if not isinstance(strategy, dict):
        raise SchemaError(("strategy", "expected an object"))
    rc = RunConfig(
        constants=constants, slo_ttft=slo_ttft, slo_tpot=slo_tpot,
        batch_cap=r.get("batch_cap", "int", d.batch_cap),
        placement_objective=r.get("placement_objective", "str", d.placement_objective),
        objectives=tuple(objectives), strategy=strategy, seed=r.get("seed", "int", d.seed),
        calibration=r.get("calibration", "str", None),
        calibration_mode=r.get("calibration_mode", "str", d.calibration_mode),
        recall_table=r.get("recall_table", "str", None),
    )
    r.done()
    if rc.placement_objective not in OBJECTIVES:
        raise SchemaError(("placement_objective", f"expected one of {OBJECTIVES}"))
    if rc.batch_cap < 1:
        raise SchemaError(("batch_cap", "must be >= 1"))
    return rc
