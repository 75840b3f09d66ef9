"""RAG-IR: weighted per-request dataflow graphs of model and retrieval nodes.

A :class:`RagIr` is a finite mixture of :class:`RequestGraph` templates.
Each graph is a DAG whose nodes are :class:`ModelNode` or
:class:`RetrievalNode` and whose edges carry a data-transfer volume.
Values are immutable; :func:`validate` reports invariant violations as data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Optional, Union

from . import _doc
from .errors import SchemaError

SCHEMA = "rag-ir/1"
MODEL_ROLES = ("rewriter", "reranker", "main-llm", "encoder")


@dataclass(frozen=True)
class Arch:
    n_layers: int
    d_model: int


@dataclass(frozen=True)
class Flat:
    pass


@dataclass(frozen=True)
class Ivf:
    nlist: int
    nprobe: int


@dataclass(frozen=True)
class Calibrated:
    table_ref: str


IndexConfig = Union[Flat, Ivf, Calibrated]


@dataclass(frozen=True)
class ModelNode:
    id: str
    role: str
    params: float
    input_len: int
    output_len: int
    arch: Optional[Arch] = None
    kv_cache_reuse: bool = False
    reused_tokens: int = 0


@dataclass(frozen=True)
class RetrievalNode:
    id: str
    num_rows: int
    dim: int
    top_k: int
    quality_req: float
    index_config: Optional[IndexConfig] = None
    speculative: bool = False
    iterations: int = 1


Node = Union[ModelNode, RetrievalNode]


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    bytes: float = 0


@dataclass(frozen=True)
class RequestGraph:
    name: str
    nodes: tuple
    edges: tuple
    entry: str
    exits: frozenset

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "exits", frozenset(self.exits))

    def node(self, node_id):
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def successors(self):
        succ = {n.id: [] for n in self.nodes}
        for e in self.edges:
            succ.setdefault(e.src, []).append(e.dst)
        return succ

    def predecessors(self):
        pred = {n.id: [] for n in self.nodes}
        for e in self.edges:
            pred.setdefault(e.dst, []).append(e.src)
        return pred

    def topological_order(self):
        """Node ids in a deterministic topological order; raises on cycles."""
        ts = TopologicalSorter()
        for n in self.nodes:
            ts.add(n.id)
        for e in self.edges:
            ts.add(e.dst, e.src)
        ts.prepare()
        rank = {n.id: i for i, n in enumerate(self.nodes)}
        order = []
        while ts.is_active():
            ready = sorted(ts.get_ready(), key=lambda i: rank.get(i, len(rank)))
            order.extend(ready)
            ts.done(*ready)
        return order


@dataclass(frozen=True)
class RagIr:
    name: str
    graphs: tuple  # of (RequestGraph, weight)

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple((g, w) for g, w in self.graphs))

    def node_ids(self):
        """All node ids across graphs, sorted."""
        return sorted({n.id for g, _ in self.graphs for n in g.nodes})


def single(graph, name=None):
    """Wrap one graph as a weight-1 IR."""
    return RagIr(name=name or graph.name, graphs=((graph, 1.0),))


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def messages(self):
        return [str(v) for v in self.violations]


def _is_count(x, minimum):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and float(x).is_integer() and x >= minimum


def _node_violations(n, path):
    out = []
    if isinstance(n, ModelNode):
        if n.role not in MODEL_ROLES:
            out.append((f"{path}.role", f"unknown role {n.role!r}"))
        if not n.params > 0:
            out.append((f"{path}.params", "params must be > 0"))
        if not _is_count(n.input_len, 1):
            out.append((f"{path}.input_len", "input_len must be an integer >= 1"))
        min_out = 1 if n.role == "main-llm" else 0
        if not _is_count(n.output_len, min_out):
            out.append((f"{path}.output_len", f"output_len must be an integer >= {min_out}"))
        if n.arch is not None and not (_is_count(n.arch.n_layers, 1) and _is_count(n.arch.d_model, 1)):
            out.append((f"{path}.arch", "n_layers and d_model must be integers >= 1"))
        if not _is_count(n.reused_tokens, 0):
            out.append((f"{path}.reused_tokens", "reused_tokens must be an integer >= 0"))
        elif not n.kv_cache_reuse and n.reused_tokens != 0:
            out.append((f"{path}.reused_tokens", "reused_tokens must be 0 when kv_cache_reuse is off"))
        elif n.reused_tokens > n.input_len:
            out.append((f"{path}.reused_tokens", "reused_tokens > input_len"))
    elif isinstance(n, RetrievalNode):
        if not _is_count(n.num_rows, 1):
            out.append((f"{path}.num_rows", "num_rows must be an integer >= 1"))
        if not _is_count(n.dim, 1):
            out.append((f"{path}.dim", "dim must be an integer >= 1"))
        if not _is_count(n.top_k, 1):
            out.append((f"{path}.top_k", "top_k must be an integer >= 1"))
        elif _is_count(n.num_rows, 1) and n.top_k > n.num_rows:
            out.append((f"{path}.top_k", "top_k > num_rows"))
        if not 0 < n.quality_req <= 1:
            out.append((f"{path}.quality_req", "quality_req must lie in (0, 1]"))
        if not _is_count(n.iterations, 1):
            out.append((f"{path}.iterations", "iterations must be an integer >= 1"))
        ic = n.index_config
        if isinstance(ic, Ivf):
            if not (_is_count(ic.nprobe, 1) and _is_count(ic.nlist, 1) and ic.nprobe <= ic.nlist <= n.num_rows):
                out.append((f"{path}.index_config", "requires 1 <= nprobe <= nlist <= num_rows"))
        elif isinstance(ic, Calibrated):
            if not ic.table_ref:
                out.append((f"{path}.index_config.table_ref", "table_ref must be non-empty"))
        elif ic is not None and not isinstance(ic, Flat):
            out.append((f"{path}.index_config", f"unknown index config {ic!r}"))
    else:
        out.append((path, f"unknown node type {type(n).__name__}"))
    return out


def graph_violations(g, path="graph"):
    out = []
    ids = [n.id for n in g.nodes]
    seen = set()
    for i, n in enumerate(g.nodes):
        npath = f"{path}.nodes[{i}]"
        if n.id in seen:
            out.append((f"{npath}.id", f"duplicate node id {n.id!r}"))
        seen.add(n.id)
        out.extend(_node_violations(n, npath))
    if not g.nodes:
        out.append((f"{path}.nodes", "graph has no nodes"))
    idset = set(ids)
    for i, e in enumerate(g.edges):
        epath = f"{path}.edges[{i}]"
        for end, name in ((e.src, "from"), (e.dst, "to")):
            if end not in idset:
                out.append((f"{epath}.{name}", f"unknown node {end!r}"))
        if not e.bytes >= 0:
            out.append((f"{epath}.bytes", "bytes must be >= 0"))
    if g.entry not in idset:
        out.append((f"{path}.entry", f"unknown node {g.entry!r}"))
    if not g.exits:
        out.append((f"{path}.exits", "exits must be non-empty"))
    for x in sorted(g.exits):
        if x not in idset:
            out.append((f"{path}.exits", f"unknown node {x!r}"))
    if any(p.endswith(("from", "to")) for p, _ in out):
        return out
    try:
        g.topological_order()
    except CycleError as exc:
        out.append((f"{path}.edges", f"directed cycle through {exc.args[1][:-1]!r}"))
        return out
    if g.entry in idset:
        reach = _reachable(g, g.entry)
        for i, n in enumerate(g.nodes):
            if n.id not in reach:
                out.append((f"{path}.nodes[{i}]", f"node {n.id!r} unreachable from entry"))
    return out


def _reachable(g, start):
    succ = g.successors()
    stack, seen = [start], {start}
    while stack:
        for v in succ.get(stack.pop(), ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def validate(ir):
    """Collect every invariant violation of ``ir``; never raises."""
    out = []
    if not ir.graphs:
        out.append(("graphs", "graph list is empty"))
    total = 0.0
    names = set()
    for i, (g, w) in enumerate(ir.graphs):
        gpath = f"graphs[{i}]"
        if not 0 <= w <= 1:
            out.append((f"{gpath}.weight", "weight must lie in [0, 1]"))
        total += w
        if g.name in names:
            out.append((f"{gpath}.graph.name", f"duplicate graph name {g.name!r}"))
        names.add(g.name)
        out.extend(graph_violations(g, f"{gpath}.graph"))
    if ir.graphs and abs(math.fsum(w for _, w in ir.graphs) - 1.0) > 1e-9:
        out.append(("graphs", f"weights sum ≠ 1 (got {total!r})"))
    return ValidationReport(tuple(Violation(p, m) for p, m in out))


def critical_paths(g):
    """Every directed entry-to-exit path of ``g``, as lists of node ids.

    Paths come out in depth-first order following edge declaration order.
    """
    g.topological_order()  # raises CycleError on cycles
    succ = g.successors()
    paths = []

    def walk(path):
        node = path[-1]
        if node in g.exits:
            paths.append(list(path))
        for nxt in succ.get(node, ()):
            path.append(nxt)
            walk(path)
            path.pop()

    walk([g.entry])
    return paths


# ------------------------------------------------------------- serialization

def _index_to_doc(ic):
    if ic is None:
        return None
    if isinstance(ic, Flat):
        return {"type": "flat"}
    if isinstance(ic, Ivf):
        return {"type": "ivf", "nlist": _doc.canon_num(ic.nlist), "nprobe": _doc.canon_num(ic.nprobe)}
    return {"type": "calibrated", "table_ref": ic.table_ref}


def index_from_doc(r):
    """Parse an index-config object (a :class:`_doc.Reader`) or ``None``."""
    if r is None:
        return None
    kind = r.get("type", "str")
    if kind == "flat":
        out = Flat()
    elif kind == "ivf":
        out = Ivf(nlist=r.get("nlist", "int"), nprobe=r.get("nprobe", "int"))
    elif kind == "calibrated":
        out = Calibrated(table_ref=r.get("table_ref", "str"))
    else:
        raise SchemaError((f"{r.path}.type", f"unknown index type {kind!r}"))
    r.done()
    return out


def index_to_doc(ic):
    return _index_to_doc(ic)


def _arch_doc(a):
    return None if a is None else {"n_layers": _doc.canon_num(a.n_layers), "d_model": _doc.canon_num(a.d_model)}


def arch_from_doc(r):
    if r is None:
        return None
    out = Arch(n_layers=r.get("n_layers", "int"), d_model=r.get("d_model", "int"))
    r.done()
    return out


def _node_doc(n):
    c = _doc.canon_num
    if isinstance(n, ModelNode):
        return {
            "kind": "model", "id": n.id, "role": n.role, "params": c(n.params),
            "arch": _arch_doc(n.arch), "input_len": c(n.input_len), "output_len": c(n.output_len),
            "kv_cache_reuse": n.kv_cache_reuse, "reused_tokens": c(n.reused_tokens),
        }
    return {
        "kind": "retrieval", "id": n.id, "num_rows": c(n.num_rows), "dim": c(n.dim),
        "top_k": c(n.top_k), "quality_req": c(n.quality_req),
        "index_config": _index_to_doc(n.index_config), "speculative": n.speculative,
        "iterations": c(n.iterations),
    }


def graph_to_doc(g):
    return {
        "name": g.name,
        "nodes": [_node_doc(n) for n in g.nodes],
        "edges": [{"from": e.src, "to": e.dst, "bytes": _doc.canon_num(e.bytes)} for e in g.edges],
        "entry": g.entry,
        "exits": sorted(g.exits),
    }


def to_doc(ir):
    return {
        "schema": SCHEMA,
        "name": ir.name,
        "graphs": [{"weight": _doc.canon_num(w), "graph": graph_to_doc(g)} for g, w in ir.graphs],
    }


def serialize(ir):
    """Canonical JSON text for a valid IR; equal IRs give identical bytes."""
    report = validate(ir)
    if not report.ok:
        raise ValueError("cannot serialize invalid IR: " + "; ".join(report.messages()))
    return _doc.dumps(to_doc(ir))


_MODEL_FIELDS = ("kind", "id", "role", "params", "arch", "input_len", "output_len", "kv_cache_reuse", "reused_tokens")
_RETRIEVAL_FIELDS = ("kind", "id", "num_rows", "dim", "top_k", "quality_req", "index_config", "speculative",
                     "iterations")


def _node_from(path, raw):
    kind = _doc.Reader(raw, path).get("kind", "str")
    fields = {"model": _MODEL_FIELDS, "retrieval": _RETRIEVAL_FIELDS}.get(kind)
    r = _doc.Reader(raw, path, fields)
    r.get("kind", "str")
    if kind == "model":
        n = ModelNode(
            id=r.get("id", "str"), role=r.get("role", "str"), params=r.get("params", "num"),
            arch=arch_from_doc(r.obj_at("arch", optional=True)),
            input_len=r.get("input_len", "int"), output_len=r.get("output_len", "int"),
            kv_cache_reuse=r.get("kv_cache_reuse", "bool"), reused_tokens=r.get("reused_tokens", "int"),
        )
    elif kind == "retrieval":
        n = RetrievalNode(
            id=r.get("id", "str"), num_rows=r.get("num_rows", "int"), dim=r.get("dim", "int"),
            top_k=r.get("top_k", "int"), quality_req=r.get("quality_req", "num"),
            index_config=index_from_doc(r.obj_at("index_config", optional=True)),
            speculative=r.get("speculative", "bool"), iterations=r.get("iterations", "int"),
        )
    else:
        raise SchemaError((f"{path}.kind", f"expected 'model' or 'retrieval', got {kind!r}"))
    r.done()
    return n


def graph_from_doc(r):
    _doc.Reader(r.obj, r.path, ("name", "nodes", "edges", "entry", "exits"))
    r.require("name", "nodes", "edges", "entry", "exits")
    nodes = [_node_from(p, v) for p, v in r.list_at("nodes")]
    edges = []
    for p, v in r.list_at("edges"):
        er = _doc.Reader(v, p, ("from", "to", "bytes"))
        edges.append(Edge(src=er.get("from", "str"), dst=er.get("to", "str"), bytes=er.get("bytes", "num")))
        er.done()
    exits = []
    for p, v in r.list_at("exits"):
        if not isinstance(v, str):
            raise SchemaError((p, "expected a string"))
        exits.append(v)
    g = RequestGraph(name=r.get("name", "str"), nodes=nodes, edges=edges, entry=r.get("entry", "str"), exits=exits)
    r.done()
    return g


def from_doc(obj):
    r = _doc.Reader(obj, "", ("schema", "name", "graphs"))
    r.require("graphs", "name", "schema")
    _doc.check_schema(r, SCHEMA)
    graphs = []
    for p, v in r.list_at("graphs"):
        gr = _doc.Reader(v, p, ("weight", "graph"))
        gr.require("weight", "graph")
        w = gr.get("weight", "num")
        g = graph_from_doc(gr.obj_at("graph"))
        gr.done()
        graphs.append((g, w))
    ir = RagIr(name=r.get("name", "str"), graphs=graphs)
    r.done()
    return ir


def deserialize(text):
    """Parse an IR document; raises :class:`SchemaError` with field paths."""
    return from_doc(_doc.loads(text))
