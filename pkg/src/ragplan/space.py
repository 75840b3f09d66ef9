"""Algorithm configuration space: one configuration, its lowering to RAG-IR,
the searchable knob space, and knob change-cost classes."""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, fields, replace
from typing import Optional, Union

from . import _doc
from . import ir as irm
from .errors import ConfigError, LoweringError, SchemaError

SCHEMA = "rag-space/1"

INTEGRATIONS = ("prompt", "kv-cache-insert")
UNSUPPORTED_KNOBS = ("retrieval_method", "relevance_filtering")


@dataclass(frozen=True)
class EmbeddingModel:
    name: str
    params: float
    dim: int


@dataclass(frozen=True)
class Rewriter:
    params: float
    out_tokens: int
    arch: Optional[irm.Arch] = None


@dataclass(frozen=True)
class Reranker:
    params: float
    rerank_candidates: int
    arch: Optional[irm.Arch] = None


@dataclass(frozen=True)
class MainLlm:
    params: float
    out_tokens: int
    arch: Optional[irm.Arch] = None


@dataclass(frozen=True)
class AlgoConfig:
    """One point of the algorithm knob space.

    ``retrieval_frequency`` is ``"once"`` or an int ``n`` meaning one
    retrieval every ``n`` generated tokens.
    """

    num_docs: int
    chunk_tokens: int
    chunk_overlap: int
    embedding_model: EmbeddingModel
    top_k: int
    quality_req: float
    rewriter: Optional[Rewriter]
    reranker: Optional[Reranker]
    main_llm: MainLlm
    retrieval_frequency: Union[str, int] = "once"
    integration: str = "prompt"
    index: Optional[irm.IndexConfig] = None
    speculative: bool = False

    def problems(self):
        out = []
        if not self.num_docs >= 1:
            out.append("num_docs must be >= 1")
        if not self.chunk_tokens >= 1:
            out.append("chunk_tokens must be >= 1")
        if not 0 <= self.chunk_overlap < self.chunk_tokens:
            out.append("chunk_overlap must satisfy 0 <= chunk_overlap < chunk_tokens")
        if not self.top_k >= 1:
            out.append("top_k must be >= 1")
        if not 0 < self.quality_req <= 1:
            out.append("quality_req must lie in (0, 1]")
        if not (self.embedding_model.params > 0 and self.embedding_model.dim >= 1):
            out.append("embedding_model needs params > 0 and dim >= 1")
        if self.reranker is not None and self.reranker.rerank_candidates < self.top_k:
            out.append("rerank_candidates must be >= top_k")
        if not (self.main_llm.params > 0 and self.main_llm.out_tokens >= 1):
            out.append("main_llm needs params > 0 and out_tokens >= 1")
        if self.rewriter is not None and not (self.rewriter.params > 0 and self.rewriter.out_tokens >= 1):
            out.append("rewriter needs params > 0 and out_tokens >= 1")
        rf = self.retrieval_frequency
        if not (rf == "once" or (isinstance(rf, int) and not isinstance(rf, bool) and rf >= 1)):
            out.append("retrieval_frequency must be 'once' or a positive token interval")
        if self.integration not in INTEGRATIONS:
            out.append(f"integration must be one of {INTEGRATIONS}")
        if isinstance(self.index, irm.Ivf) and not 1 <= self.index.nprobe <= self.index.nlist:
            out.append("index requires 1 <= nprobe <= nlist")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))
        return self


KNOBS = tuple(f.name for f in fields(AlgoConfig))


@dataclass(frozen=True)
class WorkloadProfile:
    query_tokens: int = 32
    rewrite_prob: float = 1.0
    bytes_per_token: int = 2
    doc_tokens: int = 1024
    vector_bytes: int = 4

    def validate(self):
        if not self.query_tokens >= 1:
            raise ConfigError("query_tokens must be >= 1")
        if not 0 <= self.rewrite_prob <= 1:
            raise ConfigError("rewrite_prob must lie in [0, 1]")
        if not (self.bytes_per_token > 0 and self.doc_tokens >= 1 and self.vector_bytes > 0):
            raise ConfigError("bytes_per_token, doc_tokens and vector_bytes must be positive")
        return self


# ------------------------------------------------------------------ lowering

def num_rows(a, w):
    """Database rows: chunks per document (sliding window) times documents."""
    stride = a.chunk_tokens - a.chunk_overlap
    per_doc = max(1, math.ceil((w.doc_tokens - a.chunk_overlap) / stride))
    return a.num_docs * per_doc


def retrieval_iterations(a):
    if a.retrieval_frequency == "once":
        return 1
    return max(1, math.ceil(a.main_llm.out_tokens / a.retrieval_frequency))


def conflicts(a, w):
    """Reasons why ``a`` cannot be lowered under ``w`` (empty if fine)."""
    out = list(a.problems())
    if out:
        return out
    rows = num_rows(a, w)
    retrieved = a.reranker.rerank_candidates if a.reranker else a.top_k
    if retrieved > rows:
        out.append(f"retrieves {retrieved} rows but the database has only {rows}")
    if isinstance(a.index, irm.Ivf) and a.index.nlist > rows:
        out.append(f"index nlist={a.index.nlist} exceeds {rows} database rows")
    if a.integration == "kv-cache-insert" and a.retrieval_frequency != "once":
        out.append("kv-cache-insert conflicts with iterative retrieval: mid-decode KV insertion is not modeled")
    return out


def _graph(a, w, rows, with_rewriter, name):
    bpt = w.bytes_per_token
    nodes, edges = [], []
    prev = None

    def link(node, nbytes):
        nonlocal prev
        nodes.append(node)
        if prev is not None:
            edges.append(irm.Edge(prev.id, node.id, nbytes))
        prev = node

    if with_rewriter:
        rw = a.rewriter
        link(irm.ModelNode("rewriter", "rewriter", rw.params, w.query_tokens, rw.out_tokens, rw.arch), 0)
    enc_bytes = a.rewriter.out_tokens * bpt if with_rewriter else 0
    link(irm.ModelNode("encoder", "encoder", a.embedding_model.params, w.query_tokens, 0), enc_bytes)
    retrieved = a.reranker.rerank_candidates if a.reranker else a.top_k
    link(irm.RetrievalNode(
        "retrieval", rows, a.embedding_model.dim, retrieved, a.quality_req,
        index_config=a.index, speculative=a.speculative, iterations=retrieval_iterations(a),
    ), a.embedding_model.dim * w.vector_bytes)
    docs_tokens = a.top_k * a.chunk_tokens
    if a.reranker:
        rr = a.reranker
        rr_in = rr.rerank_candidates * (w.query_tokens + a.chunk_tokens)
        link(irm.ModelNode("reranker", "reranker", rr.params, rr_in, 0, rr.arch),
             rr.rerank_candidates * a.chunk_tokens * bpt)
    llm_in = w.query_tokens + docs_tokens + (a.rewriter.out_tokens if with_rewriter else 0)
    kv = a.integration == "kv-cache-insert"
    m = a.main_llm
    link(irm.ModelNode("llm", "main-llm", m.params, llm_in, m.out_tokens, m.arch,
                       kv_cache_reuse=kv, reused_tokens=docs_tokens if kv else 0),
         docs_tokens * bpt)
    return irm.RequestGraph(name, nodes, edges, nodes[0].id, {"llm"})


def lower(a, w=None):
    """Lower a configuration into a RAG-IR under workload profile ``w``.

    With a rewriter and ``0 < rewrite_prob < 1`` the IR is a two-template
    mixture (``rewrite`` and ``direct``).
    """
    w = (w or WorkloadProfile()).validate()
    problems = conflicts(a, w)
    if problems:
        raise LoweringError("; ".join(problems))
    rows = num_rows(a, w)
    if a.rewriter is None or w.rewrite_prob == 0:
        graphs = [(_graph(a, w, rows, False, "direct"), 1.0)]
    elif w.rewrite_prob == 1:
        graphs = [(_graph(a, w, rows, True, "rewrite"), 1.0)]
    else:
        p = float(w.rewrite_prob)
        graphs = [(_graph(a, w, rows, True, "rewrite"), p), (_graph(a, w, rows, False, "direct"), 1.0 - p)]
    return irm.RagIr(name="cfg-" + config_key(a)[:12], graphs=graphs)


# ----------------------------------------------------------- change classes

REBUILD_KNOBS = ("embedding_model", "chunk_tokens", "chunk_overlap", "num_docs")
MEDIUM_KNOBS = ("quality_req",)


def _index_kind(ic):
    return None if ic is None else type(ic).__name__


def knob_change_class(knob, old, new):
    """``None`` if equal, else ``"cheap"``, ``"medium"`` or ``"rebuild"``."""
    if old == new:
        return None
    if knob in REBUILD_KNOBS:
        return "rebuild"
    if knob == "index":
        return "rebuild" if _index_kind(old) != _index_kind(new) else "medium"
    if knob in MEDIUM_KNOBS:
        return "medium"
    return "cheap"


def change_cost(a, b):
    """Count differing knobs per class as ``(cheap, medium, rebuild)``."""
    counts = {"cheap": 0, "medium": 0, "rebuild": 0}
    for k in KNOBS:
        cls = knob_change_class(k, getattr(a, k), getattr(b, k))
        if cls:
            counts[cls] += 1
    return counts["cheap"], counts["medium"], counts["rebuild"]


# ------------------------------------------------------------------- space

@dataclass(frozen=True)
class ConfigSpace:
    """Finite domains for every knob, kept in :data:`KNOBS` order."""

    domains: tuple  # of (knob, tuple of values)

    def __post_init__(self):
        doms = dict(self.domains)
        missing = [k for k in KNOBS if k not in doms]
        extra = [k for k in doms if k not in KNOBS]
        if missing or extra:
            raise ConfigError(f"space knobs mismatch: missing={missing} unknown={extra}")
        ordered = tuple((k, tuple(doms[k])) for k in KNOBS)
        for k, vals in ordered:
            if not vals:
                raise ConfigError(f"domain of {k!r} is empty")
        object.__setattr__(self, "domains", ordered)

    @classmethod
    def around(cls, base, **overrides):
        """Space fixing every knob to ``base`` except the ``overrides``."""
        doms = {k: (getattr(base, k),) for k in KNOBS}
        for k, vals in overrides.items():
            doms[k] = tuple(vals)
        return cls(tuple(doms.items()))

    def domain(self, knob):
        return dict(self.domains)[knob]

    @property
    def size(self):
        return math.prod(len(v) for _, v in self.domains)

    def __len__(self):
        return self.size

    def unrank(self, index):
        """Configuration at position ``index`` of :func:`enumerate_space`."""
        if not 0 <= index < self.size:
            raise IndexError(index)
        values = {}
        for k, vals in reversed(self.domains):
            index, r = divmod(index, len(vals))
            values[k] = vals[r]
        return AlgoConfig(**values)

    def rank(self, a):
        index = 0
        for k, vals in self.domains:
            index = index * len(vals) + vals.index(getattr(a, k))
        return index

    def __contains__(self, a):
        return all(getattr(a, k) in vals for k, vals in self.domains)


def enumerate_space(s):
    """Yield every configuration once, lexicographically in knob order."""
    for combo in itertools.product(*(vals for _, vals in s.domains)):
        yield AlgoConfig(**dict(zip(KNOBS, combo)))


# ------------------------------------------------------------- documents

def _c(x):
    return _doc.canon_num(x)


def _llm_doc(m, extra):
    if m is None:
        return None
    doc = {"params": _c(m.params), "arch": irm._arch_doc(m.arch)}
    doc.update({k: _c(getattr(m, k)) for k in extra})
    return doc


def knob_to_doc(knob, v):
    if knob == "embedding_model":
        return {"name": v.name, "params": _c(v.params), "dim": _c(v.dim)}
    if knob == "rewriter":
        return _llm_doc(v, ("out_tokens",))
    if knob == "reranker":
        return _llm_doc(v, ("rerank_candidates",))
    if knob == "main_llm":
        return _llm_doc(v, ("out_tokens",))
    if knob == "index":
        return irm.index_to_doc(v)
    if knob in ("integration", "speculative"):
        return v
    if knob == "retrieval_frequency":
        return v if v == "once" else _c(v)
    return _c(v)


def config_to_doc(a):
    return {k: knob_to_doc(k, getattr(a, k)) for k in KNOBS}


def canonical_text(a):
    """Compact canonical JSON of a configuration (basis of its key)."""
    import json

    return json.dumps(config_to_doc(a), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_key(a):
    """Stable identity: SHA-256 hex digest of :func:`canonical_text`."""
    return hashlib.sha256(canonical_text(a).encode("utf-8")).hexdigest()


def _model_from(r, cls, extra):
    if r is None:
        return None
    out = cls(params=r.get("params", "num"), arch=irm.arch_from_doc(r.obj_at("arch", optional=True)),
              **{k: r.get(k, "int") for k in extra})
    r.done()
    return out


def knob_from_doc(knob, raw, path):
    def reader():
        if raw is None:
            return None
        return _doc.Reader(raw, path)

    if knob == "embedding_model":
        r = _doc.Reader(raw, path)
        out = EmbeddingModel(name=r.get("name", "str"), params=r.get("params", "num"), dim=r.get("dim", "int"))
        r.done()
        return out
    if knob == "rewriter":
        return _model_from(reader(), Rewriter, ("out_tokens",))
    if knob == "reranker":
        return _model_from(reader(), Reranker, ("rerank_candidates",))
    if knob == "main_llm":
        if raw is None:
            raise SchemaError((path, "main_llm cannot be null"))
        return _model_from(reader(), MainLlm, ("out_tokens",))
    if knob == "index":
        return irm.index_from_doc(reader())
    if knob == "retrieval_frequency":
        if raw == "once":
            return raw
        return _doc._coerce(raw, "int", path)
    if knob == "integration":
        v = _doc._coerce(raw, "str", path)
        if v not in INTEGRATIONS:
            raise SchemaError((path, f"expected one of {INTEGRATIONS}"))
        return v
    if knob == "speculative":
        return _doc._coerce(raw, "bool", path)
    if knob == "quality_req":
        return _doc._coerce(raw, "num", path)
    return _doc._coerce(raw, "int", path)


def _reject_unsupported(obj, path):
    for k in UNSUPPORTED_KNOBS:
        if k in obj:
            raise SchemaError((f"{path}.{k}", "unsupported knob (vector search only, no relevance filtering)"))


def config_from_doc(obj, path="config"):
    if not isinstance(obj, dict):
        raise SchemaError((path, "expected an object"))
    _reject_unsupported(obj, path)
    r = _doc.Reader(obj, path, KNOBS)
    r.require(*KNOBS)
    values = {k: knob_from_doc(k, r.raw(k), f"{path}.{k}") for k in KNOBS}
    r.done()
    return AlgoConfig(**values)


def space_to_doc(s):
    return {"schema": SCHEMA, "space": {k: [knob_to_doc(k, v) for v in vals] for k, vals in s.domains}}


def profile_to_doc(w):
    return {"schema": SCHEMA, "profile": {f.name: _c(getattr(w, f.name)) for f in fields(WorkloadProfile)}}


def config_document(a):
    return {"schema": SCHEMA, "config": config_to_doc(a)}


def load_config(text):
    r = _doc.Reader(_doc.loads(text))
    r.require("config", "schema")
    _doc.check_schema(r, SCHEMA)
    a = config_from_doc(r.raw("config"))
    r.done()
    problems = a.problems()
    if problems:
        raise SchemaError([("config", p) for p in problems])
    return a


def load_space(text):
    r = _doc.Reader(_doc.loads(text))
    r.require("space", "schema")
    _doc.check_schema(r, SCHEMA)
    raw = r.raw("space")
    if not isinstance(raw, dict):
        raise SchemaError(("space", "expected an object"))
    _reject_unsupported(raw, "space")
    sr = _doc.Reader(raw, "space", KNOBS)
    sr.require(*KNOBS)
    doms = {}
    for k in KNOBS:
        vals = [knob_from_doc(k, v, p) for p, v in sr.list_at(k)]
        if not vals:
            raise SchemaError((f"space.{k}", "domain must be non-empty"))
        doms[k] = tuple(vals)
    sr.done()
    r.done()
    return ConfigSpace(tuple(doms.items()))


def load_profile(text):
    r = _doc.Reader(_doc.loads(text))
    r.require("profile", "schema")
    _doc.check_schema(r, SCHEMA)
    pr = r.obj_at("profile")
    defaults = WorkloadProfile()
    w = WorkloadProfile(
        query_tokens=pr.get("query_tokens", "int", defaults.query_tokens),
        rewrite_prob=pr.get("rewrite_prob", "num", defaults.rewrite_prob),
        bytes_per_token=pr.get("bytes_per_token", "num", defaults.bytes_per_token),
        doc_tokens=pr.get("doc_tokens", "int", defaults.doc_tokens),
        vector_bytes=pr.get("vector_bytes", "num", defaults.vector_bytes),
    )
    pr.done()
    r.done()
    try:
        return w.validate()
    except ConfigError as exc:
        raise SchemaError(("profile", str(exc))) from None


def dump(doc):
    return _doc.dumps(doc)


def with_knob(a, knob, value):
    return replace(a, **{knob: value})
