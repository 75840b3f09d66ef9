import math

import numpy as np
import pytest

from ragplan.hardware import Device, HardwarePool
from ragplan.ir import Arch, Edge, Flat, Ivf, ModelNode, RagIr, RequestGraph, RetrievalNode
from ragplan.space import AlgoConfig, EmbeddingModel, MainLlm, Reranker, Rewriter, WorkloadProfile

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {name} - {detail}")


@pytest.fixture
def gpu():
    return Device("gpu", "gpu", peak_flops=1e15, mem_bw=3e12, mem_capacity=8e10, cost_per_hour=2.0, count=1)


@pytest.fixture
def small_pool():
    return HardwarePool(
        [
            Device("cpu", "cpu", peak_flops=2e12, mem_bw=2e11, mem_capacity=5e11, cost_per_hour=0.5, count=1),
            Device("gpu", "gpu", peak_flops=1e15, mem_bw=3e12, mem_capacity=8e10, cost_per_hour=2.0, count=1),
        ],
        interconnect_bw=1e10,
    )


def base_config(**kw):
    values = dict(
        num_docs=1000, chunk_tokens=200, chunk_overlap=0,
        embedding_model=EmbeddingModel("e5-base", 1.1e8, 768),
        top_k=4, quality_req=0.9, rewriter=None, reranker=None,
        main_llm=MainLlm(7e9, 128, Arch(32, 4096)),
    )
    values.update(kw)
    return AlgoConfig(**values)


@pytest.fixture
def config():
    return base_config()


@pytest.fixture
def profile():
    return WorkloadProfile(query_tokens=32)


def chain_graph(name="g", llm_params=7e9):
    nodes = [
        ModelNode("encoder", "encoder", 1.1e8, 32, 0),
        RetrievalNode("retrieval", 100_000, 768, 4, 0.9),
        ModelNode("llm", "main-llm", llm_params, 832, 64, Arch(32, 4096)),
    ]
    edges = [Edge("encoder", "retrieval", 3072), Edge("retrieval", "llm", 1600)]
    return RequestGraph(name, nodes, edges, "encoder", {"llm"})


# ---------------------------------------------------------------- random IRs

def random_node_specs(rng, analytic_only=True):
    """Random chain of node objects: [rewriter?] encoder retrieval [reranker?] llm."""
    def arch():
        return Arch(int(rng.integers(1, 80)), int(rng.integers(64, 8192))) if rng.random() < 0.7 else None

    nodes = []
    if rng.random() < 0.4:
        nodes.append(ModelNode("rewriter", "rewriter", float(rng.integers(1, 80)) * 1e8,
                               int(rng.integers(1, 200)), int(rng.integers(1, 64)), arch()))
    nodes.append(ModelNode("encoder", "encoder", float(rng.integers(1, 50)) * 1e7, int(rng.integers(1, 128)), 0, arch()))
    rows = int(10 ** rng.uniform(1, 6.5))
    top_k = int(rng.integers(1, min(rows, 64) + 1))
    kind = rng.integers(0, 3)
    if kind == 0:
        index = Flat()
    elif kind == 1:
        nlist = int(rng.integers(1, min(rows, 4096) + 1))
        index = Ivf(nlist, int(rng.integers(1, nlist + 1)))
    else:
        index = None
    iterations = 1 if rng.random() < 0.5 else int(rng.integers(2, 9))
    nodes.append(RetrievalNode("retrieval", rows, int(rng.integers(8, 1536)), top_k,
                               float(rng.uniform(0.05, 1.0)), index, bool(rng.random() < 0.5), iterations))
    if rng.random() < 0.4:
        nodes.append(ModelNode("reranker", "reranker", float(rng.integers(1, 10)) * 1e8,
                               int(rng.integers(1, 4096)), 0, arch()))
    in_len = int(rng.integers(1, 4096))
    reuse = bool(rng.random() < 0.4)
    reused = int(rng.integers(0, in_len + 1)) if reuse else 0
    nodes.append(ModelNode("llm", "main-llm", float(rng.integers(5, 700)) * 1e8, in_len,
                           int(rng.integers(1, 512)), arch(), reuse, reused))
    return nodes


def chain_from_nodes(name, nodes, rng):
    edges = [Edge(a.id, b.id, int(rng.integers(0, 10**6))) for a, b in zip(nodes, nodes[1:])]
    return RequestGraph(name, nodes, edges, nodes[0].id, {nodes[-1].id})


def random_ir(rng):
    """One- or two-graph mixture of random chains."""
    g1 = chain_from_nodes("a", random_node_specs(rng), rng)
    if rng.random() < 0.3:
        g2 = chain_from_nodes("b", random_node_specs(rng), rng)
        w = float(rng.uniform(0.05, 0.95))
        return RagIr("rand", ((g1, w), (g2, 1.0 - w)))
    return RagIr("rand", ((g1, 1.0),))


def huge_pool(n_devices=2):
    devices = [
        Device(f"d{i}", "gpu", peak_flops=10 ** (12 + i), mem_bw=10 ** (11 + i) * 3, mem_capacity=1e18,
               cost_per_hour=1.0 + i, count=2, efficiency=0.5 + 0.2 * i)
        for i in range(n_devices)
    ]
    return HardwarePool(devices, interconnect_bw=1e10)


def random_placement(ir, pool, rng):
    from ragplan.costmodel import Placement

    devs = pool.device_ids
    units = {d: int(rng.integers(1, pool.device(d).count + 1)) for d in devs}
    assignment, batch = {}, {}
    for n in ir.node_ids():
        d = devs[int(rng.integers(0, len(devs)))]
        assignment[n] = (d, units[d])
        batch[n] = int(2 ** rng.integers(0, 4))
    return Placement(assignment, batch)


def rel_close(a, b, tol):
    return math.isclose(a, b, rel_tol=tol, abs_tol=0.0) or a == b


# ------------------------------------------------------------ exploration

ARCH7 = Arch(32, 4096)
KNOB_CHOICES = {
    "num_docs": (200, 1000, 5000, 20000),
    "chunk_tokens": (128, 256, 512),
    "embedding_model": (EmbeddingModel("mini", 2.2e7, 384), EmbeddingModel("e5-base", 1.1e8, 768),
                        EmbeddingModel("e5-large", 3.3e8, 1024)),
    "top_k": (1, 2, 4, 8, 16),
    "quality_req": (0.5, 0.8, 0.9, 0.95, 1.0),
    "rewriter": (None, Rewriter(1e9, 32, Arch(16, 2048))),
    "reranker": (None, Reranker(3e8, 32, Arch(24, 1024))),
    "main_llm": (MainLlm(1e9, 128, Arch(16, 2048)), MainLlm(7e9, 128, ARCH7), MainLlm(1.3e10, 128, Arch(40, 5120)),
                 MainLlm(3e9, 64, Arch(26, 3072))),
    "retrieval_frequency": ("once", 32, 64),
    "integration": ("prompt", "kv-cache-insert"),
    "index": (None, Flat(), Ivf(16, 4)),
    "speculative": (False, True),
}


def random_space(rng, max_size=512, min_size=2):
    """Space over a random subset of knobs with at most ``max_size`` points."""
    from ragplan.space import ConfigSpace

    base = base_config()
    while True:
        target = math.exp(rng.uniform(math.log(max(2, min_size)), math.log(max_size)))
        doms = {}
        knobs = list(KNOB_CHOICES)
        rng.shuffle(knobs)
        size = 1
        for k in knobs:
            if size >= target:
                break
            vals = KNOB_CHOICES[k]
            n = int(rng.integers(2, len(vals) + 1))
            if size * n > max_size:
                continue
            picks = sorted(rng.choice(len(vals), size=n, replace=False))
            doms[k] = tuple(vals[i] for i in picks)
            size *= n
        if size >= min_size:
            return ConfigSpace.around(base, **doms)


def explore_pool():
    return HardwarePool(
        [
            Device("cpu", "cpu", peak_flops=2e12, mem_bw=2e11, mem_capacity=5e11, cost_per_hour=0.5),
            Device("gpu", "gpu", peak_flops=1e15, mem_bw=3e12, mem_capacity=8e10, cost_per_hour=2.0),
        ],
        interconnect_bw=1e10,
    )


def oracle_frontier(space, evaluation, spec):
    """Keys of the brute-force Pareto set: evaluate everything, then keep
    every feasible point no other feasible point beats."""
    from ragplan.errors import RagPlanError
    from ragplan.space import enumerate_space

    points = []
    for i, a in enumerate(enumerate_space(space)):
        e = evaluation(i, a, spec)
        if e.status == "ok":
            points.append((e.key, e.objectives))
    signs = [1 if d == "max" else -1 for d in spec.directions]

    def beats(u, v):
        su = [s * x for s, x in zip(signs, u)]
        sv = [s * x for s, x in zip(signs, v)]
        return all(x >= y for x, y in zip(su, sv)) and su != sv

    return {k for k, v in points if not any(beats(u, v) for _, u in points)}
