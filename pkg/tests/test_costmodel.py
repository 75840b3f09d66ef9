import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragplan.calibration import RecallTable, load_calibration, load_recall_table
from ragplan.costmodel import (CostConstants, CostContext, Placement, edge_cost, estimate, load_run_config,
                               map_resources, model_decode_cost, model_prefill_cost, placement_options,
                               recall_to_nprobe, retrieval_cost, roofline)
from ragplan.errors import EstimationError, InfeasibleError, PlacementError, SchemaError
from ragplan.hardware import Device, HardwarePool, pool_cost
from ragplan.ir import Arch, Calibrated, Edge, Flat, Ivf, ModelNode, RagIr, RequestGraph, RetrievalNode, single

from conftest import chain_graph, huge_pool, random_ir, random_placement

UNIT = CostConstants(efficiency=1.0)
# compute-bound device: memory legs vanish
COMPUTE = Device("c", "cpu", peak_flops=1e12, mem_bw=1e18, mem_capacity=1e15, cost_per_hour=1.0, count=4)


def llm(params=7e9, input_len=1000, out=128, arch=None, reuse=False, reused=0):
    return ModelNode("llm", "main-llm", params, input_len, out, arch, reuse, reused)


# --------------------------------------------------------------- prefill

def test_prefill_flops_anchor(gpu):
    assert model_prefill_cost(llm(), gpu).flops == 1.4e13


def test_prefill_attention_term(gpu):
    c = model_prefill_cost(llm(arch=Arch(32, 4096)), gpu, batch=2)
    assert c.flops == 2 * (2 * 7e9 * 1000 + 4 * 32 * 4096 * 1000**2)
    assert c.mem_bytes == 7e9 * 2 + 2 * (2 * 32 * 4096 * 1000 * 2)


def test_full_reuse_zero_compute(gpu):
    c = model_prefill_cost(llm(arch=Arch(32, 4096), reuse=True, reused=1000), gpu)
    assert c.flops == 0 and c.mem_bytes > 0


def test_roofline_takes_max():
    d = Device("d", "gpu", peak_flops=1e12, mem_bw=1e9, mem_capacity=1, cost_per_hour=1)
    assert roofline(2e12, 3e9, d, 1.0) == 3.0
    assert roofline(4e12, 3e9, d, 1.0) == 4.0
    assert roofline(4e12, 3e9, d, 0.5) == 8.0


def test_strict_mode_warns_without_arch(gpu):
    w = []
    model_prefill_cost(llm(), gpu, constants=CostConstants(strict=True), warnings=w)
    assert w and "attention" in w[0]
    w = []
    model_prefill_cost(llm(), gpu, warnings=w)
    assert w == []


def test_reused_exceeding_input_is_error(gpu):
    with pytest.raises(EstimationError):
        model_prefill_cost(llm(input_len=10, reuse=True, reused=11), gpu)


# ---------------------------------------------------------------- decode

def test_decode_memory_bound_anchor(gpu):
    tok, total = model_decode_cost(llm(out=10), gpu, constants=UNIT)
    assert tok.time_s == pytest.approx(max(1.4e10 / 1e15, 1.4e10 / 3e12), rel=1e-12)
    assert tok.time_s == pytest.approx(4.667e-3, rel=1e-3)
    assert total == pytest.approx(10 * tok.time_s, rel=1e-15)


def brute_decode_token(params, batch, dev):
    """Both roofline legs by hand, no architecture."""
    return max(batch * 2 * params / dev.peak_flops, params * 2 / dev.mem_bw)


def test_decode_batching_amortizes_weights(gpu):
    t1, _ = model_decode_cost(llm(out=64), gpu, 1, UNIT)
    t8, _ = model_decode_cost(llm(out=64), gpu, 8, UNIT)
    assert t1.time_s == pytest.approx(brute_decode_token(7e9, 1, gpu), rel=1e-12)
    assert t8.time_s == pytest.approx(brute_decode_token(7e9, 8, gpu), rel=1e-12)
    assert t8.time_s / t1.time_s == pytest.approx(1.0, rel=0.01)
    assert (8 / t8.time_s) / (1 / t1.time_s) == pytest.approx(8.0, rel=0.01)


def test_decode_zero_tokens(gpu):
    tok, total = model_decode_cost(ModelNode("enc", "encoder", 1e8, 32, 0), gpu)
    assert total == 0 and tok.time_s == 0


# ------------------------------------------------------------- retrieval

def rnode(rows=10**6, dim=128, top_k=1, q=0.9, index=None, spec=False, iters=1):
    return RetrievalNode("retrieval", rows, dim, top_k, q, index, spec, iters)


def test_ivf_anchor(gpu):
    c = retrieval_cost(rnode(index=Ivf(1000, 10)), gpu)
    assert c.detail["fine_scan_flops"] == 2.56e6
    assert c.detail["coarse_flops"] == 2.56e5
    assert c.flops == 2.56e6 + 2.56e5  # top_k = 1: log2(1) = 0


def test_flat_degenerate(gpu):
    c = retrieval_cost(rnode(rows=1, dim=96, index=Flat()), gpu)
    assert c.flops == 2 * 96
    assert c.mem_bytes == 4 * 96


def test_select_term(gpu):
    c = retrieval_cost(rnode(rows=1000, dim=8, top_k=16, index=Flat()), gpu)
    assert c.flops == 2 * 8 * 1000 + 1000 * 4


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**7), st.integers(1, 4096), st.integers(1, 256), st.data())
def test_full_probe_equals_flat(rows, dim, top_k, data):
    top_k = min(top_k, rows)
    nlist = data.draw(st.integers(1, min(rows, 4096)))
    dev = COMPUTE
    ivf = retrieval_cost(rnode(rows, dim, top_k, index=Ivf(nlist, nlist)), dev)
    flat = retrieval_cost(rnode(rows, dim, top_k, index=Flat()), dev)
    assert ivf.detail["fine_scan_flops"] == flat.detail["fine_scan_flops"] == 2 * dim * rows
    assert ivf.detail["select_flops"] == flat.detail["select_flops"]


def test_iterations_and_batch_scale(gpu):
    one = retrieval_cost(rnode(index=Ivf(1000, 10)), gpu)
    many = retrieval_cost(rnode(index=Ivf(1000, 10), iters=3), gpu, batch=4)
    assert many.flops == 12 * one.flops and many.time_s == pytest.approx(12 * one.time_s, rel=1e-15)


def test_invalid_ivf_is_error(gpu):
    with pytest.raises(EstimationError):
        retrieval_cost(rnode(rows=100, index=Ivf(200, 1)), gpu)


def test_derived_index_uses_cheaper(gpu):
    n = rnode(rows=10**6, q=0.5)
    c = retrieval_cost(n, gpu)
    assert c.detail["index"] == f"ivf(nlist=1024,nprobe={math.ceil(1024 * 0.5**4)})"
    tiny = retrieval_cost(rnode(rows=4, q=0.5), gpu)
    assert tiny.time_s <= retrieval_cost(rnode(rows=4, index=Flat()), gpu).time_s


def test_calibrated_index(gpu):
    table = load_calibration("op,rows,dim,k,seconds\nhnsw,1000,128,1,0.001\nhnsw,100000,128,1,0.01\n")
    ctx = CostContext(calibration=table)
    c = retrieval_cost(rnode(rows=10000, index=Calibrated("hnsw"), iters=2), gpu, batch=3, ctx=ctx)
    assert c.time_s == pytest.approx(6 * math.sqrt(0.001 * 0.01), rel=1e-12)
    with pytest.raises(EstimationError):
        retrieval_cost(rnode(rows=10000, index=Calibrated("hnsw")), gpu)


# --------------------------------------------------------- recall/nprobe

def test_recall_to_nprobe_examples():
    assert recall_to_nprobe(1.0, 1000, 10**6) == 1000
    assert recall_to_nprobe(0.5, 1000, 10**6) == 63
    assert recall_to_nprobe(0.01, 1000, 10**6) == 1
    assert recall_to_nprobe(0.93, 1000, 10**6, table=RecallTable(((0.9, 32), (0.95, 64)))) == 64


def test_recall_table_non_monotone_load_error():
    with pytest.raises(SchemaError):
        load_recall_table("recall,nprobe\n0.9,64\n0.95,32\n")


@settings(max_examples=200, deadline=None)
@given(st.floats(0.001, 1.0), st.floats(0.001, 1.0), st.integers(1, 5000))
def test_nprobe_monotone_in_quality(q1, q2, nlist):
    lo, hi = sorted((q1, q2))
    assert 1 <= recall_to_nprobe(lo, nlist, nlist) <= recall_to_nprobe(hi, nlist, nlist) <= nlist


# ------------------------------------------------------------------ edges

def test_edge_cost_examples():
    pool = HardwarePool([Device("a", "gpu", 1, 1, 1, 1), Device("b", "gpu", 1, 1, 1, 1)], 1e10)
    e = Edge("x", "y", 3e9)
    across = Placement({"x": ("a", 1), "y": ("b", 1)}, {"x": 1, "y": 1})
    same = Placement({"x": ("a", 1), "y": ("a", 1)}, {"x": 1, "y": 1})
    assert edge_cost(e, pool, across) == pytest.approx(0.3, rel=1e-15)
    assert edge_cost(e, pool, same) == 0
    assert edge_cost(Edge("x", "y", 0), pool, across) == 0


# --------------------------------------------------------------- estimate

def timed_chain(spec=False, iters=1, out=256):
    """encoder 1 ms, retrieval 2 ms per iteration, llm prefill 100 ms on COMPUTE."""
    nodes = [
        ModelNode("encoder", "encoder", 5e5, 1000, 0),
        RetrievalNode("retrieval", 10**6, 1000, 1, 1.0, Flat(), spec, iters),
        ModelNode("llm", "main-llm", 5e7, 1000, out),
    ]
    edges = [Edge("encoder", "retrieval", 0), Edge("retrieval", "llm", 0)]
    return single(RequestGraph("g", nodes, edges, "encoder", {"llm"}), "chain")


def one_device_placement(ir, dev="c", units=1, batch=1):
    return Placement({n: (dev, units) for n in ir.node_ids()}, {n: batch for n in ir.node_ids()})


UNIT_CTX = CostContext(UNIT)
COMPUTE_POOL = HardwarePool([COMPUTE], 1e10)


def test_ttft_chain_sum():
    ir = timed_chain()
    est = estimate(ir, COMPUTE_POOL, one_device_placement(ir), UNIT_CTX)
    stages = est.per_stage["g"]
    assert stages["encoder"].latency_s == pytest.approx(0.001, rel=1e-12)
    assert stages["retrieval"].latency_s == pytest.approx(0.002, rel=1e-12)
    assert stages["llm"].latency_s == pytest.approx(0.1, rel=1e-12)
    assert est.ttft_s == pytest.approx(0.103, rel=1e-12)


def test_speculative_tpot_difference():
    off = estimate(timed_chain(False, 4), COMPUTE_POOL, one_device_placement(timed_chain()), UNIT_CTX)
    on = estimate(timed_chain(True, 4), COMPUTE_POOL, one_device_placement(timed_chain()), UNIT_CTX)
    assert off.tpot_s - on.tpot_s == pytest.approx(0.008 / 256, rel=1e-9)
    assert on.ttft_s == off.ttft_s
    # overlapped retrieval still occupies its device
    assert on.rps == off.rps


def test_rps_is_min_over_devices():
    # encoder alone on device a (10 req/s), llm+retrieval on b (4 req/s)
    a = Device("a", "cpu", 1e9, 1e18, 1e15, 1.0)
    b = Device("b", "cpu", 1e9, 1e18, 1e15, 3.0)
    pool = HardwarePool([a, b], 1e10)
    nodes = [
        ModelNode("encoder", "encoder", 5e4, 1000, 0),  # 1e8 flops -> 0.1 s
        RetrievalNode("retrieval", 1000, 25, 1, 1.0, Flat()),  # 5e4 flops -> 5e-5 s
        ModelNode("llm", "main-llm", 1e5, 1000, 0),  # 2e8 flops -> 0.2 s
    ]
    ir = single(RequestGraph("g", nodes, [Edge("encoder", "retrieval", 0), Edge("retrieval", "llm", 0)],
                             "encoder", {"llm"}))
    pl = Placement({"encoder": ("a", 1), "retrieval": ("b", 1), "llm": ("b", 1)}, {"encoder": 1, "retrieval": 1, "llm": 1})
    est = estimate(ir, pool, pl, UNIT_CTX)
    assert est.device_rps["a"] == pytest.approx(10, rel=1e-12)
    assert est.device_rps["b"] == pytest.approx(1 / 0.20005, rel=1e-12)
    assert est.rps == min(est.device_rps.values())
    assert est.req_per_dollar * pool_cost(pool, {"a": 1, "b": 1}) == pytest.approx(est.rps * 3600, rel=1e-15)


def test_mixture_weights():
    g1, g2 = chain_graph("a"), chain_graph("b", llm_params=7e8)
    pool = HardwarePool([Device("gpu", "gpu", 1e15, 3e12, 8e10, 2.0)], 1e10)
    mix = RagIr("m", ((g1, 0.25), (g2, 0.75)))
    pl = one_device_placement(mix, "gpu")
    e1 = estimate(single(g1), pool, pl)
    e2 = estimate(single(g2), pool, pl)
    em = estimate(mix, pool, pl)
    assert em.ttft_s == pytest.approx(0.25 * e1.ttft_s + 0.75 * e2.ttft_s, rel=1e-12)
    assert em.tpot_s == pytest.approx(0.25 * e1.tpot_s + 0.75 * e2.tpot_s, rel=1e-12)
    assert e2.rps >= em.rps >= e1.rps


def test_estimate_capacity_error():
    small = HardwarePool([Device("g", "gpu", 1e15, 3e12, 1e9, 2.0)], 1e10)
    ir = single(chain_graph())
    with pytest.raises(PlacementError, match="memory capacity"):
        estimate(ir, small, one_device_placement(ir, "g"))


def test_estimate_rejects_bad_placement():
    ir = single(chain_graph())
    pool = huge_pool()
    with pytest.raises(PlacementError, match="not assigned"):
        estimate(ir, pool, Placement({"llm": ("d0", 1)}, {"llm": 1}))
    pl = Placement({"encoder": ("d0", 1), "retrieval": ("d0", 2), "llm": ("d1", 1)},
                   {"encoder": 1, "retrieval": 1, "llm": 1})
    with pytest.raises(PlacementError, match="share"):
        estimate(ir, pool, pl)
    with pytest.raises(PlacementError, match="3 units"):
        estimate(ir, pool, one_device_placement(ir, "d0", units=3))


# ---------------------------------------------------------- map_resources

def two_node_ir():
    nodes = [RetrievalNode("retrieval", 10**6, 768, 4, 0.9, Flat()),
             ModelNode("llm", "main-llm", 7e9, 832, 64, Arch(32, 4096))]
    return single(RequestGraph("g", nodes, [Edge("retrieval", "llm", 1600)], "retrieval", {"llm"}))


def test_map_resources_four_assignment_oracle(small_pool):
    ir = two_node_ir()
    scored = []
    for dr, dl in itertools.product(("cpu", "gpu"), repeat=2):
        pl = Placement({"retrieval": (dr, 1), "llm": (dl, 1)}, {"retrieval": 1, "llm": 1})
        try:
            scored.append((estimate(ir, small_pool, pl).rps, pl))
        except PlacementError:
            pass
    best = max(scored, key=lambda t: t[0])
    got = map_resources(ir, small_pool, batch_cap=1)
    assert got == best[1]
    assert got.assignment == {"retrieval": ("cpu", 1), "llm": ("gpu", 1)}


def test_map_resources_single_node_batch():
    ir = single(RequestGraph("g", [ModelNode("llm", "main-llm", 7e9, 512, 64, Arch(32, 4096))], [], "llm", {"llm"}))
    pool = HardwarePool([Device("gpu", "gpu", 1e15, 3e12, 8e10, 2.0)], 1e10)
    unconstrained = map_resources(ir, pool)
    ests = {b: estimate(ir, pool, one_device_placement(ir, "gpu", batch=b)) for b in (1, 2, 4, 8)}
    assert unconstrained.batch_size["llm"] == max(ests, key=lambda b: ests[b].rps)
    slo = ests[2].ttft_s
    capped = map_resources(ir, pool, slo_ttft=slo)
    ok = [b for b in ests if ests[b].ttft_s <= slo]
    assert capped.batch_size["llm"] == max(ok, key=lambda b: ests[b].rps)


def test_map_resources_infeasible_memory():
    pool = HardwarePool([Device("gpu", "gpu", 1e15, 3e12, 1e10, 2.0)], 1e10)
    with pytest.raises(InfeasibleError) as exc:
        map_resources(two_node_ir(), pool)
    assert tuple(exc.value.oversized) == ("llm",)


def test_map_resources_slo_unmet_carries_best_effort(small_pool):
    with pytest.raises(InfeasibleError) as exc:
        map_resources(two_node_ir(), small_pool, slo_ttft=1e-9)
    assert exc.value.best_effort is not None


def test_placement_options_counts():
    # 2 nodes, devices of count 1 and 2: brute force over (assignment, units)
    brute = 0
    for combo in itertools.product((1, 2), repeat=2):
        brute += math.prod(combo_c for combo_c in {d: (1 if d == 0 else 2) for d in set(x - 1 for x in combo)}.values())
    assert placement_options(2, [1, 2], 1) == brute
    assert placement_options(3, [1, 1], 4) == (2**3) * 4**3


def brute_best_score(ir, pool, batch_cap, slo):
    best = None
    ids = ir.node_ids()
    dev_ids = pool.device_ids
    bopts = [b for b in (1, 2, 4, 8) if b <= batch_cap]
    for combo in itertools.product(dev_ids, repeat=len(ids)):
        used = sorted(set(combo))
        for ucombo in itertools.product(*(range(1, pool.device(d).count + 1) for d in used)):
            units = dict(zip(used, ucombo))
            for bc in itertools.product(bopts, repeat=len(ids)):
                pl = Placement({n: (d, units[d]) for n, d in zip(ids, combo)}, dict(zip(ids, bc)))
                try:
                    e = estimate(ir, pool, pl)
                except PlacementError:
                    continue
                s = (1, e.rps) if slo is None or e.ttft_s <= slo else (0, -e.ttft_s)
                best = s if best is None or s > best else best
    return best


def score_of(ir, pool, pl, slo):
    e = estimate(ir, pool, pl)
    return (1, e.rps) if slo is None or e.ttft_s <= slo else (0, -e.ttft_s)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exhaustive_matches_brute_and_beats_greedy(seed):
    rng = np.random.default_rng(seed)
    ir = single(random_ir(rng).graphs[0][0])
    pool = huge_pool(2)
    opts = placement_options(len(ir.node_ids()), [2, 2], 2)
    if opts > 1000:
        ir = single(RequestGraph("g", [n for n in ir.graphs[0][0].nodes if n.id in ("retrieval", "llm")],
                                 [Edge("retrieval", "llm", 100)], "retrieval", {"llm"}))
    ex = map_resources(ir, pool, batch_cap=2, method="exhaustive")
    assert score_of(ir, pool, ex, None) == brute_best_score(ir, pool, 2, None)
    gr = map_resources(ir, pool, batch_cap=2, method="greedy")
    assert score_of(ir, pool, gr, None) <= score_of(ir, pool, ex, None)
    estimate(ir, pool, gr)  # feasible


def test_greedy_used_above_limit():
    ir = single(chain_graph())
    pool = HardwarePool([Device(f"g{i}", "gpu", 1e15, 3e12, 8e10, 2.0, 8) for i in range(4)], 1e10)
    assert placement_options(3, [8] * 4, 4) > 10**5
    pl = map_resources(ir, pool)
    est = estimate(ir, pool, pl)
    assert est.rps > 0


# ------------------------------------------------------------- properties

@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roofline_law_all_phases(seed):
    rng = np.random.default_rng(seed)
    ir = random_ir(rng)
    pool = huge_pool(2)
    est = estimate(ir, pool, random_placement(ir, pool, rng))
    for stages in est.per_stage.values():
        for s in stages.values():
            d = pool.device(s.device)
            for c in s.phases.values():
                assert c.time_s * d.efficiency == max(c.flops / d.peak_flops, c.mem_bytes / d.mem_bw) or \
                    c.time_s * d.efficiency == pytest.approx(max(c.flops / d.peak_flops, c.mem_bytes / d.mem_bw),
                                                             rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_zero_reuse_equals_reuse_off(seed):
    rng = np.random.default_rng(seed)
    n = llm(float(rng.integers(1, 100)) * 1e8, int(rng.integers(1, 4096)), int(rng.integers(0, 64)),
            Arch(int(rng.integers(1, 64)), int(rng.integers(64, 8192))))
    on = ModelNode(n.id, n.role, n.params, n.input_len, n.output_len, n.arch, True, 0)
    dev = huge_pool(1).devices[0]
    assert model_prefill_cost(n, dev) == model_prefill_cost(on, dev)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_req_per_dollar_identity(seed):
    rng = np.random.default_rng(seed)
    ir = random_ir(rng)
    pool = huge_pool(2)
    pl = random_placement(ir, pool, rng)
    est = estimate(ir, pool, pl)
    assert est.req_per_dollar * pool_cost(pool, pl.device_units()) == pytest.approx(est.rps * 3600, rel=1e-15)


# ------------------------------------------------------------ run config

def test_run_config_defaults_and_overrides():
    rc = load_run_config('{"schema": "rag-cm/1", "constants": {"efficiency": 0.7}, "slo": {"ttft_s": 0.5}}')
    assert rc.constants.efficiency == 0.7 and rc.slo_ttft == 0.5 and rc.slo_tpot is None
    assert load_run_config('{"schema": "rag-cm/1"}').batch_cap == 8
    with pytest.raises(SchemaError, match="constants.effciency"):
        load_run_config('{"schema": "rag-cm/1", "constants": {"effciency": 0.7}}')
    with pytest.raises(SchemaError, match="schema"):
        load_run_config('{"schema": "rag-cm/2"}')
