"""Plan RAG serving configurations: RAG-IR workloads, a roofline cost
model, and Pareto exploration of quality against performance."""
from .costmodel import (
    CostConstants,
    CostContext,
    NodeCost,
    PerfEstimate,
    Placement,
    edge_cost,
    estimate,
    map_resources,
    model_decode_cost,
    model_prefill_cost,
    recall_to_nprobe,
    retrieval_cost,
    roofline,
)
from .estimators import CostModel, LoweringTransformer, PlanExplorer
from .explore import EvolutionParams, Evaluation, explore, get_next_evolutionary, get_next_grid, get_next_random
from .hardware import Device, HardwarePool, load_pool, pool_cost
from .ir import (
    Arch,
    Calibrated,
    Edge,
    Flat,
    Ivf,
    ModelNode,
    RagIr,
    RequestGraph,
    RetrievalNode,
    critical_paths,
    deserialize,
    serialize,
    validate,
)
from .pareto import ObjectiveSpec, ParetoSet, dominates, frontier_update, hypervolume
from .quality import QualityScore, QualityTable, SyntheticQuality, eval_synthetic, eval_table
from .space import (
    AlgoConfig,
    ConfigSpace,
    EmbeddingModel,
    MainLlm,
    Reranker,
    Rewriter,
    WorkloadProfile,
    change_cost,
    config_key,
    enumerate_space,
    lower,
)

__version__ = "0.1.0"
