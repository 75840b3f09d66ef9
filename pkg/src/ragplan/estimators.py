"""scikit-learn style wrappers so planning composes with pipelines and
``get_params``/``set_params`` tooling.

* :class:`LoweringTransformer` maps configurations to RAG-IRs.
* :class:`CostModel` predicts :class:`PerfEstimate` objects (or a metric
  matrix via ``transform``) for RAG-IRs.
* :class:`PlanExplorer` fits on a :class:`ConfigSpace` and exposes the
  Pareto frontier.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from .costmodel import CostConstants, CostContext, estimate, map_resources
from .explore import EvolutionParams, Evaluation, explore, resolve_strategy
from .hardware import HardwarePool
from .ir import RagIr, validate
from .pareto import ObjectiveSpec, hypervolume
from .quality import SyntheticQuality
from .space import AlgoConfig, ConfigSpace, WorkloadProfile, config_key, lower

METRIC_COLUMNS = ("ttft_s", "tpot_s", "rps", "req_per_dollar")


def check_configs(X):
    X = list(X)
    for i, a in enumerate(X):
        if not isinstance(a, AlgoConfig):
            raise TypeError(f"X[{i}] is {type(a).__name__}, expected AlgoConfig")
        a.validate()
    return X


def check_irs(X):
    if isinstance(X, RagIr):
        X = [X]
    X = list(X)
    for i, ir in enumerate(X):
        if not isinstance(ir, RagIr):
            raise TypeError(f"X[{i}] is {type(ir).__name__}, expected RagIr")
        report = validate(ir)
        if not report.ok:
            raise ValueError(f"X[{i}] is not a valid RAG-IR: " + "; ".join(report.messages()))
    return X


def check_pool(pool):
    if not isinstance(pool, HardwarePool):
        raise TypeError("pool must be a HardwarePool")
    return pool


class LoweringTransformer(TransformerMixin, BaseEstimator):
    def __init__(self, profile=None):
        self.profile = profile

    def fit(self, X=None, y=None):
        self.profile_ = (self.profile or WorkloadProfile()).validate()
        return self

    def transform(self, X):
        check_is_fitted(self, "profile_")
        return [lower(a, self.profile_) for a in check_configs(X)]


class CostModel(BaseEstimator):
    """Roofline performance predictor over a fixed hardware pool.

    With ``placement=None`` each IR is placed by :func:`map_resources`
    before estimation.
    """

    def __init__(self, pool=None, constants=None, calibration=None, recall_table=None, placement=None,
                 slo_ttft=None, slo_tpot=None, batch_cap=8, objective="rps"):
        self.pool = pool
        self.constants = constants
        self.calibration = calibration
        self.recall_table = recall_table
        self.placement = placement
        self.slo_ttft = slo_ttft
        self.slo_tpot = slo_tpot
        self.batch_cap = batch_cap
        self.objective = objective

    def fit(self, X=None, y=None):
        self.pool_ = check_pool(self.pool)
        if self.batch_cap < 1:
            raise ValueError("batch_cap must be >= 1")
        self.ctx_ = CostContext(self.constants or CostConstants(), self.calibration, self.recall_table)
        return self

    def place(self, ir):
        check_is_fitted(self, "ctx_")
        if self.placement is not None:
            return self.placement
        return map_resources(ir, self.pool_, self.ctx_, self.slo_ttft, self.slo_tpot, self.batch_cap, self.objective)

    def predict(self, X):
        check_is_fitted(self, "ctx_")
        return [estimate(ir, self.pool_, self.place(ir), self.ctx_) for ir in check_irs(X)]

    def transform(self, X):
        """``(n, 4)`` array of TTFT, TPOT, RPS and requests per dollar."""
        return np.array([[getattr(p, c) for c in METRIC_COLUMNS] for p in self.predict(X)], dtype=float)

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)


class PlanExplorer(BaseEstimator):
    """Pareto search over a configuration space.

    After ``fit(space)``: ``frontier_`` (a :class:`ParetoSet`), ``trace_``
    and ``n_evaluated_``.
    """

    def __init__(self, pool=None, profile=None, quality=None, strategy="grid", n_iter=50, seed=0,
                 objectives=("quality", "req_per_dollar"), strategy_params=None, cost_model=None):
        self.pool = pool
        self.profile = profile
        self.quality = quality
        self.strategy = strategy
        self.n_iter = n_iter
        self.seed = seed
        self.objectives = objectives
        self.strategy_params = strategy_params
        self.cost_model = cost_model

    def fit(self, X, y=None):
        if not isinstance(X, ConfigSpace):
            raise TypeError("X must be a ConfigSpace")
        spec = ObjectiveSpec.from_names(self.objectives)
        params = self.strategy_params
        if isinstance(params, dict):
            params = EvolutionParams(**params)
        resolve_strategy(self.strategy, params, spec)
        cm = (clone(self.cost_model) if self.cost_model is not None else CostModel(pool=self.pool)).fit()
        evaluation = Evaluation(
            quality=self.quality or SyntheticQuality(self.seed), pool=cm.pool_,
            profile=self.profile or WorkloadProfile(), ctx=cm.ctx_, slo_ttft=cm.slo_ttft,
            slo_tpot=cm.slo_tpot, batch_cap=cm.batch_cap, placement_objective=cm.objective,
        )
        result = explore(X, self.n_iter, self.strategy, evaluation, spec, self.seed, params)
        self.result_ = result
        self.frontier_ = result.frontier
        self.trace_ = result.trace
        self.n_evaluated_ = len(result.trace)
        return self

    def predict(self, X):
        """Boolean array: is each configuration on the fitted frontier?"""
        check_is_fitted(self, "frontier_")
        keys = self.frontier_.keys()
        return np.array([config_key(a) in keys for a in check_configs(X)], dtype=bool)

    def hypervolume(self, ref):
        check_is_fitted(self, "frontier_")
        return hypervolume(self.frontier_, ref)
