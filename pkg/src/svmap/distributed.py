"""Iterative partition-parallel SVM training with global support-vector exchange.

Every iteration runs one map task per partition (train on the partition
merged with the current global SV set), then a reduce step that unions the
resulting support vectors into the global set and picks the node hypothesis
with the lowest empirical hinge risk on the whole training set.  The loop
ends when that risk stops changing.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .dataset import Dataset, PartitionSet, stratified_partition
from .metrics import empirical_risk
from .solver import SvmModel, TrainConfig, TrainingError, extract_svs, train_svm, warm_alphas

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GlobalSvStore:
    """The global support-vector set after ``iteration`` reduce steps."""

    svs: Dataset
    iteration: int = 0

    @classmethod
    def empty(cls, dim: int) -> GlobalSvStore:
        return cls(Dataset(np.zeros((0, dim)), np.zeros(0, dtype=np.int64)), 0)

    @property
    def ids(self) -> frozenset[int]:
        return frozenset(int(i) for i in self.svs.ids)

    def __len__(self) -> int:
        return self.svs.n


@dataclass(frozen=True)
class DistributedConfig:
    L: int = 10
    train: TrainConfig = field(default_factory=TrainConfig)
    conv_tol: float = 1e-6
    max_iterations: int = 10
    seed: int = 0
    workers: int = 1
    # "select": lowest-risk node hypothesis; "retrain": one SVM on the final global SV set.
    final: str = "select"
    # Seed each node's solver with its previous coefficients from iteration 2 on.
    warm_start: bool = True

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.conv_tol < 0:
            raise ValueError(f"conv_tol must be >= 0, got {self.conv_tol}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.final not in ("select", "retrain"):
            raise ValueError(f"final must be 'select' or 'retrain', got {self.final!r}")


@dataclass(frozen=True, eq=False)
class MapResult:
    model: SvmModel | None
    svs: Dataset
    train_size: int

    @property
    def skipped(self) -> bool:
        return self.model is None


@dataclass(eq=False)
class IterationRecord:
    t: int
    per_node_sv_counts: list[int]
    global_sv_count: int
    best_risk: float
    best_node: int
    node_risks: list[float | None]
    node_objectives: list[float | None]
    node_train_sizes: list[int]
    skipped_nodes: list[int]
    map_time: float
    reduce_time: float
    global_sv_ids: tuple[int, ...] = ()
    model: SvmModel | None = None

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "per_node_sv_counts": self.per_node_sv_counts,
            "global_sv_count": self.global_sv_count,
            "best_risk": self.best_risk,
            "best_node": self.best_node,
            "node_risks": self.node_risks,
            "node_objectives": self.node_objectives,
            "node_train_sizes": self.node_train_sizes,
            "skipped_nodes": self.skipped_nodes,
            "map_time_s": self.map_time,
            "reduce_time_s": self.reduce_time,
        }


@dataclass(eq=False)
class DistributedResult:
    model: SvmModel
    history: list[IterationRecord]
    stop_reason: str  # "risk", "sv_fixed_point" or "max_iterations"

    @property
    def converged(self) -> bool:
        return self.stop_reason != "max_iterations"

    @property
    def iterations(self) -> int:
        return len(self.history)

    def __iter__(self) -> Iterator:
        return iter((self.model, self.history))

    def risk_increases(self) -> list[int]:
        """Iterations whose selected risk rose above the previous one.

        Risk is expected to fall or hold across iterations, but nothing
        guarantees it on arbitrary data, so violations are reported here
        instead of raised.
        """
        h = self.history
        return [h[i].t for i in range(1, len(h)) if h[i].best_risk > h[i - 1].best_risk]


class Selection(NamedTuple):
    model: SvmModel
    risk: float
    node: int
    risks: list[float | None]


# ------------------------------------------------------------------- phases


def merge_training_set(partition: Dataset, store: GlobalSvStore) -> Dataset:
    """Partition samples followed by the store's SVs not already in it."""
    if len(store) == 0:
        return partition
    extra = ~np.isin(store.svs.ids, partition.ids)
    if not extra.any():
        return partition
    return partition.concat(store.svs.subset(np.flatnonzero(extra)))


def map_task(partition: Dataset, store: GlobalSvStore, config: TrainConfig,
             warm: SvmModel | None = None) -> MapResult:
    """Train on the partition merged with the global SVs.

    ``warm`` (the node's previous model) seeds the solver; its training set
    is a subset of the merged one, so its coefficients stay feasible.  A
    merged set holding a single class cannot be trained on; the node then
    reports a skip and contributes no support vectors.
    """
    merged = merge_training_set(partition, store)
    try:
        init = None if warm is None else warm_alphas(merged, warm)
        model = train_svm(merged, config, init)
    except TrainingError as exc:
        logger.info("map task skipped: %s", exc)
        return MapResult(None, store.svs.subset([]), merged.n)
    return MapResult(model, extract_svs(model), merged.n)


def reduce_merge(store: GlobalSvStore, sv_lists: Sequence[Dataset]) -> GlobalSvStore:
    """Union of the store and every node's SVs, deduplicated by sample id.

    New ids are appended in node order, so the result is deterministic.
    """
    seen = set(int(i) for i in store.svs.ids)
    parts = [store.svs]
    for svs in sv_lists:
        fresh = []
        for k, sid in enumerate(svs.ids):
            sid = int(sid)
            if sid not in seen:
                seen.add(sid)
                fresh.append(k)
        if fresh:
            parts.append(svs.subset(fresh))
    merged = parts[0]
    for p in parts[1:]:
        merged = merged.concat(p)
    return GlobalSvStore(merged, store.iteration + 1)


def select_hypothesis(models: Sequence[SvmModel | None], full_training_set: Dataset) -> Selection:
    """Node model with minimal empirical hinge risk; ties go to the lowest index."""
    risks: list[float | None] = []
    best = None
    for node, model in enumerate(models):
        if model is None:
            risks.append(None)
            continue
        r = empirical_risk(model, full_training_set)
        risks.append(r)
        if best is None or r < best[1]:
            best = (node, r)
    if best is None:
        raise TrainingError("every node skipped this iteration")
    node, risk = best
    return Selection(models[node], risk, node, risks)


def _pool(workers: int) -> ProcessPoolExecutor:
    ctx = multiprocessing.get_context("fork") if "fork" in multiprocessing.get_all_start_methods() else None
    return ProcessPoolExecutor(max_workers=workers, mp_context=ctx)


def run_map_phase(
    partitions: PartitionSet | Sequence[Dataset],
    store: GlobalSvStore,
    config: TrainConfig,
    workers: int = 1,
    executor: Executor | None = None,
    warm: Sequence[SvmModel | None] | None = None,
) -> list[MapResult]:
    """Run every map task against the same frozen store.

    Results come back in node order and are identical to a sequential run;
    any failing task fails the whole phase.
    """
    parts = partitions.partitions if isinstance(partitions, PartitionSet) else list(partitions)
    warm = list(warm) if warm is not None else [None] * len(parts)
    if executor is None and workers <= 1:
        return [map_task(p, store, config, w) for p, w in zip(parts, warm)]
    own = executor is None
    pool = _pool(workers) if own else executor
    try:
        futures = [pool.submit(map_task, p, store, config, w) for p, w in zip(parts, warm)]
        return [f.result() for f in futures]
    finally:
        if own:
            pool.shutdown()


# --------------------------------------------------------------------- loop


def train_distributed(
    dataset: Dataset,
    config: DistributedConfig,
    executor: Executor | None = None,
) -> DistributedResult:
    """Iterate map / reduce / select until the selected risk stabilizes.

    Stops when |R(h_t) - R(h_{t-1})| <= ``conv_tol``, when two consecutive
    reduce steps add no new support vector, or at ``max_iterations``.  Nodes
    whose merged training set did not change reuse their previous result.
    Each history record keeps that iteration's selected model so that
    callers can evaluate intermediate hypotheses.
    """
    y = dataset.require_labels()
    if dataset.n == 0 or np.all(y == y[0]):
        raise TrainingError("training set must contain both classes")
    partitions = stratified_partition(dataset, config.L, config.seed)
    store = GlobalSvStore.empty(dataset.dim)
    history: list[IterationRecord] = []
    # Per node: ids of the last merged training set and the result it gave.
    memo: list[tuple[bytes, MapResult] | None] = [None] * config.L
    own_pool = executor is None and config.workers > 1 and config.L > 1
    pool = _pool(config.workers) if own_pool else executor
    stop_reason = "max_iterations"
    was_unchanged = False
    try:
        for t in range(1, config.max_iterations + 1):
            t0 = time.perf_counter()
            keys = []
            todo = []
            for l, part in enumerate(partitions.partitions):
                key = merge_training_set(part, store).ids.tobytes()
                keys.append(key)
                if memo[l] is None or memo[l][0] != key:
                    todo.append(l)
            warm = None
            if config.warm_start:
                warm = [memo[l][1].model if memo[l] is not None else None for l in todo]
            fresh = run_map_phase([partitions.partitions[l] for l in todo], store, config.train,
                                  executor=pool, warm=warm)
            for l, res in zip(todo, fresh):
                memo[l] = (keys[l], res)
            results = [memo[l][1] for l in range(config.L)]
            t1 = time.perf_counter()

            new_store = reduce_merge(store, [r.svs for r in results])
            sel = select_hypothesis([r.model for r in results], dataset)
            t2 = time.perf_counter()

            record = IterationRecord(
                t=t,
                per_node_sv_counts=[r.svs.n for r in results],
                global_sv_count=len(new_store),
                best_risk=sel.risk,
                best_node=sel.node,
                node_risks=sel.risks,
                node_objectives=[None if r.model is None else r.model.objective for r in results],
                node_train_sizes=[r.train_size for r in results],
                skipped_nodes=[l for l, r in enumerate(results) if r.skipped],
                map_time=t1 - t0,
                reduce_time=t2 - t1,
                global_sv_ids=tuple(int(i) for i in new_store.svs.ids),
                model=sel.model,
            )
            history.append(record)
            logger.info(
                "t=%d risk=%.6g node=%d global_svs=%d map=%.3fs reduce=%.3fs (%d/%d trained)",
                t, sel.risk, sel.node, len(new_store), record.map_time, record.reduce_time,
                len(todo), config.L,
            )
            unchanged = len(new_store) == len(store)
            store = new_store
            if t > 1 and abs(history[-1].best_risk - history[-2].best_risk) <= config.conv_tol:
                stop_reason = "risk"
                break
            # Backstop: the SV set went a full iteration without growing.
            if unchanged and was_unchanged:
                stop_reason = "sv_fixed_point"
                break
            was_unchanged = unchanged
    finally:
        if own_pool:
            pool.shutdown()

    rises = DistributedResult(history[-1].model, history, stop_reason).risk_increases()
    if rises:
        logger.info("selected risk rose at iterations %s", rises)
    final = history[-1].model
    if config.final == "retrain":
        final = train_svm(store.svs, config.train)
    return DistributedResult(final, history, stop_reason)


# ----------------------------------------------------------------- emitters


def history_jsonl(history: Sequence[IterationRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in history)


def history_csv(history: Sequence[IterationRecord]) -> str:
    """Per-iteration table: mean node risk, mean +/- sample std (floored at
    0) and the global SV count."""
    rows = ["iter,loss_mean,loss_mean_plus_sigma,loss_mean_minus_sigma,sv_count"]
    for r in history:
        risks = np.array([x for x in r.node_risks if x is not None])
        mu = float(risks.mean())
        sd = float(risks.std(ddof=1)) if risks.size > 1 else 0.0
        rows.append(f"{r.t},{mu:.6f},{mu + sd:.6f},{max(mu - sd, 0.0):.6f},{r.global_sv_count}")
    return "\n".join(rows) + "\n"
