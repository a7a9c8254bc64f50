"""Compressed rv-elim graphs, their evaluation, baselines and error metrics."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .elim_order import elimination_order
from .factor import Factor, OpCounter, eliminate, product
from .model import Model, apply_evidence
from .partition import (
    Partition,
    approx_bisimulation,
    exact_bisimulation,
    factor_binning_bisimulation,
    identity_partition,
)
from .rvelim_graph import RvElimGraph, build, build_minibucket

INCORRECT_THRESHOLD = 1e-8


class EngineError(RuntimeError):
    """Failure inside one pipeline stage; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class StructuralError(ValueError):
    pass


class CorruptedPartitionError(ValueError):
    pass


@dataclass
class CompressedNode:
    block: int
    representative: int
    parents: list[int]
    eliminated: int | None
    op: str
    depth: int


@dataclass
class CompressedGraph:
    graph: RvElimGraph
    partition: Partition
    nodes: list[CompressedNode]
    order: list[int]
    leaves: dict[int, int]
    dropped_edges: list[tuple[int, int, int]] = field(default_factory=list)

    def edges(self) -> set[tuple[int, int, int]]:
        """``(parent_block, child_block, edge_index)`` with 1-based edge indices."""
        return {(p, n.block, i + 1) for n in self.nodes for i, p in enumerate(n.parents)}


def compress(graph: RvElimGraph, partition: Partition) -> CompressedGraph:
    """One node per block; conflicting parent blocks on an edge index keep the largest.

    Ties between equally large candidate blocks go to the smaller block id.
    Each dropped edge is recorded as ``(parent_block, child_block, edge_index)``.
    """
    sizes = partition.sizes()
    nodes = []
    dropped = []
    for b, members in enumerate(partition.blocks):
        rep = members[0]
        vert = graph.vertices[rep]
        arity = len(partition.parent_order[rep])
        parents = []
        for i in range(arity):
            cands = sorted({partition.block_of[partition.parent_order[m][i]]
                            for m in members if len(partition.parent_order[m]) > i})
            if not cands:
                raise StructuralError(f"block {b} has no parent on edge {i + 1}")
            keep = min(cands, key=lambda c: (-sizes[c], c))
            parents.append(keep)
            dropped.extend((c, b, i + 1) for c in cands if c != keep)
        nodes.append(CompressedNode(b, rep, parents, vert.eliminated, vert.op, graph.depth[rep]))
    order = sorted(range(len(nodes)), key=lambda b: (nodes[b].depth, b))
    leaves = {q: partition.block_of[v] for q, v in graph.leaves.items()}
    return CompressedGraph(graph, partition, nodes, order, leaves, dropped)


@dataclass
class InferenceResult:
    marginals: dict[int, np.ndarray]
    unnormalized: dict[int, np.ndarray]
    Z: float | None
    stats: dict
    graph: RvElimGraph | None = None
    partition: Partition | None = None
    compressed: CompressedGraph | None = None


def evaluate(cg: CompressedGraph, model: Model | None = None, counter: OpCounter | None = None) -> InferenceResult:
    """Compute one table per compressed node bottom-up and read off every marginal."""
    graph, part = cg.graph, cg.partition
    model = model or graph.model
    cards = model.cardinalities
    counter = counter if counter is not None else OpCounter()
    pre = part.block_factors or {}
    tables: dict[int, Factor] = {}
    computed = 0
    for b in cg.order:
        node = cg.nodes[b]
        if b in pre:
            tables[b] = pre[b]
            continue
        vert = graph.vertices[node.representative]
        if vert.is_root:
            tables[b] = graph.factor(node.representative)
            continue
        operands = []
        for i, p in enumerate(part.parent_order[node.representative]):
            src = tables[node.parents[i]]
            want = tuple(cards[x] for x in part.scopes[p])
            if src.shape != want:
                raise CorruptedPartitionError(
                    f"node {b}, edge {i + 1}: table shape {src.shape} cannot stand in for {want}"
                )
            operands.append(src.relabel(part.scopes[p]))
        f = product(operands, counter)
        if node.eliminated is not None:
            f = eliminate(f, node.eliminated, node.op, counter)
        tables[b] = f
        computed += 1
    if pre:
        computed = getattr(part, "materialized", computed)
    marg, unnorm = {}, {}
    for q, vid in graph.leaves.items():
        t = tables[cg.leaves[q]]
        if t.shape != (cards[q],):
            raise CorruptedPartitionError(f"leaf table for variable {q} has shape {t.shape}")
        raw = np.array(t.flat)
        unnorm[q] = raw
        marg[q] = raw / raw.sum()
    stats = {
        "mults": counter.mults,
        "adds": counter.adds,
        "intermediate_factors": computed,
        "blocks": part.num_blocks,
        "vertices": len(graph),
    }
    first = next(iter(graph.leaves), None)
    z = float(unnorm[first].sum()) if first is not None else None
    return InferenceResult(marg, unnorm, z, stats, graph, part, cg)


def ground_evaluate(graph: RvElimGraph, model: Model | None = None) -> InferenceResult:
    """Plain one-pass variable elimination: every vertex computed on its own."""
    return evaluate(compress(graph, identity_partition(graph)), model)


def brute_force_marginals(
    model: Model, queries: Sequence[int], normalized: bool = True, limit: int = 1 << 24
) -> dict[int, np.ndarray]:
    """Enumerate the joint table of all unobserved variables and marginalize."""
    variables = model.variables
    size = model.joint_size()
    if size > limit:
        raise ValueError(f"joint state space {size} exceeds brute-force limit {limit}")
    axis = {v: i for i, v in enumerate(variables)}
    shape = tuple(model.cardinalities[v] for v in variables)
    joint = np.ones(shape)
    for f in model.factors:
        perm = sorted(range(len(f.scope)), key=lambda a: axis[f.scope[a]])
        arr = np.transpose(f.values, perm) if f.scope else f.values
        view = [1] * len(shape)
        for a in perm:
            view[axis[f.scope[a]]] = f.shape[a]
        joint = joint * np.reshape(arr, view)
    out = {}
    for q in queries:
        others = tuple(i for i in range(len(shape)) if i != axis[q])
        m = joint.sum(axis=others)
        out[q] = m / m.sum() if normalized else m
    return out


@dataclass
class ErrorReport:
    incorrect: int
    total: int
    fraction: float
    max_abs_error: float


def compare(result: Mapping[int, np.ndarray], reference: Mapping[int, np.ndarray],
            threshold: float = INCORRECT_THRESHOLD) -> ErrorReport:
    """Count stored marginal entries farther than ``threshold`` from the reference."""
    if isinstance(result, InferenceResult):
        result = result.marginals
    if isinstance(reference, InferenceResult):
        reference = reference.marginals
    if set(result) != set(reference):
        raise ValueError("result and reference answer different query sets")
    bad = total = 0
    worst = 0.0
    for q in reference:
        a = np.asarray(result[q], dtype=float)
        b = np.asarray(reference[q], dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"marginal of variable {q} has shape {a.shape}, reference {b.shape}")
        diff = np.abs(a - b)
        bad += int(np.count_nonzero(diff > threshold))
        total += diff.size
        if diff.size:
            worst = max(worst, float(diff.max()))
    return ErrorReport(bad, total, bad / total if total else 0.0, worst)


@dataclass
class EngineParams:
    use_bisimulation: bool = True
    path_length: float = math.inf
    epsilon: float = 0.0
    use_minibuckets: bool = False
    arg_count_restriction: bool = True
    minibucket_restriction: float = math.inf

    def validate(self) -> None:
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.epsilon > 0 and not self.use_bisimulation:
            raise ValueError("factor binning (epsilon > 0) requires bisimulation")
        if self.epsilon > 0 and not math.isinf(self.path_length):
            raise ValueError("factor binning runs on exact bisimulation; use path length inf with epsilon > 0")
        if self.path_length < 0:
            raise ValueError("path length must be non-negative")
        if self.use_minibuckets and self.minibucket_restriction < 1:
            raise ValueError("mini-bucket restriction must be at least 1")

    @property
    def exact(self) -> bool:
        return not self.use_minibuckets and (
            not self.use_bisimulation or (math.isinf(self.path_length) and self.epsilon == 0)
        )

    def minibucket_mode(self) -> tuple[str, float] | None:
        if not self.use_minibuckets:
            return None
        return ("args" if self.arg_count_restriction else "merge", self.minibucket_restriction)

    def as_dict(self) -> dict:
        d = asdict(self)
        for k in ("path_length", "minibucket_restriction"):
            if math.isinf(d[k]):
                d[k] = "inf"
        return d


def run(
    model: Model,
    queries: Sequence[int],
    evidence: Mapping[int, int] | None = None,
    params: EngineParams | None = None,
    order: Sequence[int] | None = None,
) -> InferenceResult:
    """Full pipeline: evidence, order, graph, partition, compression, evaluation."""
    params = params or EngineParams()
    try:
        params.validate()
    except ValueError as e:
        raise EngineError("config", str(e)) from e
    t0 = time.perf_counter()
    counter = OpCounter()
    try:
        m = apply_evidence(model, evidence or {}, queries)
    except ValueError as e:
        raise EngineError("parse", str(e)) from e
    try:
        if order is None:
            order = elimination_order(m, queries)
    except ValueError as e:
        raise EngineError("order", str(e)) from e
    try:
        mode = params.minibucket_mode()
        g = build(m, order, queries) if mode is None else build_minibucket(m, order, queries, mode)
    except ValueError as e:
        raise EngineError("build", str(e)) from e
    try:
        if not params.use_bisimulation:
            part = identity_partition(g)
        elif params.epsilon > 0:
            part = factor_binning_bisimulation(g, params.epsilon, counter=counter)
        elif math.isinf(params.path_length):
            part = exact_bisimulation(g)
        else:
            part = approx_bisimulation(g, params.path_length)
        cg = compress(g, part)
    except ValueError as e:
        raise EngineError("partition", str(e)) from e
    try:
        res = evaluate(cg, m, counter)
    except ValueError as e:
        raise EngineError("evaluate", str(e)) from e
    res.stats["wall_ms"] = (time.perf_counter() - t0) * 1000.0
    res.stats.update(params.as_dict())
    if not params.exact:
        res.Z = None
    return res
