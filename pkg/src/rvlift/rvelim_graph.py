"""The rv-elim graph: a labeled DAG recording one variable-elimination run.

Roots are the model's factors. Every internal vertex multiplies its parents
(edge ``i`` is the ``i``-th multiplicand) and eliminates one variable. Marginal
leaves are the vertices whose tables, once normalized, are query marginals.

Internal labels describe how parent scopes overlap: ground variables receive
local ids ``1, 2, ...`` in order of first appearance across the parents, each
parent contributes its scope rendered as ``[id:card, ...]``, and the id of the
eliminated variable closes the label, e.g. ``{[1:2],[2:2,1:2,3:2],1}``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .factor import MAX, SUM, Factor
from .model import Model


class GraphError(ValueError):
    pass


class ConfigurationError(GraphError):
    pass


def root_labels(factors: Sequence[Factor]) -> list[int]:
    """Intern factor contents: equal ids iff the factors are shared."""
    table: dict[tuple, int] = {}
    return [table.setdefault(f.content_key(), len(table)) for f in factors]


def internal_label(
    parent_scopes: Sequence[Sequence[int]],
    eliminated: int | None,
    cardinalities: Sequence[int],
    op: str = SUM,
) -> tuple[str, tuple[int, ...]]:
    """Return ``(label, result_scope)`` for one elimination step.

    ``eliminated=None`` marks a pure product (used only to join the last
    factors of a marginal); its label ends in ``-``.
    """
    if not parent_scopes:
        raise GraphError("internal vertex needs at least one parent")
    ids: dict[int, int] = {}
    parts = []
    for scope in parent_scopes:
        toks = []
        for v in scope:
            i = ids.setdefault(v, len(ids) + 1)
            toks.append(f"{i}:{cardinalities[v]}")
        parts.append("[" + ",".join(toks) + "]")
    if eliminated is None:
        tail = "-"
    else:
        if eliminated not in ids:
            raise GraphError(f"eliminated variable {eliminated} is absent from every parent")
        tail = str(ids[eliminated])
    label = "{" + ",".join(parts) + "," + tail + "}"
    if op == MAX:
        label = "max" + label
    scope = tuple(v for v in ids if v != eliminated)
    return label, scope


def strip_cardinalities(label: str) -> str:
    return re.sub(r":\d+", "", label)


@dataclass(frozen=True)
class RvVertex:
    id: int
    parents: tuple[int, ...] = ()
    eliminated: int | None = None
    op: str = SUM
    factor_index: int | None = None
    query: int | None = None

    @property
    def is_root(self) -> bool:
        return self.factor_index is not None

    @property
    def is_marginal_leaf(self) -> bool:
        return self.query is not None


class RvElimGraph:
    """Immutable rv-elim DAG; vertex ids are a topological order."""

    def __init__(self, model: Model, vertices: Sequence[RvVertex]):
        self.model = model
        self.vertices = tuple(vertices)
        content_ids = root_labels(model.factors)
        self.root_label_ids = {v.id: content_ids[v.factor_index] for v in self.vertices if v.is_root}
        self.max_bucket_size = 0
        depth = []
        for v in self.vertices:
            if v.is_root:
                depth.append(0)
            else:
                if not v.parents or any(p >= v.id for p in v.parents):
                    raise GraphError(f"vertex {v.id} has invalid parents {v.parents}")
                depth.append(1 + max(depth[p] for p in v.parents))
        self.depth = tuple(depth)
        self.leaves = {v.query: v.id for v in self.vertices if v.query is not None}
        self.scopes, self.labels = derive_structure(self, [v.parents for v in self.vertices])

    @property
    def height(self) -> int:
        return max(self.depth)

    @property
    def roots(self) -> list[int]:
        return [v.id for v in self.vertices if v.is_root]

    @property
    def internal(self) -> list[int]:
        return [v.id for v in self.vertices if not v.is_root]

    def __len__(self) -> int:
        return len(self.vertices)

    def root_label(self, vid: int) -> str:
        return f"r{self.root_label_ids[vid]}"

    def factor(self, vid: int) -> Factor:
        return self.model.factors[self.vertices[vid].factor_index]

    def by_depth(self) -> list[list[int]]:
        strata: list[list[int]] = [[] for _ in range(self.height + 1)]
        for v in self.vertices:
            strata[self.depth[v.id]].append(v.id)
        return strata

    def dump(self) -> str:
        """One line per vertex: ``id depth kind label parents(eliminated)``."""
        lines = []
        for v in self.vertices:
            if v.is_root:
                lines.append(f"{v.id} 0 root {self.labels[v.id]} -(-)")
            else:
                kind = "leaf" if v.is_marginal_leaf else "internal"
                elim = "-" if v.eliminated is None else v.eliminated
                plist = ",".join(str(p) for p in v.parents)
                lines.append(f"{v.id} {self.depth[v.id]} {kind} {self.labels[v.id]} {plist}({elim})")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_operations(
        cls,
        model: Model,
        operations: Iterable[tuple[Sequence[int], int | None]],
        leaves: dict[int, int] | None = None,
    ) -> "RvElimGraph":
        """Hand-assemble a graph: roots are the model's factors, then one
        internal vertex per ``(parents, eliminated)`` entry; ``leaves`` maps
        query variables to vertex ids."""
        leaves = leaves or {}
        owner = {vid: q for q, vid in leaves.items()}
        verts = [RvVertex(i, factor_index=i, query=owner.get(i)) for i in range(len(model.factors))]
        for parents, elim in operations:
            i = len(verts)
            verts.append(RvVertex(i, tuple(parents), elim, SUM, query=owner.get(i)))
        return cls(model, verts)


def derive_structure(
    graph: RvElimGraph, parent_order: Sequence[Sequence[int]]
) -> tuple[list[tuple[int, ...]], list[str]]:
    """Scopes and labels of every vertex when parents are multiplied in ``parent_order``."""
    cards = graph.model.cardinalities
    scopes: list[tuple[int, ...]] = []
    labels: list[str] = []
    for v in graph.vertices:
        if v.is_root:
            scopes.append(graph.factor(v.id).scope)
            labels.append(graph.root_label(v.id))
        else:
            label, scope = internal_label([scopes[p] for p in parent_order[v.id]], v.eliminated, cards, v.op)
            scopes.append(scope)
            labels.append(label)
    return scopes, labels


# ---------------------------------------------------------------------------
# construction


class _Builder:
    def __init__(self, model: Model, queries: Sequence[int]):
        self.model = model
        self.cards = model.cardinalities
        self.queries = list(queries)
        self.qset = set(queries)
        self.vertices: list[RvVertex] = [
            RvVertex(i, factor_index=i) for i in range(len(model.factors))
        ]
        self.scopes: list[frozenset[int]] = [frozenset(f.scope) for f in model.factors]
        self.cache: dict[tuple, int] = {}
        self.pool: list[int] = list(range(len(model.factors)))
        self.max_bucket = 0

    def add(self, parents: Sequence[int], eliminated: int | None, op: str = SUM) -> int:
        parents = tuple(parents)
        key = (parents, eliminated, op)
        if key in self.cache:
            return self.cache[key]
        vid = len(self.vertices)
        self.vertices.append(RvVertex(vid, parents, eliminated, op))
        scope = frozenset().union(*(self.scopes[p] for p in parents))
        self.scopes.append(scope - {eliminated})
        self.cache[key] = vid
        return vid

    def bucket(self, pool: Sequence[int], var: int) -> list[int]:
        return [u for u in pool if var in self.scopes[u]]

    def union(self, members: Iterable[int]) -> frozenset[int]:
        return frozenset().union(*(self.scopes[u] for u in members))

    def eliminate_main(self, order: Sequence[int], split=None) -> None:
        for var in order:
            bucket = self.bucket(self.pool, var)
            if not bucket:
                continue
            union = self.union(bucket)
            if len(union & self.qset) >= 2:
                # deferred to per-query finishing: keeps query variables apart
                continue
            self.max_bucket = max(self.max_bucket, len(union))
            groups = [bucket] if split is None else split(bucket, var)
            made = []
            for k, group in enumerate(groups):
                made.append(self.add(sorted(group), var, SUM if k == 0 else MAX))
            drop = set(bucket)
            self.pool = sorted([u for u in self.pool if u not in drop] + made)

    def finish(self) -> dict[int, int]:
        leaves: dict[int, int] = {}
        for q in self.queries:
            local = list(self.pool)
            while True:
                rest = self.union(local) - {q}
                if not rest:
                    break
                best = None
                for w in sorted(rest):
                    size = math.prod(self.cards[x] for x in self.union(self.bucket(local, w)))
                    if best is None or size < best[0]:
                        best = (size, w)
                w = best[1]
                bucket = self.bucket(local, w)
                vid = self.add(bucket, w)
                drop = set(bucket)
                local = sorted({u for u in local if u not in drop} | {vid})
            if len(local) == 1 and self.scopes[local[0]] == {q}:
                leaves[q] = local[0]
            else:
                leaves[q] = self.add(local, None)
        return leaves

    def graph(self, leaves: dict[int, int]) -> RvElimGraph:
        owner = {vid: q for q, vid in leaves.items()}
        verts = [
            RvVertex(v.id, v.parents, v.eliminated, v.op, v.factor_index, owner.get(v.id))
            for v in self.vertices
        ]
        g = RvElimGraph(self.model, verts)
        g.max_bucket_size = self.max_bucket
        return g


def _check_inputs(model: Model, order: Sequence[int], queries: Sequence[int]) -> None:
    qset = set(queries)
    if len(qset) != len(queries):
        raise ConfigurationError("duplicate query variable")
    for q in queries:
        if not 0 <= q < model.num_variables or q in model.evidence:
            raise ConfigurationError(f"query variable {q} is unknown or observed")
    if len(set(order)) != len(order):
        raise ConfigurationError("elimination order repeats a variable")
    for v in order:
        if v in qset:
            raise ConfigurationError(f"elimination order mentions query variable {v}")
    eliminable = set(model.variables) - qset
    if set(order) != eliminable:
        missing = sorted(eliminable - set(order))
        extra = sorted(set(order) - eliminable)
        raise ConfigurationError(f"order must cover the eliminable variables (missing {missing}, extra {extra})")


def build(model: Model, order: Sequence[int], queries: Sequence[int]) -> RvElimGraph:
    """Rv-elim graph of one-pass variable elimination producing every query marginal.

    Variables are eliminated in ``order``; a variable whose bucket would join two
    or more query variables is left to the per-query finishing step, which
    eliminates everything but the query from the remaining pool (greedy
    min-size, ties by variable id), reusing identical operations across queries.
    """
    _check_inputs(model, order, queries)
    b = _Builder(model, queries)
    b.eliminate_main(order)
    return b.graph(b.finish())


def canonical_partition(scopes: Sequence[frozenset[int]], members: Sequence[int]) -> list[list[int]]:
    """Group ``members`` so that each joins the first bucket whose head scope contains its own.

    Members are visited by descending arity (stable in pool order); the first
    member of each bucket is its head.
    """
    buckets: list[tuple[frozenset[int], list[int]]] = []
    for u in sorted(members, key=lambda u: -len(scopes[u])):
        for head, group in buckets:
            if scopes[u] <= head:
                group.append(u)
                break
        else:
            buckets.append((scopes[u], [u]))
    return [group for _, group in buckets]


def parse_minibucket_mode(text: str) -> tuple[str, float] | None:
    """``off`` -> None, ``args:<i>`` or ``merge:<m>`` (``m`` may be ``inf``)."""
    text = text.strip().lower()
    if text in ("off", "none", ""):
        return None
    kind, _, val = text.partition(":")
    if kind not in ("args", "merge") or not val:
        raise ConfigurationError(f"bad mini-bucket mode {text!r}")
    num = math.inf if val in ("inf", "infinity") else int(val)
    if num < 1:
        raise ConfigurationError("mini-bucket restriction must be positive")
    return kind, num


def build_minibucket(
    model: Model, order: Sequence[int], queries: Sequence[int], mode: tuple[str, float]
) -> RvElimGraph:
    """Rv-elim graph of mini-bucket elimination.

    ``mode`` is ``("args", i)`` to cap each mini-bucket's joint scope at ``i``
    variables, or ``("merge", m)`` to join every ``m`` consecutive canonical
    buckets. The first mini-bucket of a variable sums it out, the others take
    the max, so leaf tables bound the exact ones from above.
    """
    _check_inputs(model, order, queries)
    kind, limit = mode
    if kind == "args":
        arity = max(len(f.scope) for f in model.factors)
        if limit < arity:
            raise ConfigurationError(f"argument restriction {limit} below largest factor arity {arity}")
    elif kind != "merge":
        raise ConfigurationError(f"unknown mini-bucket mode {kind!r}")
    if limit < 1:
        raise ConfigurationError("mini-bucket restriction must be positive")

    b = _Builder(model, queries)

    def split(bucket: list[int], var: int) -> list[list[int]]:
        canon = canonical_partition(b.scopes, bucket)
        if kind == "merge":
            step = len(canon) if math.isinf(limit) else int(limit)
            return [sum(canon[i : i + step], []) for i in range(0, len(canon), step)]
        packed: list[tuple[set[int], list[int]]] = []
        for group in canon:
            scope = set(b.union(group))
            for mb_scope, mb in packed:
                if len(mb_scope | scope) <= limit:
                    mb_scope |= scope
                    mb.extend(group)
                    break
            else:
                packed.append((scope, list(group)))
        return [mb for _, mb in packed]

    b.eliminate_main(order, split)
    return b.graph(b.finish())


def max_bucket_size(model: Model, order: Sequence[int], queries: Sequence[int]) -> int:
    """Largest joint scope (eliminated variable included) of an exact main-phase bucket."""
    return build(model, order, queries).max_bucket_size
