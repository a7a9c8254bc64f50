"""Elimination orders built from the model's own symmetry.

The variable-interaction graph is compressed by bisimulation (variables with
the same cardinality, the same shared factors at the same scope positions and
the same multiset of neighbor blocks end up together), a min-size heuristic
orders the compressed blocks, and each block expands back into its ground
variables. Same-block variables are therefore eliminated contiguously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .model import Model
from .rvelim_graph import root_labels


@dataclass
class InteractionGraph:
    variables: list[int]
    adjacency: dict[int, set[int]]
    colors: dict[int, tuple]
    queries: frozenset[int] = field(default_factory=frozenset)


def interaction_graph(model: Model, queries: Sequence[int] = ()) -> InteractionGraph:
    qset = frozenset(queries)
    labels = root_labels(model.factors)
    variables = model.variables
    adjacency: dict[int, set[int]] = {v: set() for v in variables}
    incidence: dict[int, list[tuple[int, int]]] = {v: [] for v in variables}
    for f, lab in zip(model.factors, labels):
        for pos, v in enumerate(f.scope):
            incidence[v].append((lab, pos))
            adjacency[v].update(u for u in f.scope if u != v)
    colors = {
        v: (v in qset, model.cardinalities[v], tuple(sorted(incidence[v])))
        for v in variables
    }
    return InteractionGraph(variables, adjacency, colors, qset)


def model_bisimulation(g: InteractionGraph) -> list[list[int]]:
    """Coarsest stable refinement of the coloring; blocks sorted by smallest member."""
    block = {}
    ids: dict = {}
    for v in g.variables:
        block[v] = ids.setdefault(g.colors[v], len(ids))
    count = len(ids)
    while True:
        ids = {}
        new = {}
        for v in g.variables:
            sig = (block[v], tuple(sorted(block[u] for u in g.adjacency[v])))
            new[v] = ids.setdefault(sig, len(ids))
        block = new
        if len(ids) == count:
            break
        count = len(ids)
    groups: dict[int, list[int]] = {}
    for v in g.variables:
        groups.setdefault(block[v], []).append(v)
    return sorted((sorted(m) for m in groups.values()), key=lambda m: m[0])


@dataclass
class CompressedInteractionGraph:
    blocks: list[list[int]]
    cardinality: list[int]
    adjacency: list[set[int]]
    eliminable: list[bool]
    ground_adjacency: dict[int, set[int]] | None = None
    ground_cardinality: dict[int, int] | None = None


def compress_interaction_graph(g: InteractionGraph, model: Model, blocks: list[list[int]]) -> CompressedInteractionGraph:
    where = {v: b for b, members in enumerate(blocks) for v in members}
    adj = [set() for _ in blocks]
    for v, nbrs in g.adjacency.items():
        for u in nbrs:
            if where[u] != where[v]:
                adj[where[v]].add(where[u])
    return CompressedInteractionGraph(
        [list(m) for m in blocks],
        [model.cardinalities[m[0]] for m in blocks],
        adj,
        [m[0] not in g.queries for m in blocks],
        {v: set(n) for v, n in g.adjacency.items()},
        {v: model.cardinalities[v] for v in g.variables},
    )


def min_size_order(cg: CompressedInteractionGraph) -> list[int]:
    """Greedy block order by elimination state-space size.

    The cost of a block is the summed state space of eliminating each member:
    its own domain times the domains of its current neighbors. Members of the
    chosen block are then eliminated one by one, connecting their neighbors.
    Ties go to the smallest block id; query blocks are never chosen. Without
    ground adjacency the block graph is used, with every member of a neighbor
    block counted as a neighbor.
    """
    if cg.ground_adjacency is None:
        adj = {b: set(a) for b, a in enumerate(cg.adjacency)}
        members = [[b] for b in range(len(cg.blocks))]
        card = {b: cg.cardinality[b] ** len(m) for b, m in enumerate(cg.blocks)}
    else:
        adj = {v: set(n) for v, n in cg.ground_adjacency.items()}
        members = [sorted(m) for m in cg.blocks]
        card = dict(cg.ground_cardinality)

    def cost(b: int) -> int:
        return sum(card[v] * math.prod(card[u] for u in adj[v]) for v in members[b])

    alive = {b for b, ok in enumerate(cg.eliminable) if ok}
    out = []
    while alive:
        best = min(alive, key=lambda b: (cost(b), b))
        out.append(best)
        for v in members[best]:
            nbrs = adj.pop(v)
            for u in nbrs:
                adj[u].discard(v)
                adj[u].update(nbrs - {u})
        alive.discard(best)
    return out


def expand_order(block_order: Sequence[int], blocks: Sequence[Sequence[int]], eliminable: Sequence[int] | None = None) -> list[int]:
    keep = None if eliminable is None else set(eliminable)
    out = []
    for b in block_order:
        out.extend(v for v in sorted(blocks[b]) if keep is None or v in keep)
    return out


def elimination_order(model: Model, queries: Sequence[int]) -> list[int]:
    """Eliminable variables (unobserved, not queried) in lifted min-size order."""
    g = interaction_graph(model, queries)
    blocks = model_bisimulation(g)
    cg = compress_interaction_graph(g, model, blocks)
    eliminable = [v for v in model.variables if v not in g.queries]
    return expand_order(min_size_order(cg), blocks, eliminable)
