"""Partitioning an rv-elim graph into blocks of vertices that share one computation.

Three algorithms are provided:

* :func:`exact_bisimulation` puts vertices in one block only when their tables
  are guaranteed identical (equal labels, parents pairwise in equal blocks).
* :func:`approx_bisimulation` matches only incoming label paths of length at
  most ``k``.
* :func:`factor_binning_bisimulation` additionally computes one table per block
  and merges blocks whose tables lie within ``epsilon`` of each other, choosing
  the surviving blocks with a greedy dominating set.

Every algorithm re-orders a vertex's parents by ascending block id (ties by
original edge position; the k-path variant first breaks ties by exact block)
before labelling it, so multiplication order stops mattering when deciding
sharedness.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Hashable, Sequence

import numpy as np

from .factor import Factor, OpCounter, eliminate, product, rms_distance
from .rvelim_graph import RvElimGraph, derive_structure, internal_label


class PartitionError(ValueError):
    pass


class Partition:
    """Block assignment of every rv-elim vertex plus the parent order used to label it.

    Blocks are numbered by their smallest vertex, which is also the block's
    representative. ``block_factors`` is filled only by factor binning.
    """

    def __init__(
        self,
        graph: RvElimGraph,
        block_of: Sequence[int],
        parent_order: Sequence[Sequence[int]] | None = None,
        block_factors: dict[int, Factor] | None = None,
    ):
        if len(block_of) != len(graph):
            raise PartitionError("block assignment does not cover the graph")
        renumber: dict[int, int] = {}
        for b in block_of:
            renumber.setdefault(b, len(renumber))
        self.graph = graph
        self.block_of = tuple(renumber[b] for b in block_of)
        if parent_order is None:
            parent_order = [v.parents for v in graph.vertices]
        self.parent_order = tuple(tuple(p) for p in parent_order)
        for v, po in zip(graph.vertices, self.parent_order):
            if sorted(po) != sorted(v.parents):
                raise PartitionError(f"parent order of vertex {v.id} is not a permutation of its parents")
        self.scopes, self.labels = derive_structure(graph, self.parent_order)
        blocks: list[list[int]] = [[] for _ in renumber]
        for v, b in enumerate(self.block_of):
            blocks[b].append(v)
        self.blocks = tuple(tuple(b) for b in blocks)
        for members in self.blocks:
            kinds = {graph.vertices[v].is_root for v in members}
            if len(kinds) > 1:
                raise PartitionError("a block mixes roots and internal vertices")
        self.block_factors = None
        if block_factors is not None:
            self.block_factors = {renumber[b]: f for b, f in block_factors.items()}

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def representative(self, block: int) -> int:
        return self.blocks[block][0]

    def sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]

    def as_sets(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(b) for b in self.blocks)

    def refines(self, other: "Partition") -> bool:
        """True when every block of ``self`` sits inside one block of ``other``."""
        return all(len({other.block_of[v] for v in b}) == 1 for b in self.blocks)

    def dump(self) -> str:
        lines = [f"{v} {b}" for v, b in enumerate(self.block_of)]
        lines.append(f"# blocks {self.num_blocks}")
        for b, members in enumerate(self.blocks):
            lines.append(f"# block {b} size {len(members)} members {' '.join(map(str, members))}")
        return "\n".join(lines) + "\n"


def identity_partition(graph: RvElimGraph) -> Partition:
    return Partition(graph, list(range(len(graph))))


def _ordered(parents: Sequence[int], block_of: Sequence[int], tiebreak: Sequence[int] | None = None) -> tuple[int, ...]:
    if tiebreak is None:
        idx = sorted(range(len(parents)), key=lambda i: (block_of[parents[i]], i))
    else:
        idx = sorted(range(len(parents)), key=lambda i: (block_of[parents[i]], tiebreak[parents[i]], i))
    return tuple(parents[i] for i in idx)


class _Interner:
    def __init__(self):
        self.ids: dict[Hashable, int] = {}

    def __call__(self, key: Hashable) -> int:
        return self.ids.setdefault(key, len(self.ids))


def _root_blocks(graph: RvElimGraph, intern: _Interner, block_of: list[int]) -> None:
    for r in graph.roots:
        block_of[r] = intern(("root", graph.root_label_ids[r]))


def _label_vertex(graph, v, po, scopes):
    vert = graph.vertices[v]
    return internal_label([scopes[p] for p in po], vert.eliminated, graph.model.cardinalities, vert.op)


def exact_bisimulation(graph: RvElimGraph) -> Partition:
    """Depth-by-depth refinement: roots by label, then by (label, ordered parent blocks)."""
    n = len(graph)
    block_of = [-1] * n
    order: list[tuple[int, ...]] = [()] * n
    scopes: list[tuple[int, ...]] = list(graph.scopes)
    intern = _Interner()
    _root_blocks(graph, intern, block_of)
    for d, stratum in enumerate(graph.by_depth()):
        if d == 0:
            continue
        for v in stratum:
            po = _ordered(graph.vertices[v].parents, block_of)
            label, scope = _label_vertex(graph, v, po, scopes)
            order[v], scopes[v] = po, scope
            block_of[v] = intern((d, label, tuple(block_of[p] for p in po)))
    return Partition(graph, block_of, order)


def _canonical(ids: Sequence[int]) -> list[int]:
    ren: dict[int, int] = {}
    return [ren.setdefault(b, len(ren)) for b in ids]


def approx_bisimulation(graph: RvElimGraph, k: float) -> Partition:
    """Partition by ``k``-bisimilarity (``k`` may be ``math.inf``).

    The initial partition splits roots by label and internal vertices by depth.
    Round 0 splits internal blocks by label; each later round splits every
    block by (label, ordered parent blocks of the previous round). Stops early
    once a round changes nothing.

    Parents tied in a coarse block are ordered by their exact-bisimulation
    block before edge position. Edge position alone could give two truly
    shared vertices different labels at a coarse level and split them for
    good; with this tiebreak every round stays coarser than the exact
    partition and reaches it once ``k`` is at least the graph height.
    """
    if k < 0:
        raise PartitionError("path length must be non-negative")
    n = len(graph)
    strata = graph.by_depth()
    intern = _Interner()
    init = [-1] * n
    _root_blocks(graph, intern, init)
    for d, stratum in enumerate(strata[1:], start=1):
        for v in stratum:
            init[v] = intern(("depth", d))
    exact = exact_bisimulation(graph).block_of
    X = _canonical(init)
    C = list(X)
    order: list[tuple[int, ...]] = [()] * n
    scopes: list[tuple[int, ...]] = list(graph.scopes)

    def sweep(use_parents: bool) -> list[int]:
        split = _Interner()
        new = list(C)
        for d, stratum in enumerate(strata):
            if d == 0:
                continue
            for v in stratum:
                po = _ordered(graph.vertices[v].parents, X, exact)
                label, scope = _label_vertex(graph, v, po, scopes)
                order[v], scopes[v] = po, scope
                key = (C[v], label, tuple(X[p] for p in po)) if use_parents else (C[v], label)
                new[v] = n + split(key)
        return _canonical(new)

    C = sweep(use_parents=False)
    j = 0
    while j < k:
        X = list(C)
        C = sweep(use_parents=True)
        j += 1
        if C == X:
            break
    return Partition(graph, C, order)


# ---------------------------------------------------------------------------
# dominating sets


def _neighborhoods(n: int, distance, epsilon: float) -> list[set[int]]:
    if isinstance(distance, np.ndarray):
        return [set(np.flatnonzero(distance[i] <= epsilon).tolist()) | {i} for i in range(n)]
    nbr = [{i} for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if distance(i, j) <= epsilon:
                nbr[i].add(j)
                nbr[j].add(i)
    return nbr


def greedy_dominating_set(
    n: int, distance: Callable[[int, int], float] | np.ndarray, epsilon: float
) -> tuple[list[int], dict[int, int]]:
    """Greedy set-cover heuristic over the items ``0..n-1``.

    ``distance`` is a symmetric callable on item indices or an ``n x n``
    matrix. Returns the representatives in pick order and a map from every
    other item to the representative that first covered it.
    """
    if epsilon < 0:
        raise PartitionError("epsilon must be non-negative")
    nbr = _neighborhoods(n, distance, epsilon)
    uncovered = set(range(n))
    reps: list[int] = []
    cover: dict[int, int] = {}
    while uncovered:
        pick = max(range(n), key=lambda i: (len(nbr[i]), -i))
        reps.append(pick)
        hit = set(nbr[pick])
        for j in sorted(hit):
            cover.setdefault(j, pick)
        uncovered -= hit
        for s in nbr:
            s -= hit
    rep_set = set(reps)
    return reps, {j: c for j, c in cover.items() if j not in rep_set}


def brute_force_dominating_set(
    n: int, distance: Callable[[int, int], float] | np.ndarray, epsilon: float, limit: int = 20
) -> list[int]:
    """Minimum dominating set by subset enumeration (smallest, then lexicographic)."""
    if n > limit:
        raise PartitionError(f"brute force refuses {n} items (limit {limit})")
    nbr = _neighborhoods(n, distance, epsilon)
    for size in range(n + 1):
        for subset in itertools.combinations(range(n), size):
            chosen = set(subset)
            if all(nbr[i] & chosen for i in range(n)):
                return list(subset)
    raise AssertionError("unreachable: the full set always dominates")


def all_dominating_sets(neighborhoods: Sequence[set[int]]) -> set[frozenset[int]]:
    n = len(neighborhoods)
    out = set()
    for mask in range(1 << n):
        chosen = {i for i in range(n) if mask >> i & 1}
        if all(neighborhoods[i] & chosen for i in range(n)):
            out.add(frozenset(chosen))
    return out


def all_binning_solutions(n: int, distance: Callable[[int, int], float], epsilon: float) -> set[frozenset[int]]:
    """Every F such that each item outside F lies within epsilon of some member of F."""
    out = set()
    for mask in range(1 << n):
        chosen = [i for i in range(n) if mask >> i & 1]
        ok = all(i in chosen or any(distance(i, f) <= epsilon for f in chosen) for i in range(n))
        if ok:
            out.add(frozenset(chosen))
    return out


def binning_to_ds(n: int, distance: Callable[[int, int], float], epsilon: float) -> list[set[int]]:
    """Dominating-set instance whose neighborhoods are the epsilon-balls."""
    return _neighborhoods(n, distance, epsilon)


def ds_to_binning(n: int, edges: Sequence[tuple[int, int]]) -> tuple[Callable[[int, int], float], float]:
    """Binning instance: distance 0 along graph edges (and to oneself), 1 otherwise, epsilon 0."""
    adj = {frozenset(e) for e in edges}

    def dist(i: int, j: int) -> float:
        return 0.0 if i == j or frozenset((i, j)) in adj else 1.0

    return dist, 0.0


# ---------------------------------------------------------------------------
# factor binning


def _rms_matrix(factors: Sequence[Factor]) -> np.ndarray:
    n = len(factors)
    out = np.full((n, n), math.inf)
    groups: dict[tuple, list[int]] = {}
    for i, f in enumerate(factors):
        groups.setdefault(f.shape, []).append(i)
    for idx in groups.values():
        mat = np.stack([factors[i].flat for i in idx])
        for a, i in enumerate(idx):
            diff = mat - mat[a]
            out[i, idx] = np.sqrt(np.mean(diff * diff, axis=1))
    return out


def _bin_blocks(
    blocks: list[int],
    block_factor: dict[int, Factor],
    epsilon: float,
    distance: Callable[[Factor, Factor], float],
) -> dict[int, int]:
    facs = [block_factor[b] for b in blocks]
    if distance is rms_distance:
        dist = _rms_matrix(facs)
    else:
        def dist(i, j):
            return distance(facs[i], facs[j])
    _, cover = greedy_dominating_set(len(blocks), dist, epsilon)
    return {blocks[i]: blocks[c] for i, c in cover.items()}


def factor_binning_bisimulation(
    graph: RvElimGraph,
    epsilon: float,
    distance: Callable[[Factor, Factor], float] = rms_distance,
    counter: OpCounter | None = None,
) -> Partition:
    """Exact bisimulation that also computes each block's table and merges near-equal blocks.

    At every depth the blocks are formed from keys as in exact bisimulation,
    one table is computed per block (from its smallest vertex, using the
    already-merged parent blocks' tables), and blocks whose tables are within
    ``epsilon`` are merged into greedy dominating-set representatives. With
    ``epsilon == 0`` nothing is merged beyond exact bisimulation.
    """
    if epsilon < 0:
        raise PartitionError("epsilon must be non-negative")
    n = len(graph)
    block_of = [-1] * n
    order: list[tuple[int, ...]] = [()] * n
    scopes: list[tuple[int, ...]] = list(graph.scopes)
    block_factor: dict[int, Factor] = {}
    intern = _Interner()

    def merge(stratum: list[int]) -> None:
        if epsilon <= 0:
            return
        blocks = sorted({block_of[v] for v in stratum})
        into = _bin_blocks(blocks, block_factor, epsilon, distance)
        for v in stratum:
            if block_of[v] in into:
                block_of[v] = into[block_of[v]]
        for b in into:
            del block_factor[b]

    strata = graph.by_depth()
    materialized = 0
    _root_blocks(graph, intern, block_of)
    for r in strata[0]:
        block_factor.setdefault(block_of[r], graph.factor(r))
    merge(strata[0])
    for d in range(1, len(strata)):
        reps: dict[int, int] = {}
        for v in strata[d]:
            po = _ordered(graph.vertices[v].parents, block_of)
            label, scope = _label_vertex(graph, v, po, scopes)
            order[v], scopes[v] = po, scope
            b = intern((d, label, tuple(block_of[p] for p in po)))
            block_of[v] = b
            reps.setdefault(b, v)
        for b, rep in reps.items():
            vert = graph.vertices[rep]
            operands = []
            for p in order[rep]:
                src = block_factor[block_of[p]]
                if src.shape != tuple(graph.model.cardinalities[x] for x in scopes[p]):
                    raise PartitionError(f"block table shape {src.shape} does not fit vertex {p}")
                operands.append(src.relabel(scopes[p]))
            f = product(operands, counter)
            if vert.eliminated is not None:
                f = eliminate(f, vert.eliminated, vert.op, counter)
            block_factor[b] = f
        materialized += len(reps)
        merge(strata[d])
    part = Partition(graph, block_of, order, block_factor)
    part.materialized = materialized
    return part
