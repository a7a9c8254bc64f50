"""Small hand-built models and graphs used by tests, docs and the CLI demo.

Boolean variables use index 0 for ``true`` and 1 for ``false``.
"""

from __future__ import annotations

import numpy as np

from .factor import Factor
from .model import Model
from .rvelim_graph import RvElimGraph

S1, S2, S3, I1, I2, I3, T1 = range(7)
NAMES = ("s1", "s2", "s3", "i1", "i2", "i3", "t1")


def and_table() -> np.ndarray:
    """Table over ``(i, s, t)``: 1 iff ``i <=> (s and t)``."""
    t = np.zeros((2, 2, 2))
    for i in range(2):
        for s in range(2):
            for u in range(2):
                t[i, s, u] = float((i == 0) == (s == 0 and u == 0))
    return t


def running_example() -> Model:
    """Three ``and`` gates ``i_j <=> s_j and t1`` with priors 0.8, 0.8, 0.6 and 0.5.

    Factor order: f_s1, f_s2, f_s3, f_i1, f_i2, f_i3, f_t1.
    """
    gate = and_table()
    factors = [
        Factor((S1,), [0.8, 0.2]),
        Factor((S2,), [0.8, 0.2]),
        Factor((S3,), [0.6, 0.4]),
        Factor((I1, S1, T1), gate),
        Factor((I2, S2, T1), gate),
        Factor((I3, S3, T1), gate),
        Factor((T1,), [0.5, 0.5]),
    ]
    return Model((2,) * 7, tuple(factors))


RUNNING_QUERIES = [I1, I2, I3]

# vertex ids of the hand-encoded graph
F_S1, F_S2, F_S3, F_I1, F_I2, F_I3, F_T1 = range(7)
M_S1, M_S2, M_S3 = 7, 8, 9
MU_I1, MU_I2, MU_I3 = 10, 11, 12


def running_example_graph() -> RvElimGraph:
    """The 13-vertex graph of the running example: ``m_sj = sum_sj f_sj f_ij`` and
    ``mu_ij = sum_t1 m_sj f_t1``."""
    ops = [
        ((F_S1, F_I1), S1),
        ((F_S2, F_I2), S2),
        ((F_S3, F_I3), S3),
        ((M_S1, F_T1), T1),
        ((M_S2, F_T1), T1),
        ((M_S3, F_T1), T1),
    ]
    return RvElimGraph.from_operations(running_example(), ops, {I1: MU_I1, I2: MU_I2, I3: MU_I3})


X, Y, XP, YP = range(4)


def two_chain_model() -> Model:
    """Two chains whose first factors differ but whose eliminations agree."""
    return Model(
        (2, 2, 2, 2),
        (
            Factor((X, Y), [0.8, 0.2, 0.4, 0.6], shape=(2, 2)),
            Factor((Y,), [0.5, 0.5]),
            Factor((XP, YP), [0.2, 0.8, 0.6, 0.4], shape=(2, 2)),
            Factor((YP,), [0.5, 0.5]),
        ),
    )


def two_chain_graph() -> RvElimGraph:
    return RvElimGraph.from_operations(two_chain_model(), [((0, 1), Y), ((2, 3), YP)], {X: 4, XP: 5})


def random_model(
    rng: np.random.Generator,
    max_vars: int = 8,
    max_joint: int = 1 << 16,
    share_prob: float = 0.5,
) -> Model:
    """Small random Markov network whose tables are often reused to create symmetry."""
    while True:
        n = int(rng.integers(2, max_vars + 1))
        cards = [int(c) for c in rng.integers(2, 4, size=n)]
        if np.prod(cards, dtype=np.int64) <= max_joint:
            break
    pool: dict[tuple, list[np.ndarray]] = {}
    factors = []
    covered: set[int] = set()
    for _ in range(int(rng.integers(n - 1, 2 * n + 1))):
        k = int(rng.integers(1, min(3, n) + 1))
        scope = tuple(int(v) for v in rng.choice(n, size=k, replace=False))
        shape = tuple(cards[v] for v in scope)
        tables = pool.setdefault(shape, [])
        if tables and rng.random() < share_prob:
            vals = tables[int(rng.integers(len(tables)))]
        else:
            vals = rng.uniform(0.05, 1.0, size=shape)
            tables.append(vals)
        factors.append(Factor(scope, vals))
        covered.update(scope)
    for v in range(n):
        if v not in covered:
            factors.append(Factor((v,), rng.uniform(0.05, 1.0, size=cards[v])))
    return Model(tuple(cards), tuple(factors))


def random_replicated_model(rng: np.random.Generator) -> Model:
    """A random motif copied several times around shared hub variables.

    Copies reuse the motif's tables, except that one copy may get a fresh table
    for one factor, so exact bisimulation has both merges and splits to find.
    """
    hubs = int(rng.integers(1, 3))
    size = int(rng.integers(1, 4))
    copies = int(rng.integers(2, 4))
    n = hubs + size * copies
    cards = [2] * n
    motif = []
    for _ in range(int(rng.integers(size, 2 * size + 2))):
        k = int(rng.integers(1, 4))
        local = rng.choice(hubs + size, size=min(k, hubs + size), replace=False)
        scope_tmpl = tuple(int(x) for x in local)
        if all(x < hubs for x in scope_tmpl):
            scope_tmpl = scope_tmpl + (hubs + int(rng.integers(size)),)
        motif.append((scope_tmpl, rng.uniform(0.05, 1.0, size=(2,) * len(scope_tmpl))))
    odd = int(rng.integers(copies)) if rng.random() < 0.5 else None
    factors = []
    for c in range(copies):
        for j, (tmpl, vals) in enumerate(motif):
            scope = tuple(x if x < hubs else hubs + c * size + (x - hubs) for x in tmpl)
            if c == odd and j == 0:
                vals = rng.uniform(0.05, 1.0, size=vals.shape)
            factors.append(Factor(scope, vals))
    covered = {v for f in factors for v in f.scope}
    for v in range(n):
        if v not in covered:
            factors.append(Factor((v,), [0.3, 0.7]))
    return Model(tuple(cards), tuple(factors))


def random_instance(rng: np.random.Generator, **kw):
    """Random model, nonempty query set and a random order of the other variables.

    Half of the models are replicated motifs, the rest unstructured.
    """
    m = random_replicated_model(rng) if rng.random() < 0.5 else random_model(rng, **kw)
    n = m.num_variables
    nq = int(rng.integers(1, min(3, n) + 1))
    queries = sorted(int(v) for v in rng.choice(n, size=nq, replace=False))
    rest = [v for v in range(n) if v not in queries]
    order = [int(v) for v in rng.permutation(rest)]
    return m, queries, order
