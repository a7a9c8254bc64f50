import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rvlift.engine import brute_force_marginals, ground_evaluate
from rvlift.factor import MAX, SUM, Factor
from rvlift.fixtures import (
    F_I1, F_S1, F_S2, F_S3, I1, I2, I3, M_S1, MU_I1, MU_I3, RUNNING_QUERIES, S1, S2, S3, T1,
    random_instance, running_example, running_example_graph,
)
from rvlift.model import Model
from rvlift.rvelim_graph import (
    ConfigurationError,
    GraphError,
    RvElimGraph,
    RvVertex,
    build,
    build_minibucket,
    canonical_partition,
    internal_label,
    max_bucket_size,
    parse_minibucket_mode,
    root_labels,
    strip_cardinalities,
)


class TestLabels:
    def test_root_labels_running_example(self):
        ids = root_labels(running_example().factors)
        assert ids[F_S1] == ids[F_S2] != ids[F_S3]
        assert ids[3] == ids[4] == ids[5]
        assert len(set(ids)) == 4

    def test_duplicate_factor_object(self):
        f = Factor((0,), [0.1, 0.9])
        assert root_labels([f, f, Factor((1,), [0.2, 0.8])]) == [0, 0, 1]

    def test_internal_label_recipe(self):
        label, scope = internal_label([(S1,), (I1, S1, T1)], S1, (2,) * 7)
        assert strip_cardinalities(label) == "{[1],[2,1,3],1}"
        assert scope == (I1, T1)

    def test_single_parent(self):
        label, scope = internal_label([(4,)], 4, (3,) * 5)
        assert label == "{[1:3],1}" and scope == ()

    def test_order_dependent(self):
        label, _ = internal_label([(I1, S1, T1), (S1,)], S1, (2,) * 7)
        assert strip_cardinalities(label) == "{[1,2,3],[2],2}"

    def test_cardinalities_distinguish(self):
        a, _ = internal_label([(0, 1)], 0, (2, 2))
        b, _ = internal_label([(0, 1)], 0, (2, 3))
        assert a != b and strip_cardinalities(a) == strip_cardinalities(b)

    def test_max_and_product_labels(self):
        assert internal_label([(0,)], 0, (2,), MAX)[0].startswith("max{")
        assert internal_label([(0,), (0,)], None, (2,))[0].endswith(",-}")

    def test_missing_eliminated(self):
        with pytest.raises(GraphError):
            internal_label([(0,)], 1, (2, 2))
        with pytest.raises(GraphError):
            internal_label([], 0, (2,))

    @settings(max_examples=40, deadline=None)
    @given(st.permutations(range(6)))
    def test_renaming_invariance(self, perm):
        scopes = [(0, 1), (1, 2, 3), (3,)]
        a, _ = internal_label(scopes, 1, (2,) * 6)
        b, _ = internal_label([tuple(perm[v] for v in s) for s in scopes], perm[1], (2,) * 6)
        assert a == b


class TestFixtureGraph:
    def test_structure(self):
        g = running_example_graph()
        assert len(g) == 13
        assert g.height == 2
        assert g.vertices[M_S1].parents == (F_S1, F_I1)
        assert strip_cardinalities(g.labels[M_S1]) == "{[1],[2,1,3],1}"
        assert g.leaves == {I1: MU_I1, I2: MU_I1 + 1, I3: MU_I3}
        assert g.scopes[MU_I1] == (I1,)

    def test_depth_recurrence(self):
        g = running_example_graph()
        for v in g.vertices:
            want = 0 if v.is_root else 1 + max(g.depth[p] for p in v.parents)
            assert g.depth[v.id] == want

    def test_dump(self):
        lines = running_example_graph().dump().splitlines()
        assert len(lines) == 13
        assert lines[MU_I1].startswith(f"{MU_I1} 2 leaf ")
        assert lines[0].startswith("0 0 root")

    def test_rejects_forward_parent(self):
        m = running_example()
        verts = [RvVertex(i, factor_index=i) for i in range(7)] + [RvVertex(7, (8,), S1)]
        with pytest.raises(GraphError):
            RvElimGraph(m, verts)


class TestBuild:
    def test_running_example(self):
        m = running_example()
        g = build(m, [S1, S2, S3, T1], RUNNING_QUERIES)
        m_s1 = next(v for v in g.vertices if v.eliminated == S1)
        assert m_s1.parents == (F_S1, F_I1)
        assert strip_cardinalities(g.labels[m_s1.id]) == "{[1],[2,1,3],1}"
        assert set(g.leaves) == set(RUNNING_QUERIES)
        for q, vid in g.leaves.items():
            assert g.scopes[vid] == (q,)

    def test_single_factor_is_own_leaf(self):
        m = Model((2,), (Factor((0,), [0.3, 0.7]),))
        g = build(m, [], [0])
        assert len(g) == 1 and g.leaves == {0: 0}

    def test_single_factor_two_vars(self):
        m = Model((2, 2), (Factor((0, 1), np.ones((2, 2))),))
        g = build(m, [1], [0])
        assert len(g) == 2 and g.vertices[1].eliminated == 1 and g.leaves == {0: 1}

    def test_vertex_count_arithmetic(self):
        m = Model((2, 2, 2), (Factor((0, 1), np.ones((2, 2))), Factor((1, 2), np.ones((2, 2)))))
        g = build(m, [2, 1], [0])
        assert len(g) == 2 + 2

    def test_order_validation(self):
        m = running_example()
        with pytest.raises(ConfigurationError):
            build(m, [S1, S2, S3, T1, I1], RUNNING_QUERIES)
        with pytest.raises(ConfigurationError):
            build(m, [S1, S2], RUNNING_QUERIES)
        with pytest.raises(ConfigurationError):
            build(m, [S1, S1, S2, S3, T1], RUNNING_QUERIES)

    def test_leaves_reuse_shared_trunk(self):
        m = running_example()
        g = build(m, [S1, S2, S3, T1], RUNNING_QUERIES)
        keys = [(v.parents, v.eliminated, v.op) for v in g.vertices if not v.is_root]
        assert len(keys) == len(set(keys))

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_ground_matches_brute_force(self, seed):
        m, q, order = random_instance(np.random.default_rng(seed))
        res = ground_evaluate(build(m, order, q))
        ref = brute_force_marginals(m, q)
        for v in q:
            np.testing.assert_allclose(res.marginals[v], ref[v], rtol=0, atol=1e-10)


class TestMiniBuckets:
    def test_canonical_partition(self):
        scopes = [frozenset({0, 1}), frozenset({1}), frozenset({1, 2}), frozenset({2})]
        assert canonical_partition(scopes, [0, 1, 2, 3]) == [[0, 1], [2, 3]]

    def test_two_incomparable_buckets(self):
        m = Model((2, 2, 2), (Factor((0, 1), np.ones((2, 2))), Factor((1, 2), np.ones((2, 2)))))
        g = build_minibucket(m, [1, 2], [0], ("args", 2))
        elims = [(v.parents, v.op) for v in g.vertices if v.eliminated == 1]
        assert elims == [((0,), SUM), ((1,), MAX)]

    def test_large_i_equals_build(self):
        m = running_example()
        order = [S1, S2, S3, T1]
        a = build(m, order, RUNNING_QUERIES)
        for mode in [("args", 7), ("merge", float("inf"))]:
            b = build_minibucket(m, order, RUNNING_QUERIES, mode)
            assert [(v.parents, v.eliminated, v.op) for v in b.vertices] == [
                (v.parents, v.eliminated, v.op) for v in a.vertices
            ]

    def test_arity_check(self):
        with pytest.raises(ConfigurationError):
            build_minibucket(running_example(), [S1, S2, S3, T1], RUNNING_QUERIES, ("args", 2))

    def test_mode_parsing(self):
        assert parse_minibucket_mode("off") is None
        assert parse_minibucket_mode("args:3") == ("args", 3)
        assert parse_minibucket_mode("merge:inf") == ("merge", float("inf"))
        for bad in ("args", "foo:2", "args:0"):
            with pytest.raises(ConfigurationError):
                parse_minibucket_mode(bad)

    def test_max_bucket_size(self):
        assert max_bucket_size(running_example(), [S1, S2, S3, T1], RUNNING_QUERIES) == 3

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["args", "merge"]))
    def test_upper_bound(self, seed, kind):
        rng = np.random.default_rng(seed)
        m, q, order = random_instance(rng)
        exact = ground_evaluate(build(m, order, q))
        arity = max(len(f.scope) for f in m.factors)
        limit = arity if kind == "args" else 1
        mb = ground_evaluate(build_minibucket(m, order, q, (kind, limit)))
        for v in q:
            assert np.all(mb.unnormalized[v] >= exact.unnormalized[v] - 1e-12)
