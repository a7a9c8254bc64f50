import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rvlift.factor import (
    MAX,
    SUM,
    DomainError,
    Factor,
    FactorError,
    MissingVariableError,
    OpCounter,
    ScopeConflictError,
    eliminate,
    is_shared,
    multiply,
    normalize,
    product,
    reduce,
    rms_distance,
    total,
)
from rvlift.fixtures import S1, I1, T1, and_table

CARDS = {v: 2 + v % 2 for v in range(6)}


@st.composite
def factors(draw, variables=tuple(range(6)), max_arity=3):
    k = draw(st.integers(0, max_arity))
    scope = tuple(draw(st.permutations(variables))[:k])
    shape = tuple(CARDS[v] for v in scope)
    n = math.prod(shape)
    vals = draw(st.lists(st.floats(0.0, 4.0, allow_nan=False), min_size=n, max_size=n))
    return Factor(scope, vals, shape=shape)


def value_at(f, assignment):
    return float(f.values[tuple(assignment[v] for v in f.scope)])


def assignments(scope):
    for combo in itertools.product(*(range(CARDS[v]) for v in scope)):
        yield dict(zip(scope, combo))


class TestFactorConstruction:
    def test_layout_is_row_major(self):
        f = Factor((0, 1), [0.8, 0.2, 0.4, 0.6], shape=(2, 2))
        assert f.values[0, 1] == 0.2
        assert f.values[1, 0] == 0.4

    def test_duplicate_scope_rejected(self):
        with pytest.raises(ScopeConflictError):
            Factor((1, 1), np.ones((2, 2)))

    @pytest.mark.parametrize("vals", [[-0.1, 1.0], [math.nan, 1.0], [math.inf, 1.0]])
    def test_bad_values_rejected(self, vals):
        with pytest.raises(FactorError):
            Factor((0,), vals)

    def test_size_mismatch_rejected(self):
        with pytest.raises(FactorError):
            Factor((0, 1), [1.0, 2.0, 3.0], shape=(2, 2))

    def test_scalar_factor(self):
        s = Factor.scalar(2.5)
        assert s.scope == () and s.size == 1 and total(s) == 2.5

    def test_immutable(self):
        f = Factor((0,), [0.5, 0.5])
        with pytest.raises(ValueError):
            f.values[0] = 1.0

    def test_negative_zero_collapsed(self):
        assert Factor((0,), [-0.0, 1.0]).content_key() == Factor((0,), [0.0, 1.0]).content_key()


class TestMultiply:
    def test_same_scope_pointwise(self):
        f = multiply(Factor((1,), [0.5, 0.5]), Factor((1,), [0.5, 0.5]))
        assert f.scope == (1,)
        assert f.flat.tolist() == [0.25, 0.25]

    def test_two_chain_first_product(self):
        f1 = Factor((0, 1), [0.8, 0.2, 0.4, 0.6], shape=(2, 2))
        f2 = Factor((1,), [0.5, 0.5])
        f = multiply(f1, f2)
        assert f.scope == (0, 1)
        np.testing.assert_allclose(f.flat, [0.4, 0.1, 0.2, 0.3], rtol=0, atol=1e-15)

    def test_scalar_identity(self):
        f = Factor((3,), [0.3, 0.7])
        g = multiply(f, Factor.scalar(1.0))
        assert g == f

    def test_first_appearance_scope(self):
        f = multiply(Factor((2, 0), np.ones((2, 2))), Factor((1, 0, 4), np.ones((3, 2, 2))))
        assert f.scope == (2, 0, 1, 4)
        assert f.shape == (2, 2, 3, 2)

    def test_cardinality_conflict(self):
        with pytest.raises(ScopeConflictError):
            multiply(Factor((0,), [1.0, 1.0]), Factor((0,), [1.0, 1.0, 1.0]))

    def test_multiplication_count(self):
        c = OpCounter()
        product([Factor((0,), [1.0, 2.0]), Factor((1,), [1.0, 2.0, 3.0]), Factor((0,), [2.0, 2.0])], c)
        assert c.mults == 2 * 6

    def test_many_operands_order_independent_bitwise(self):
        rng = np.random.default_rng(3)
        fs = [Factor((0, 1), rng.uniform(size=(2, 2))), Factor((1,), rng.uniform(size=2)),
              Factor((0,), rng.uniform(size=2)), Factor((1, 0), rng.uniform(size=(2, 2)))]
        ref = product(fs)
        for perm in itertools.permutations(fs):
            out = product(perm)
            assert np.array_equal(out.values, np.transpose(ref.values, [ref.scope.index(v) for v in out.scope]))

    @settings(max_examples=60, deadline=None)
    @given(factors(), factors())
    def test_commutative_per_assignment(self, f1, f2):
        a, b = multiply(f1, f2), multiply(f2, f1)
        assert set(a.scope) == set(b.scope)
        for x in assignments(a.scope):
            assert value_at(a, x) == pytest.approx(value_at(b, x), rel=1e-12, abs=0)
            assert value_at(a, x) == pytest.approx(value_at(f1, x) * value_at(f2, x), rel=1e-12, abs=0)


class TestEliminate:
    def test_two_chain_message(self):
        prod = Factor((0, 1), [0.4, 0.1, 0.2, 0.3], shape=(2, 2))
        m = eliminate(prod, 1)
        assert m.scope == (0,)
        np.testing.assert_allclose(m.flat, [0.5, 0.5], rtol=0, atol=1e-15)

    def test_uniform(self):
        assert eliminate(Factor((0, 1), np.full((2, 2), 0.25)), 0).flat.tolist() == [0.5, 0.5]

    def test_running_example_message(self):
        gate = Factor((I1, S1, T1), and_table())
        prior = Factor((S1,), [0.8, 0.2])
        m = eliminate(multiply(prior, gate), S1)
        assert m.scope == (I1, T1)
        np.testing.assert_allclose(m.flat, [0.8, 0.0, 0.2, 1.0], rtol=0, atol=1e-15)

    def test_max_mode(self):
        f = Factor((0, 1), [1.0, 5.0, 3.0, 2.0], shape=(2, 2))
        assert eliminate(f, 0, MAX).flat.tolist() == [3.0, 5.0]
        assert eliminate(f, 1, MAX).flat.tolist() == [5.0, 3.0]

    def test_missing_variable(self):
        with pytest.raises(MissingVariableError):
            eliminate(Factor((0,), [1.0, 1.0]), 3)

    def test_addition_count(self):
        c = OpCounter()
        eliminate(Factor((0, 1), np.ones((3, 4))), 0, SUM, c)
        assert c.adds == 2 * 4

    def test_order_preserved(self):
        f = eliminate(Factor((4, 2, 7), np.ones((2, 3, 2))), 2)
        assert f.scope == (4, 7)

    @settings(max_examples=60, deadline=None)
    @given(factors())
    def test_mass_conservation(self, f):
        if not f.scope:
            return
        for v in f.scope:
            assert total(eliminate(f, v)) == pytest.approx(total(f), rel=1e-12, abs=1e-300)

    @settings(max_examples=60, deadline=None)
    @given(factors(variables=(0, 1, 2)), factors(variables=(3, 4, 5)))
    def test_distributivity(self, f1, f2):
        if not f2.scope:
            return
        v = f2.scope[0]
        lhs = eliminate(multiply(f1, f2), v)
        rhs = multiply(f1, eliminate(f2, v))
        assert lhs.scope == rhs.scope
        np.testing.assert_allclose(lhs.values, rhs.values, rtol=1e-12, atol=1e-300)


class TestReduce:
    def test_slice(self):
        f = Factor((0, 1), [0.8, 0.2, 0.4, 0.6], shape=(2, 2))
        r = reduce(f, 1, 0)
        assert r.scope == (0,) and r.flat.tolist() == [0.8, 0.4]

    def test_full_reduction(self):
        r = reduce(Factor((0,), [0.7, 0.3]), 0, 1)
        assert r.scope == () and r.flat.tolist() == [0.3]

    def test_domain_error(self):
        with pytest.raises(DomainError):
            reduce(Factor((0,), [0.7, 0.3]), 0, 2)

    def test_commutes_with_elimination(self):
        f = Factor((0, 1, 2), np.arange(12.0).reshape(2, 3, 2))
        a = eliminate(reduce(f, 2, 1), 0)
        b = reduce(eliminate(f, 0), 2, 1)
        assert a == b


class TestSharedness:
    def test_priors_shared_across_variables(self):
        assert is_shared(Factor((0,), [0.8, 0.2]), Factor((1,), [0.8, 0.2]))

    def test_different_tables(self):
        assert not is_shared(Factor((0,), [0.8, 0.2]), Factor((2,), [0.6, 0.4]))

    def test_shape_matters(self):
        assert not is_shared(Factor((0, 1), np.ones((2, 3))), Factor((0, 1), np.ones((3, 2))))

    @settings(max_examples=60, deadline=None)
    @given(factors(), factors(), factors())
    def test_equivalence_relation(self, a, b, c):
        assert is_shared(a, a)
        assert is_shared(a, b) == is_shared(b, a)
        if is_shared(a, b) and is_shared(b, c):
            assert is_shared(a, c)


class TestRmsDistance:
    def test_two_chain_tables(self):
        d = rms_distance(Factor((0, 1), [0.8, 0.2, 0.4, 0.6], shape=(2, 2)),
                         Factor((2, 3), [0.2, 0.8, 0.6, 0.4], shape=(2, 2)))
        assert d == pytest.approx(math.sqrt(0.2), abs=1e-12)

    def test_priors(self):
        assert rms_distance(Factor((0,), [0.8, 0.2]), Factor((2,), [0.6, 0.4])) == pytest.approx(0.2, abs=1e-12)

    def test_shape_mismatch_is_infinite(self):
        assert rms_distance(Factor((0,), [1.0, 1.0]), Factor((0,), [1.0, 1.0, 1.0])) == math.inf

    @settings(max_examples=80, deadline=None)
    @given(factors(variables=(0, 2), max_arity=2), factors(variables=(0, 2), max_arity=2),
           factors(variables=(0, 2), max_arity=2))
    def test_metric_properties(self, a, b, c):
        assert rms_distance(a, a) == 0.0
        assert rms_distance(a, b) == rms_distance(b, a)
        if a.shape == b.shape:
            assert (rms_distance(a, b) == 0.0) == is_shared(a, b)
        if a.shape == b.shape == c.shape:
            assert rms_distance(a, c) <= rms_distance(a, b) + rms_distance(b, c) + 1e-12


def test_normalize():
    np.testing.assert_allclose(normalize([1.0, 3.0]), [0.25, 0.75])
    with pytest.raises(FactorError):
        normalize([0.0, 0.0])
