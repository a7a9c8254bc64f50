"""Dense discrete factors and the arithmetic kernels used by every engine path.

A factor stores its table as an ndarray whose axes follow ``scope``; flattening
it in C order gives the row-major layout (last scope variable fastest) used by
the model file format.

Two kernels are written so that their results do not depend on the order in
which operands are listed:

* :func:`product` multiplies three or more operands entry by entry in sorted
  order of the operand values, so any permutation of the same operands gives a
  bitwise-identical table.
* :func:`eliminate` accumulates along the eliminated axis one domain value at a
  time, independent of where that axis sits in the scope.

Lifted and ground evaluation therefore agree bit for bit whenever they combine
the same operands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SUM = "sum"
MAX = "max"


class FactorError(ValueError):
    """Base class for factor construction and arithmetic failures."""


class ScopeConflictError(FactorError):
    pass


class MissingVariableError(FactorError):
    pass


class DomainError(FactorError):
    pass


@dataclass
class OpCounter:
    """Tally of scalar multiplications and additions done by table kernels.

    Max comparisons in max-elimination are tallied as additions.
    """

    mults: int = 0
    adds: int = 0

    def __iadd__(self, other: "OpCounter") -> "OpCounter":
        self.mults += other.mults
        self.adds += other.adds
        return self


class Factor:
    """Immutable non-negative table over an ordered tuple of distinct variables."""

    __slots__ = ("scope", "values")

    def __init__(self, scope: Sequence[int], values, shape: Sequence[int] | None = None):
        scope = tuple(int(v) for v in scope)
        if len(set(scope)) != len(scope):
            raise ScopeConflictError(f"duplicate variable in scope {scope}")
        if any(v < 0 for v in scope):
            raise FactorError(f"negative variable id in scope {scope}")
        arr = np.array(values, dtype=np.float64)
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if len(shape) != len(scope):
                raise FactorError(f"shape {shape} does not match scope {scope}")
            if arr.size != math.prod(shape):
                raise FactorError(
                    f"table has {arr.size} values, expected {math.prod(shape)} for shape {shape}"
                )
            arr = arr.reshape(shape)
        elif arr.ndim != len(scope):
            raise FactorError(f"table with {arr.ndim} axes given for scope {scope}")
        if any(s <= 0 for s in arr.shape):
            raise FactorError(f"non-positive cardinality in shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise FactorError("factor values must be finite")
        if np.any(arr < 0):
            raise FactorError("factor values must be non-negative")
        # collapse -0.0 so byte-level interning agrees with equality
        arr = arr + 0.0
        arr.setflags(write=False)
        self.scope = scope
        self.values = arr

    @classmethod
    def scalar(cls, value: float = 1.0) -> "Factor":
        return cls((), np.array(value, dtype=np.float64))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def size(self) -> int:
        return self.values.size

    def cardinality(self, var: int) -> int:
        return self.values.shape[self.scope.index(var)]

    def relabel(self, scope: Sequence[int]) -> "Factor":
        """Same table, new variable names (positional re-scoping)."""
        return Factor(scope, self.values)

    def content_key(self) -> tuple:
        return (self.shape, self.values.tobytes())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Factor):
            return NotImplemented
        return self.scope == other.scope and is_shared(self, other)

    def __hash__(self) -> int:
        return hash((self.scope, self.content_key()))

    def __repr__(self) -> str:
        return f"Factor(scope={self.scope}, values={self.flat.tolist()})"


def _joint_scope(factors: Sequence[Factor]) -> tuple[tuple[int, ...], dict[int, int]]:
    scope: list[int] = []
    cards: dict[int, int] = {}
    for f in factors:
        for v, c in zip(f.scope, f.shape):
            if v in cards:
                if cards[v] != c:
                    raise ScopeConflictError(
                        f"variable {v} has cardinality {cards[v]} and {c} in different operands"
                    )
            else:
                cards[v] = c
                scope.append(v)
    return tuple(scope), cards


def _expand(f: Factor, scope: tuple[int, ...], shape: tuple[int, ...]) -> np.ndarray:
    pos = {v: i for i, v in enumerate(scope)}
    axes = sorted(range(len(f.scope)), key=lambda a: pos[f.scope[a]])
    arr = np.transpose(f.values, axes) if f.scope else f.values
    view_shape = [1] * len(scope)
    for a in axes:
        view_shape[pos[f.scope[a]]] = f.shape[a]
    return np.broadcast_to(arr.reshape(view_shape), shape)


def product(factors: Sequence[Factor], counter: OpCounter | None = None) -> Factor:
    """Multiply operands into one factor over their first-appearance joint scope."""
    if not factors:
        return Factor.scalar(1.0)
    scope, cards = _joint_scope(factors)
    shape = tuple(cards[v] for v in scope)
    if len(factors) == 1:
        return Factor(scope, _expand(factors[0], scope, shape))
    ops = [_expand(f, scope, shape) for f in factors]
    if len(ops) == 2:
        out = ops[0] * ops[1]
    else:
        stacked = np.sort(np.stack(ops), axis=0)
        out = stacked[0] * stacked[1]
        for k in range(2, len(ops)):
            out = out * stacked[k]
    if counter is not None:
        counter.mults += (len(factors) - 1) * out.size
    return Factor(scope, out)


def multiply(f1: Factor, f2: Factor, counter: OpCounter | None = None) -> Factor:
    return product([f1, f2], counter)


def eliminate(f: Factor, var: int, mode: str = SUM, counter: OpCounter | None = None) -> Factor:
    """Sum (or max) ``var`` out of ``f``, preserving the order of the other variables."""
    if var not in f.scope:
        raise MissingVariableError(f"variable {var} not in scope {f.scope}")
    if mode not in (SUM, MAX):
        raise FactorError(f"unknown elimination mode {mode!r}")
    axis = f.scope.index(var)
    moved = np.moveaxis(f.values, axis, 0)
    acc = np.array(moved[0], dtype=np.float64)
    for k in range(1, moved.shape[0]):
        if mode == SUM:
            acc = acc + moved[k]
        else:
            acc = np.maximum(acc, moved[k])
    if counter is not None:
        counter.adds += (moved.shape[0] - 1) * acc.size
    return Factor(f.scope[:axis] + f.scope[axis + 1 :], acc)


def reduce(f: Factor, var: int, value: int) -> Factor:
    """Slice ``f`` at ``var = value``; the result no longer mentions ``var``."""
    if var not in f.scope:
        raise MissingVariableError(f"variable {var} not in scope {f.scope}")
    axis = f.scope.index(var)
    if not 0 <= value < f.shape[axis]:
        raise DomainError(f"value {value} out of range for variable {var} of cardinality {f.shape[axis]}")
    return Factor(f.scope[:axis] + f.scope[axis + 1 :], np.take(f.values, value, axis=axis))


def is_shared(f1: Factor, f2: Factor) -> bool:
    """Same shape and identical values, whatever variables the factors mention."""
    return f1.shape == f2.shape and bool(np.array_equal(f1.values, f2.values))


def rms_distance(f1: Factor, f2: Factor) -> float:
    """Root-mean-squared difference over the common domain; ``inf`` when shapes differ."""
    if f1.shape != f2.shape:
        return math.inf
    diff = f1.flat - f2.flat
    return float(np.sqrt(np.mean(diff * diff)))


def total(f: Factor) -> float:
    return float(np.sum(f.values))


def normalize(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    s = arr.sum()
    if s <= 0:
        raise FactorError("cannot normalize a table with zero mass")
    return arr / s
