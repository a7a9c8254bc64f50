"""Model container, text I/O, evidence conditioning and a layered BN generator."""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, TextIO

import numpy as np

from .factor import Factor, reduce

CPT_LAW = "uniform-simplex"
NOISE_LAW = "gaussian-clamped"
PRNG_NAME = "numpy.PCG64"


class ModelError(ValueError):
    pass


class ParseError(ModelError):
    def __init__(self, message: str, line: int | None = None, token: str | None = None):
        where = f" at line {line}" if line is not None else ""
        what = f" (token {token!r})" if token is not None else ""
        super().__init__(f"{message}{where}{what}")
        self.line = line
        self.token = token


class EvidenceConflictError(ModelError):
    pass


class GenerationError(ModelError):
    pass


@dataclass(frozen=True)
class Model:
    """Variables with cardinalities plus a list of factors over them.

    ``evidence`` records variables that were observed and sliced out of every
    factor; those variables keep their index but no longer occur in any scope.
    """

    cardinalities: tuple[int, ...]
    factors: tuple[Factor, ...]
    evidence: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "cardinalities", tuple(int(c) for c in self.cardinalities))
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "evidence", dict(self.evidence))
        if not self.factors:
            raise ModelError("model has no factors")
        if any(c <= 0 for c in self.cardinalities):
            raise ModelError("cardinalities must be positive")
        n = len(self.cardinalities)
        seen: set[int] = set()
        for i, f in enumerate(self.factors):
            for v, c in zip(f.scope, f.shape):
                if v >= n:
                    raise ModelError(f"factor {i} mentions variable {v} but the model has {n}")
                if c != self.cardinalities[v]:
                    raise ModelError(
                        f"factor {i}: variable {v} has cardinality {self.cardinalities[v]}, table uses {c}"
                    )
                if v in self.evidence:
                    raise ModelError(f"factor {i} mentions observed variable {v}")
            seen.update(f.scope)
        missing = [v for v in range(n) if v not in seen and v not in self.evidence]
        if missing:
            raise ModelError(f"isolated variables {missing}")

    @property
    def num_variables(self) -> int:
        return len(self.cardinalities)

    @property
    def variables(self) -> list[int]:
        """Unobserved variables."""
        return [v for v in range(self.num_variables) if v not in self.evidence]

    def joint_size(self) -> int:
        return math.prod(self.cardinalities[v] for v in self.variables)


def _tokens(stream: TextIO):
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0]
        for tok in line.split():
            yield lineno, tok


class _Reader:
    def __init__(self, stream: TextIO):
        self._it = _tokens(stream)
        self.line = 0

    def next(self, what: str) -> str:
        try:
            self.line, tok = next(self._it)
        except StopIteration:
            raise ParseError(f"unexpected end of input while reading {what}", self.line) from None
        return tok

    def int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise ParseError(f"expected integer for {what}", self.line, tok) from None

    def float(self, what: str) -> float:
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise ParseError(f"expected real for {what}", self.line, tok) from None

    def exhausted(self) -> bool:
        try:
            self.line, tok = next(self._it)
        except StopIteration:
            return True
        raise ParseError("trailing content", self.line, tok)


def load_model(stream: TextIO | str) -> Model:
    """Parse the ``MARKOV`` text format into a :class:`Model`."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    r = _Reader(stream)
    head = r.next("header")
    if head.upper() != "MARKOV":
        raise ParseError("expected MARKOV header", r.line, head)
    n = r.int("variable count")
    if n <= 0:
        raise ParseError("variable count must be positive", r.line)
    cards = []
    for i in range(n):
        c = r.int(f"cardinality of variable {i}")
        if c <= 0:
            raise ParseError(f"cardinality of variable {i} must be positive", r.line)
        cards.append(c)
    m = r.int("factor count")
    if m <= 0:
        raise ParseError("model must contain at least one factor", r.line)
    scopes = []
    for j in range(m):
        k = r.int(f"arity of factor {j}")
        if k < 0:
            raise ParseError(f"negative arity for factor {j}", r.line)
        scope = []
        for _ in range(k):
            v = r.int(f"scope of factor {j}")
            if not 0 <= v < n:
                raise ParseError(f"factor {j} mentions unknown variable {v}", r.line)
            scope.append(v)
        if len(set(scope)) != len(scope):
            raise ParseError(f"factor {j} repeats a variable", r.line)
        scopes.append(tuple(scope))
    factors = []
    for j, scope in enumerate(scopes):
        count = r.int(f"table size of factor {j}")
        expected = math.prod(cards[v] for v in scope)
        if count != expected:
            raise ParseError(f"factor {j} declares {count} values, scope needs {expected}", r.line)
        vals = [r.float(f"table of factor {j}") for _ in range(count)]
        if any(x < 0 or not math.isfinite(x) for x in vals):
            raise ParseError(f"factor {j} has a negative or non-finite value", r.line)
        factors.append(Factor(scope, vals, shape=[cards[v] for v in scope]))
    r.exhausted()
    return Model(tuple(cards), tuple(factors))


def save_model(model: Model, stream: TextIO | None = None) -> str:
    """Write ``model`` in the ``MARKOV`` format (17 significant digits)."""
    out = io.StringIO()
    out.write("MARKOV\n")
    out.write(f"{model.num_variables}\n")
    out.write(" ".join(str(c) for c in model.cardinalities) + "\n")
    out.write(f"{len(model.factors)}\n")
    for f in model.factors:
        out.write(" ".join(str(x) for x in (len(f.scope), *f.scope)) + "\n")
    for f in model.factors:
        out.write(f"\n{f.size}\n")
        out.write(" ".join(f"{x:.17g}" for x in f.flat) + "\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def load_evidence(stream: TextIO | str) -> dict[int, int]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    r = _Reader(stream)
    try:
        count = r.int("evidence count")
    except ParseError:
        # an empty file means no evidence
        return {}
    ev: dict[int, int] = {}
    for _ in range(count):
        v = r.int("evidence variable")
        x = r.int("evidence value")
        if v in ev:
            raise ParseError(f"variable {v} observed twice", r.line)
        ev[v] = x
    r.exhausted()
    return ev


def load_indices(stream: TextIO | str) -> list[int]:
    """Whitespace-separated variable indices (query and order files)."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    out = []
    for line, tok in _tokens(stream):
        try:
            out.append(int(tok))
        except ValueError:
            raise ParseError("expected variable index", line, tok) from None
    return out


def apply_evidence(model: Model, evidence: Mapping[int, int], queries: Iterable[int] = ()) -> Model:
    """Slice every factor at the observed values and mark those variables observed."""
    if not evidence:
        return model
    queries = set(queries)
    for v, x in evidence.items():
        if not 0 <= v < model.num_variables:
            raise ModelError(f"evidence on unknown variable {v}")
        if v in model.evidence:
            raise ModelError(f"variable {v} already observed")
        if not 0 <= x < model.cardinalities[v]:
            raise ModelError(f"evidence value {x} out of range for variable {v}")
        if v in queries:
            raise EvidenceConflictError(f"variable {v} is both queried and observed")
    factors = []
    for f in model.factors:
        for v in [v for v in f.scope if v in evidence]:
            f = reduce(f, v, evidence[v])
        factors.append(f)
    merged = dict(model.evidence)
    merged.update(evidence)
    return Model(model.cardinalities, tuple(factors), merged)


@dataclass(frozen=True)
class GeneratorConfig:
    layer_sizes: tuple[int, ...] = (1000, 500, 250)
    domain_size: int = 30
    parents_per_child: int = 2
    prior_share_period: int = 25
    max_parent_fanout: int = 1_000_000
    noise_std: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if not self.layer_sizes or any(s <= 0 for s in self.layer_sizes):
            raise GenerationError("layer sizes must be a nonempty list of positive integers")
        for name in ("domain_size", "parents_per_child", "prior_share_period", "max_parent_fanout"):
            if getattr(self, name) <= 0:
                raise GenerationError(f"{name} must be positive")
        if self.noise_std < 0:
            raise GenerationError("noise_std must be non-negative")
        for prev, cur in zip(self.layer_sizes, self.layer_sizes[1:]):
            if self.parents_per_child > prev:
                raise GenerationError(
                    f"{self.parents_per_child} parents per child but previous layer has {prev} variables"
                )
            if cur * self.parents_per_child > prev * self.max_parent_fanout:
                raise GenerationError(
                    f"{cur} children x {self.parents_per_child} parents exceeds "
                    f"{prev} parents x fanout {self.max_parent_fanout}"
                )


def _simplex_rows(rng: np.random.Generator, rows: int, k: int) -> np.ndarray:
    return rng.dirichlet(np.ones(k), size=rows)


def generate_layered_bn(cfg: GeneratorConfig) -> tuple[Model, list[int]]:
    """Layered Bayesian network with shared priors and per-layer shared CPTs.

    Layer-1 variables in the same group of ``prior_share_period`` consecutive
    positions share one prior table. Every CPT of a deeper layer is the same
    table, with scope ``(child, parent_1, ..., parent_k)`` and each parent
    configuration's column drawn uniformly from the simplex. The query set is
    the last layer.
    """
    cfg.validate()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    d = cfg.domain_size
    offsets = np.cumsum((0,) + tuple(cfg.layer_sizes))
    factors: list[Factor] = []

    n_groups = -(-cfg.layer_sizes[0] // cfg.prior_share_period)
    priors = _simplex_rows(rng, n_groups, d)
    for p in range(cfg.layer_sizes[0]):
        factors.append(Factor((p,), priors[p // cfg.prior_share_period]))

    k = cfg.parents_per_child
    for layer in range(1, len(cfg.layer_sizes)):
        # rows index parent configurations; transpose puts the child axis first
        cols = _simplex_rows(rng, d**k, d)
        table = cols.T.reshape((d,) * (k + 1))
        prev = list(range(offsets[layer - 1], offsets[layer]))
        used = {p: 0 for p in prev}
        for child in range(offsets[layer], offsets[layer + 1]):
            avail = [p for p in prev if used[p] < cfg.max_parent_fanout]
            if len(avail) < k:
                raise GenerationError(
                    f"variable {child}: only {len(avail)} parents below fanout limit, need {k}"
                )
            parents = sorted(int(x) for x in rng.choice(avail, size=k, replace=False))
            for p in parents:
                used[p] += 1
            factors.append(Factor((child, *parents), table))

    if cfg.noise_std > 0:
        noisy = []
        for f in factors:
            vals = f.values + rng.normal(0.0, cfg.noise_std, size=f.shape)
            noisy.append(Factor(f.scope, np.clip(vals, 0.0, None)))
        factors = noisy

    model = Model(tuple([d] * int(offsets[-1])), tuple(factors))
    queries = list(range(offsets[-2], offsets[-1]))
    return model, queries


def generator_metadata(cfg: GeneratorConfig) -> dict:
    return {
        "layers": list(cfg.layer_sizes),
        "domain": cfg.domain_size,
        "parents": cfg.parents_per_child,
        "period": cfg.prior_share_period,
        "fanout": cfg.max_parent_fanout,
        "noise": cfg.noise_std,
        "seed": cfg.seed,
        "cpt_law": CPT_LAW,
        "noise_law": NOISE_LAW,
        "prng": PRNG_NAME,
    }


def parse_int_list(text: str) -> list[int]:
    return [int(t) for t in re.split(r"[,\s]+", text.strip()) if t]
