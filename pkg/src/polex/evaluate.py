"""Brute-force evaluation of queries and predicates on concrete inputs.

This is the ground-truth semantics everything else is checked against:
set semantics (results are deduplicated), two-valued null handling
(a comparison with a NULL operand is false).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .instance import ConcreteInput, Row
from .normal import CountQuery, ExecutableQuery, LeftJoinQuery, NormalFormQuery, PlainQuery
from .schema import Schema
from .terms import (
    And,
    BoolCol,
    BoolLit,
    Cmp,
    Col,
    IntLit,
    IsNull,
    Not,
    NullLit,
    PlaceholderRef,
    Predicate,
    RequestParam,
    RowCol,
    Scalar,
    SessionParam,
    Term,
    TruePred,
    cmp_eval,
)


class EvalError(Exception):
    pass


@dataclass
class ScalarEnv:
    """Resolves scalars to concrete values during one execution."""

    session: dict[str, int] = field(default_factory=dict)
    request: dict[str, int] = field(default_factory=dict)
    rows: dict[int, Row] = field(default_factory=dict)  # query index -> result row
    placeholders: tuple = ()

    def lookup(self, s: Scalar):
        if isinstance(s, IntLit):
            return s.value
        if isinstance(s, BoolLit):
            return 1 if s.value else 0
        if isinstance(s, NullLit):
            return None
        if isinstance(s, SessionParam):
            return self.session[s.name]
        if isinstance(s, RequestParam):
            return self.request[s.name]
        if isinstance(s, RowCol):
            return self.rows[s.query_index][s.column_index]
        if isinstance(s, PlaceholderRef):
            return self.placeholders[s.position - 1]
        raise EvalError(f"cannot evaluate scalar {s!r}")


def eval_pred(p: Predicate, resolve) -> bool:
    """Two-valued predicate evaluation; `resolve` maps a Term to int | None."""
    if isinstance(p, TruePred):
        return True
    if isinstance(p, Cmp):
        a = resolve(p.left)
        b = resolve(p.right)
        if a is None or b is None:
            return False
        return cmp_eval(p.op, a, b)
    if isinstance(p, IsNull):
        return resolve(p.term) is None
    if isinstance(p, BoolCol):
        v = resolve(p.term)
        return v is not None and v == 1
    if isinstance(p, Not):
        return not eval_pred(p.inner, resolve)
    if isinstance(p, And):
        return eval_pred(p.left, resolve) and eval_pred(p.right, resolve)
    raise EvalError(f"not a predicate: {p!r}")


def _row_resolver(combined: Row, env: ScalarEnv):
    def resolve(t: Term):
        if isinstance(t, Col):
            return combined[t.index]
        return env.lookup(t)

    return resolve


def eval_nf(
    nf: NormalFormQuery,
    input: ConcreteInput,
    schema: Schema,
    env: ScalarEnv | None = None,
) -> frozenset:
    """Evaluate a normal-form query: filtered cross product, projected, deduplicated."""
    env = env or ScalarEnv()
    table_rows = [input.tables[t] for t in nf.sources]
    out = set()
    for combo in itertools.product(*table_rows):
        combined: Row = tuple(itertools.chain.from_iterable(combo))
        if eval_pred(nf.filter, _row_resolver(combined, env)):
            out.add(tuple(combined[j] for j in nf.projection))
    return frozenset(out)


def eval_executable(
    q: ExecutableQuery,
    input: ConcreteInput,
    schema: Schema,
    env: ScalarEnv | None = None,
) -> frozenset:
    env = env or ScalarEnv()
    if isinstance(q, PlainQuery):
        return eval_nf(q.nf, input, schema, env)
    if isinstance(q, CountQuery):
        n = 0
        for row in input.tables[q.source]:
            if eval_pred(q.filter, _row_resolver(row, env)):
                n += 1
        return frozenset({(n,)})
    if isinstance(q, LeftJoinQuery):
        left_rows = [input.tables[t] for t in q.left_sources]
        right_rows = input.tables[q.right_source]
        right_arity = schema.table(q.right_source).arity
        out = set()
        for combo in itertools.product(*left_rows):
            left: Row = tuple(itertools.chain.from_iterable(combo))
            matches = [
                r for r in right_rows if eval_pred(q.on, _row_resolver(left + r, env))
            ]
            candidates = [left + r for r in matches] if matches else [left + (None,) * right_arity]
            for combined in candidates:
                if eval_pred(q.where, _row_resolver(combined, env)):
                    out.add(tuple(combined[j] for j in q.projection))
        return frozenset(out)
    raise EvalError(f"not an executable query: {q!r}")


def eval_branch(p: Predicate, env: ScalarEnv) -> bool:
    """Evaluate a branch condition (predicate over scalars only)."""
    return eval_pred(p, env.lookup)
