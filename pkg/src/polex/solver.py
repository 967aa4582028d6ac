"""Symbolic encoding of bounded databases, queries, and path conditions.

Tables become conditional tables: a fixed number of symbolic rows (the
table bound, default 2), each with a presence guard, integer value
symbols per column, and a null-flag symbol per nullable column.  Rows
whose presence guard is false are unconstrained.  All value symbols are
restricted to a configurable range (default [0, 7]); satisfiability
answers are relative to that range, which is harmless here because only
comparisons among a bounded set of symbols matter.

A query over such an instance is encoded by enumerating the combinations
of rows its FROM product can draw: `nonEmpty` is the disjunction of the
combination guards, result-row symbols are defined by guarded equalities,
and `atMostOne` asserts that no two distinct combinations both match
(the driver asserts it to keep every query at one row or none).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .constraints import Constraint, Containment, LiteralRelation, Unique, render_constraint
from .fdsolver import (
    FALSE_F,
    TRUE_F,
    CdclBackend,
    CheckResult,
    VarPool,
    bvar,
    const,
    eval_formula,
    fcmp,
    feq,
    iff,
    implies,
    ivar,
    land,
    lnot,
    lor,
)
from .instance import ConcreteInput
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
    TruePred,
)


class EncodeError(Exception):
    pass


# A symbolic value is (term, null_formula): the term is meaningful only
# where the null formula is false.
SymValue = tuple


@dataclass
class SymRow:
    presence: int  # bool vid
    values: tuple[int, ...]  # int vids
    nulls: tuple[int | None, ...]  # bool vid per nullable column


@dataclass
class SymTable:
    name: str
    rows: tuple[SymRow, ...]


@dataclass
class SymInstance:
    prefix: str
    bound: int
    tables: dict[str, SymTable]


@dataclass
class SymEnv:
    """Scalar resolution context: parameter symbols and prior query results."""

    params: dict[str, int] = field(default_factory=dict)  # name -> int vid
    rows: dict[int, tuple[SymValue, ...]] = field(default_factory=dict)
    placeholders: tuple[SymValue, ...] = ()

    def scalar(self, s: Scalar) -> SymValue:
        if isinstance(s, IntLit):
            return (const(s.value), FALSE_F)
        if isinstance(s, BoolLit):
            return (const(1 if s.value else 0), FALSE_F)
        if isinstance(s, NullLit):
            return (const(0), TRUE_F)
        if isinstance(s, (SessionParam, RequestParam)):
            if s.name not in self.params:
                raise EncodeError(f"parameter {s.name!r} has no symbol")
            return (ivar(self.params[s.name]), FALSE_F)
        if isinstance(s, RowCol):
            row = self.rows.get(s.query_index)
            if row is None:
                raise EncodeError(f"no result symbols for query {s.query_index}")
            return row[s.column_index]
        if isinstance(s, PlaceholderRef):
            if s.position > len(self.placeholders):
                raise EncodeError(f"unbound placeholder ?{s.position}")
            return self.placeholders[s.position - 1]
        raise EncodeError(f"cannot encode scalar {s!r}")


def _col_domain(value_range: tuple[int, int], col_type: str) -> tuple[int, int]:
    if col_type == "bool":
        return (0, 1)
    return value_range


def encode_instance(
    schema: Schema,
    constraints: list[Constraint],
    bound: int,
    pool: VarPool,
    value_range: tuple[int, int] = (0, 7),
    prefix: str = "",
) -> tuple[SymInstance, list[tuple[str, tuple]]]:
    """Allocate a bounded symbolic instance and its constraint formulas."""
    if bound < 1:
        raise EncodeError("table bound must be >= 1")
    tables = {}
    for t in schema.tables:
        rows = []
        for r in range(bound):
            p = pool.new_bool(f"{prefix}{t.name}.r{r}.present")
            values = []
            nulls: list[int | None] = []
            for c in t.columns:
                lo, hi = _col_domain(value_range, c.type)
                values.append(pool.new_int(f"{prefix}{t.name}.r{r}.{c.name}", lo, hi))
                nulls.append(pool.new_bool(f"{prefix}{t.name}.r{r}.{c.name}.null") if c.nullable else None)
            rows.append(SymRow(p, tuple(values), tuple(nulls)))
        tables[t.name] = SymTable(t.name, tuple(rows))
    inst = SymInstance(prefix, bound, tables)
    labeled = []
    # Row order within a conditional table is irrelevant, so force absent
    # rows to trail present ones; this halves the symmetric search space.
    for t in schema.tables:
        rows = tables[t.name].rows
        order = land(
            *[implies(bvar(rows[r + 1].presence), bvar(rows[r].presence)) for r in range(bound - 1)]
        )
        if order != TRUE_F:
            labeled.append((f"{prefix}rows:{t.name}", order))
    for c in constraints:
        labeled.append((f"{prefix}{render_constraint(c)}", encode_constraint(c, inst, schema)))
    return inst, labeled


def _row_values(inst: SymInstance, table: str, row_idx: int) -> tuple[SymValue, ...]:
    row = inst.tables[table].rows[row_idx]
    out = []
    for v, n in zip(row.values, row.nulls):
        out.append((ivar(v), FALSE_F if n is None else bvar(n)))
    return tuple(out)


def sym_value_eq(a: SymValue, b: SymValue):
    """Identity equality: both null, or both non-null with equal values."""
    ta, na = a
    tb, nb = b
    return lor(land(na, nb), land(lnot(na), lnot(nb), feq(ta, tb)))


def encode_pred(p: Predicate, colmap, env: SymEnv):
    """Two-valued truth of a predicate; `colmap` maps Col ordinals to SymValues."""

    def value(term) -> SymValue:
        if isinstance(term, Col):
            return colmap[term.index]
        return env.scalar(term)

    if isinstance(p, TruePred):
        return TRUE_F
    if isinstance(p, Cmp):
        (ta, na), (tb, nb) = value(p.left), value(p.right)
        return land(lnot(na), lnot(nb), fcmp(p.op, ta, tb))
    if isinstance(p, IsNull):
        _, n = value(p.term)
        return n
    if isinstance(p, BoolCol):
        t, n = value(p.term)
        return land(lnot(n), feq(t, const(1)))
    if isinstance(p, Not):
        return lnot(encode_pred(p.inner, colmap, env))
    if isinstance(p, And):
        return land(encode_pred(p.left, colmap, env), encode_pred(p.right, colmap, env))
    raise EncodeError(f"cannot encode predicate {p!r}")


def result_pairs(
    nf: NormalFormQuery, inst: SymInstance, schema: Schema, env: SymEnv
) -> list[tuple[tuple, tuple[SymValue, ...]]]:
    """(guard, projected tuple) for every row combination of a PSJ query."""
    out = []
    bound = inst.bound
    for combo in itertools.product(range(bound), repeat=len(nf.sources)):
        colmap: list[SymValue] = []
        presences = []
        for src, ri in zip(nf.sources, combo):
            presences.append(bvar(inst.tables[src].rows[ri].presence))
            colmap.extend(_row_values(inst, src, ri))
        guard = land(*presences, encode_pred(nf.filter, colmap, env))
        tup = tuple(colmap[j] for j in nf.projection)
        out.append((guard, tup))
    return out


def _leftjoin_pairs(q: LeftJoinQuery, inst: SymInstance, schema: Schema, env: SymEnv):
    """Candidates: matched left+right combinations plus unmatched-left rows."""
    bound = inst.bound
    right_arity = schema.table(q.right_source).arity
    out = []
    for combo in itertools.product(range(bound), repeat=len(q.left_sources)):
        left_cols: list[SymValue] = []
        left_pres = []
        for src, ri in zip(q.left_sources, combo):
            left_pres.append(bvar(inst.tables[src].rows[ri].presence))
            left_cols.extend(_row_values(inst, src, ri))
        match_guards = []
        for rj in range(bound):
            right_cols = list(_row_values(inst, q.right_source, rj))
            colmap = left_cols + right_cols
            m = land(
                bvar(inst.tables[q.right_source].rows[rj].presence),
                encode_pred(q.on, colmap, env),
            )
            match_guards.append(m)
            guard = land(*left_pres, m, encode_pred(q.where, colmap, env))
            out.append((guard, tuple(colmap[j] for j in q.projection)))
        # Unmatched: every right row absent or failing the ON condition.
        null_right: list[SymValue] = [(const(0), TRUE_F)] * right_arity
        colmap = left_cols + null_right
        guard = land(
            *left_pres,
            *[lnot(m) for m in match_guards],
            encode_pred(q.where, colmap, env),
        )
        out.append((guard, tuple(colmap[j] for j in q.projection)))
    return out


@dataclass
class QueryEncoding:
    non_empty: tuple
    at_most_one: tuple
    result: tuple[SymValue, ...]  # symbols for the (unique) result row
    defs: list[tuple]  # guarded definitions of the result symbols


def encode_query(
    q,
    params: tuple[Scalar, ...],
    inst: SymInstance,
    schema: Schema,
    env: SymEnv,
    pool: VarPool,
    tag: str,
    value_range: tuple[int, int] = (0, 7),
) -> QueryEncoding:
    """Encode one query occurrence; `tag` names the fresh result symbols.

    `q` is an ExecutableQuery or a bare NormalFormQuery; placeholder
    scalars are taken from `params`.
    """
    # The query's own params are record scalars; bind them as placeholders.
    penv = SymEnv(env.params, dict(env.rows), tuple(env.scalar(s) for s in params))

    if isinstance(q, NormalFormQuery):
        q = PlainQuery(q, ())
    if isinstance(q, PlainQuery):
        pairs = result_pairs(q.nf, inst, schema, penv)
        result_meta = [(f"{tag}.c{i}", True) for i in range(len(q.nf.projection))]
    elif isinstance(q, LeftJoinQuery):
        pairs = _leftjoin_pairs(q, inst, schema, penv)
        result_meta = [(f"{tag}.c{i}", True) for i in range(len(q.projection))]
    elif isinstance(q, CountQuery):
        # A count always returns exactly one row; its value is never
        # referenced (the DSL forbids it), so the symbol is unconstrained.
        v = pool.new_int(f"{tag}.count", 0, max(inst.bound, 1))
        return QueryEncoding(TRUE_F, TRUE_F, ((ivar(v), FALSE_F),), [])
    else:
        raise EncodeError(f"cannot encode query {q!r}")

    non_empty = lor(*[g for g, _ in pairs])
    amo_parts = []
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            amo_parts.append(lnot(land(pairs[i][0], pairs[j][0])))
    at_most_one = land(*amo_parts)

    n_cols = len(result_meta)
    result: list[SymValue] = []
    defs: list[tuple] = []
    for i, (name, _) in enumerate(result_meta):
        v = pool.new_int(name, *value_range)
        n = pool.new_bool(f"{name}.null")
        result.append((ivar(v), bvar(n)))
    for guard, tup in pairs:
        for i in range(n_cols):
            t, nf_ = tup[i]
            rv, rn = result[i]
            defs.append(implies(guard, iff(rn, nf_)))
            defs.append(implies(land(guard, lnot(nf_)), feq(rv, t)))
    return QueryEncoding(non_empty, at_most_one, tuple(result), defs)


def encode_constraint(c: Constraint, inst: SymInstance, schema: Schema):
    env = SymEnv()
    if isinstance(c, Unique):
        t = schema.table(c.table)
        idxs = [t.column_index(name) for name in c.columns]
        rows = inst.tables[c.table].rows
        parts = []
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                vi = _row_values(inst, c.table, i)
                vj = _row_values(inst, c.table, j)
                key_eq = land(
                    *[
                        land(lnot(vi[k][1]), lnot(vj[k][1]), feq(vi[k][0], vj[k][0]))
                        for k in idxs
                    ]
                )
                parts.append(lnot(land(bvar(rows[i].presence), bvar(rows[j].presence), key_eq)))
        return land(*parts)
    if isinstance(c, Containment):
        left_pairs = result_pairs(c.left, inst, schema, env)
        if isinstance(c.right, LiteralRelation):
            right_pairs = [
                (TRUE_F, tuple((const(v if v is not None else 0), TRUE_F if v is None else FALSE_F) for v in row))
                for row in c.right.rows
            ]
        else:
            right_pairs = result_pairs(c.right, inst, schema, env)
        parts = []
        for g, tup in left_pairs:
            membership = lor(
                *[
                    land(g2, *[sym_value_eq(a, b) for a, b in zip(tup, tup2)])
                    for g2, tup2 in right_pairs
                ]
            )
            parts.append(implies(g, membership))
        return land(*parts)
    raise EncodeError(f"cannot encode constraint {c!r}")


# ---------------------------------------------------------------------------
# Verdicts and model extraction


@dataclass
class SolverVerdict:
    status: str  # "sat" | "unsat" | "unknown"
    model: dict | None = None
    core: list[str] | None = None


def check(
    pool: VarPool,
    labeled: list[tuple[str, tuple]],
    hard: list[tuple] = (),
    backend=None,
    timeout_s: float = 5.0,
) -> SolverVerdict:
    """Run the pluggable backend; Sat models satisfy all formulas, Unsat
    cores re-check as unsat, timeouts surface as Unknown."""
    backend = backend or CdclBackend()
    r: CheckResult = backend.check(pool, labeled, list(hard), timeout_s=timeout_s)
    return SolverVerdict(r.status, r.model, r.core)


def model_to_input(
    model: dict,
    inst: SymInstance,
    schema: Schema,
    env: SymEnv,
    input_id: str = "",
    handler: str = "",
    request_params: tuple[str, ...] = (),
) -> ConcreteInput:
    """Materialize present rows and parameter values from a Sat model."""
    tables = {}
    for t in schema.tables:
        rows = []
        for row in inst.tables[t.name].rows:
            if not model[row.presence]:
                continue
            vals = []
            for v, n in zip(row.values, row.nulls):
                if n is not None and model[n]:
                    vals.append(None)
                else:
                    vals.append(model[v])
            rows.append(tuple(vals))
        tables[t.name] = tuple(rows)
    session = {name: model[env.params[name]] for name in ("MyUserId", "Now") if name in env.params}
    session.setdefault("MyUserId", 0)
    session.setdefault("Now", 0)
    request = {name: model[env.params[name]] for name in request_params}
    return ConcreteInput(input_id, handler, tables, session, request)
