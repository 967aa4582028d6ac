"""Database constraints: uniqueness and query containment.

Two general forms cover everything: a column set is unique, or one
query's result is contained in another's (or in a literal-row relation,
allowed only on the right side).  Shorthands for the common cases
(non-null, foreign key, domain, fixed value) expand into these forms.

Config file format, one constraint per line, `#` comments::

    unique roles(user_id, course_id)
    fk grades.course_id -> courses.id
    nonnull roles.user_id
    domain profiles.language in {'en', 'fr'}
    fixed items.kind = 3
    contain SELECT a FROM t in SELECT b FROM u
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .evaluate import eval_nf
from .instance import ConcreteInput
from .lexutil import SourceError, TokenStream, tokenize, unquote
from .normal import NormalFormQuery, to_normal_form
from .schema import Interner, Schema, SchemaError
from .sqlparser import parse_sql
from .terms import (
    Col,
    IsNull,
    Not,
    PlaceholderRef,
    RequestParam,
    SessionParam,
    TRUE,
    iter_terms,
)


class ConstraintError(Exception):
    pass


@dataclass(frozen=True)
class LiteralRelation:
    arity: int
    rows: tuple[tuple, ...]


@dataclass(frozen=True)
class Unique:
    table: str
    columns: tuple[str, ...]


@dataclass(frozen=True)
class Containment:
    left: NormalFormQuery
    right: Union[NormalFormQuery, LiteralRelation]
    label: str


Constraint = Union[Unique, Containment]


@dataclass(frozen=True)
class NonNull:
    table: str
    column: str


@dataclass(frozen=True)
class ForeignKey:
    table: str
    column: str
    ref_table: str
    ref_column: str


@dataclass(frozen=True)
class DomainConstraint:
    table: str
    column: str
    values: tuple[int, ...]


@dataclass(frozen=True)
class FixedValue:
    table: str
    column: str
    value: int


ConstraintShorthand = Union[NonNull, ForeignKey, DomainConstraint, FixedValue]


def _check_query_side(nf: NormalFormQuery) -> None:
    for t in iter_terms(nf.filter):
        if isinstance(t, (SessionParam, RequestParam, PlaceholderRef)):
            raise ConstraintError(f"constraint query may not reference {t!r}")


def make_containment(left: NormalFormQuery, right, label: str) -> Containment:
    _check_query_side(left)
    right_arity = right.arity if isinstance(right, LiteralRelation) else len(right.projection)
    if not isinstance(right, LiteralRelation):
        _check_query_side(right)
    if len(left.projection) != right_arity:
        raise ConstraintError(f"containment sides have different arity in {label!r}")
    return Containment(left, right, label)


# ---------------------------------------------------------------------------
# Shorthand expansion


def expand_shorthand(s: ConstraintShorthand, schema: Schema) -> list[Constraint]:
    try:
        if isinstance(s, NonNull):
            col = schema.table(s.table).column(s.column)
            if not col.nullable:
                return []  # already guaranteed by the schema
            ci = schema.table(s.table).column_index(s.column)
            left = NormalFormQuery((), IsNull(Col(ci)), (s.table,))
            return [make_containment(left, LiteralRelation(0, ()), render_constraint(s))]
        if isinstance(s, ForeignKey):
            t = schema.table(s.table)
            ci = t.column_index(s.column)
            rt = schema.table(s.ref_table)
            rci = rt.column_index(s.ref_column)
            left = NormalFormQuery((ci,), Not(IsNull(Col(ci))), (s.table,))
            right = NormalFormQuery((rci,), TRUE, (s.ref_table,))
            return [make_containment(left, right, render_constraint(s))]
        if isinstance(s, DomainConstraint):
            ci = schema.table(s.table).column_index(s.column)
            left = NormalFormQuery((ci,), TRUE, (s.table,))
            rows = tuple((v,) for v in s.values)
            return [make_containment(left, LiteralRelation(1, rows), render_constraint(s))]
        if isinstance(s, FixedValue):
            return expand_shorthand(DomainConstraint(s.table, s.column, (s.value,)), schema)
    except SchemaError as e:
        raise ConstraintError(str(e)) from e
    raise ConstraintError(f"not a shorthand: {s!r}")


def expand_all(items: list, schema: Schema) -> list[Constraint]:
    out: list[Constraint] = []
    for item in items:
        if isinstance(item, (Unique, Containment)):
            if isinstance(item, Unique):
                t = schema.table(item.table)
                for c in item.columns:
                    t.column(c)
            out.append(item)
        else:
            out.extend(expand_shorthand(item, schema))
    return out


# ---------------------------------------------------------------------------
# Auto-generation from the schema


def generate_constraints(schema: Schema) -> list:
    """Uniques, foreign keys, and non-nulls implied by schema declarations."""
    out: list = []
    for t in schema.tables:
        for c in t.columns:
            if c.unique:
                out.append(Unique(t.name, (c.name,)))
        for group in t.composite_uniques:
            out.append(Unique(t.name, group))
    for t in schema.tables:
        for c in t.columns:
            if c.foreign_key is not None:
                out.append(ForeignKey(t.name, c.name, c.foreign_key[0], c.foreign_key[1]))
    for t in schema.tables:
        for c in t.columns:
            if not c.nullable:
                out.append(NonNull(t.name, c.name))
    return out


# ---------------------------------------------------------------------------
# Serialization


def render_constraint(item) -> str:
    if isinstance(item, Unique):
        return f"unique {item.table}({', '.join(item.columns)})"
    if isinstance(item, NonNull):
        return f"nonnull {item.table}.{item.column}"
    if isinstance(item, ForeignKey):
        return f"fk {item.table}.{item.column} -> {item.ref_table}.{item.ref_column}"
    if isinstance(item, DomainConstraint):
        return f"domain {item.table}.{item.column} in {{{', '.join(str(v) for v in item.values)}}}"
    if isinstance(item, FixedValue):
        return f"fixed {item.table}.{item.column} = {item.value}"
    if isinstance(item, Containment):
        return item.label
    raise ConstraintError(f"cannot render {item!r}")


def render_constraint_file(items: list) -> str:
    lines = ["# database constraints (editable)"]
    lines.extend(render_constraint(i) for i in items)
    return "\n".join(lines) + "\n"


def _parse_value(ts: TokenStream, interner: Interner) -> int:
    tok = ts.peek()
    if tok.kind == "int":
        ts.next()
        return int(tok.text)
    if tok.kind == "string":
        ts.next()
        return interner.intern(unquote(tok.text))
    if ts.accept_keyword("TRUE"):
        return 1
    if ts.accept_keyword("FALSE"):
        return 0
    raise SourceError(f"expected a value, got {tok.text!r}", tok.line, tok.col)


def _parse_col(ts: TokenStream) -> tuple[str, str]:
    table = ts.expect_ident("table").text
    ts.expect_punct(".")
    column = ts.expect_ident("column").text
    return table, column


def parse_constraint_line(line: str, schema: Schema, interner: Interner):
    """Parse one config line into a Constraint or ConstraintShorthand."""
    ts = TokenStream(tokenize(line))
    head = ts.expect_ident("constraint kind").text.lower()
    if head == "unique":
        table = ts.expect_ident("table").text
        ts.expect_punct("(")
        cols = [ts.expect_ident("column").text]
        while ts.accept_punct(","):
            cols.append(ts.expect_ident("column").text)
        ts.expect_punct(")")
        ts.expect_eof()
        return Unique(table, tuple(cols))
    if head == "fk":
        table, column = _parse_col(ts)
        ts.expect_punct("->")
        ref_table, ref_column = _parse_col(ts)
        ts.expect_eof()
        return ForeignKey(table, column, ref_table, ref_column)
    if head == "nonnull":
        table, column = _parse_col(ts)
        ts.expect_eof()
        return NonNull(table, column)
    if head == "domain":
        table, column = _parse_col(ts)
        ts.expect_keyword("IN")
        ts.expect_punct("{")
        values = [_parse_value(ts, interner)]
        while ts.accept_punct(","):
            values.append(_parse_value(ts, interner))
        ts.expect_punct("}")
        ts.expect_eof()
        return DomainConstraint(table, column, tuple(values))
    if head == "fixed":
        table, column = _parse_col(ts)
        ts.expect_punct("=")
        value = _parse_value(ts, interner)
        ts.expect_eof()
        return FixedValue(table, column, value)
    if head == "contain":
        rest = line.strip()[len("contain"):].strip()
        parts = _split_contain(rest)
        left = to_normal_form(parse_sql(parts[0]), schema)
        right = to_normal_form(parse_sql(parts[1]), schema)
        return make_containment(left, right, f"contain {parts[0]} in {parts[1]}")
    raise ConstraintError(f"unknown constraint kind {head!r}")


def _split_contain(text: str) -> tuple[str, str]:
    toks = tokenize(text)
    hits = [t for t in toks if t.kind == "ident" and t.text.upper() == "IN"]
    if len(hits) != 1:
        raise ConstraintError("contain constraint needs exactly one top-level 'in'")
    # Positions are 1-based columns on a single line.
    col = hits[0].col - 1
    return text[:col].strip(), text[col + 2 :].strip()


def parse_constraint_file(text: str, schema: Schema, interner: Interner) -> list:
    items = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        items.append(parse_constraint_line(line, schema, interner))
    return items


# ---------------------------------------------------------------------------
# Validation of concrete instances


def _unique_violated(input: ConcreteInput, schema: Schema, u: Unique) -> bool:
    t = schema.table(u.table)
    idxs = [t.column_index(c) for c in u.columns]
    rows = input.tables[u.table]
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            key_i = [rows[i][k] for k in idxs]
            key_j = [rows[j][k] for k in idxs]
            if any(v is None for v in key_i + key_j):
                continue  # null keys never collide, as in SQL
            if key_i == key_j:
                return True
    return False


def validate_instance(
    input: ConcreteInput, constraints: list[Constraint], schema: Schema
) -> tuple[bool, str | None]:
    """Brute-force check; returns (satisfied, first violation description)."""
    for c in constraints:
        if isinstance(c, Unique):
            if _unique_violated(input, schema, c):
                return False, f"unique violated: {render_constraint(c)}"
        elif isinstance(c, Containment):
            left = eval_nf(c.left, input, schema)
            if isinstance(c.right, LiteralRelation):
                right = frozenset(c.right.rows)
            else:
                right = eval_nf(c.right, input, schema)
            if not left <= right:
                return False, f"containment violated: {c.label}"
        else:
            raise ConstraintError(f"unexpanded constraint {c!r}")
    return True, None
