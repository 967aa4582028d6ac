"""From transcripts to candidate policy views.

Pipeline: transcripts are cut into conditioned queries (one per issued
query, carrying the prior records as conditions, with empty-result Query
records dropped); queries are normalized to PSJ form, splitting a
conditioned query in two wherever a LEFT JOIN cannot be reduced to an
inner join; the set is simplified (vacuous branches, equality
propagation, duplicate and vacuous-unused query records, branch merging,
subsumption); and each surviving conditioned query becomes one view by
conjoining its records onto an accumulated query, then deleting request
parameters of the supported shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

from .constraints import Constraint
from .fdsolver import CdclBackend, VarPool, land, lnot
from .normal import NormalFormQuery, column_of_ordinal, count_parts, normalize_query
from .schema import Schema
from .solver import SymEnv, encode_instance, encode_pred, encode_query, check
from .sqlast import COUNT_AGGREGATE
from .sqlparser import parse_sql
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
    Predicate,
    RequestParam,
    RowCol,
    Scalar,
    SessionParam,
    TruePred,
    TRUE,
    conjoin,
    conjuncts,
    iter_terms,
    map_terms,
    substitute_placeholders,
)
from .transcript import BranchRecord, QueryRecord, Transcript


class ViewGenError(Exception):
    pass


class RequestParamRemovalError(ViewGenError):
    """A request parameter occurs outside the removable equality shape."""

    def __init__(self, view_sql: str, param: str, reason: str):
        super().__init__(f"cannot remove request parameter {param!r} from view: {reason}\n{view_sql}")
        self.param = param


# ---------------------------------------------------------------------------
# Conditioned queries


@dataclass(frozen=True)
class CondQuery:
    index: int
    nf: NormalFormQuery
    params: tuple[Scalar, ...]


@dataclass(frozen=True)
class CondCount:
    """A count aggregate surviving in conditions; it always returns one row
    and its value may not be referenced, so simplification drops it."""

    index: int
    source: str
    filter: Predicate
    params: tuple[Scalar, ...]


@dataclass(frozen=True)
class CondBranch:
    pred: Predicate
    outcome: bool


CondRecord = Union[CondQuery, CondCount, CondBranch]


@dataclass(frozen=True)
class ConditionedQuery:
    sql: NormalFormQuery
    params: tuple[Scalar, ...]
    conditions: tuple[CondRecord, ...]
    handler: str = field(compare=False, default="")
    witness: str = field(compare=False, default="")
    approx: bool = field(compare=False, default=False)


@dataclass(frozen=True)
class View:
    nf: NormalFormQuery
    handler: str = field(compare=False, default="")
    witness: str = field(compare=False, default="")


def _dedup(items):
    seen = {}
    for it in items:
        if it not in seen:
            seen[it] = it
    return list(seen.values())


# ---------------------------------------------------------------------------
# Preprocessing: records -> normalized conditioned queries


def _fold_known_nulls(p: Predicate) -> Union[bool, Predicate]:
    """Partially evaluate a scalar predicate whose NullLit leaves are known
    null; returns True/False when forced."""
    if isinstance(p, Cmp):
        if isinstance(p.left, NullLit) or isinstance(p.right, NullLit):
            return False
        return p
    if isinstance(p, IsNull):
        return True if isinstance(p.term, NullLit) else p
    if isinstance(p, BoolCol):
        return False if isinstance(p.term, NullLit) else p
    if isinstance(p, Not):
        inner = _fold_known_nulls(p.inner)
        if isinstance(inner, bool):
            return not inner
        return Not(inner)
    if isinstance(p, And):
        left = _fold_known_nulls(p.left)
        right = _fold_known_nulls(p.right)
        if left is False or right is False:
            return False
        if left is True:
            return right if not isinstance(right, bool) else True
        if right is True:
            return left
        return And(left, right)
    if isinstance(p, TruePred):
        return True
    raise ViewGenError(f"not a predicate: {p!r}")


@dataclass
class _Partial:
    """One rewrite variant of a conditioned query under construction."""

    conditions: list[CondRecord]
    remap: dict[tuple[int, int], Scalar | None]  # (query, col) -> replacement; None = NULL
    approx: bool


def _remap_scalar(s: Scalar, remap) -> Scalar | None:
    """None means the scalar is a NULL under this variant."""
    if isinstance(s, RowCol) and (s.query_index, s.column_index) in remap:
        return remap[(s.query_index, s.column_index)]
    return s


def _remap_params(params, remap) -> tuple[tuple[Scalar, ...], bool]:
    out = []
    any_null = False
    for s in params:
        r = _remap_scalar(s, remap)
        if r is None:
            out.append(NullLit())
            any_null = True
        else:
            out.append(r)
    return tuple(out), any_null


def _expand_record(partials: list[_Partial], record, ast_cache, schema) -> list[_Partial]:
    """Apply one prior record to every live variant."""
    out: list[_Partial] = []
    for part in partials:
        if isinstance(record, BranchRecord):
            def sub(t, remap=part.remap):
                r = _remap_scalar(t, remap)
                return NullLit() if r is None else r

            pred = map_terms(record.cond, sub)
            folded = _fold_known_nulls(pred)
            if isinstance(folded, bool):
                if folded == record.outcome:
                    out.append(part)  # vacuous under this variant
                # else: contradiction; variant dies
                continue
            part = _Partial(part.conditions + [CondBranch(folded, record.outcome)], part.remap, part.approx)
            out.append(part)
            continue
        # Query record in conditions (isEmpty=false by preprocessing).
        params, any_null = _remap_params(record.params, part.remap)
        if any_null:
            continue  # its filter compares against NULL: cannot have returned a row
        ast = ast_cache(record.sql)
        if ast.shape == COUNT_AGGREGATE:
            table, filt = count_parts(ast, schema)
            out.append(
                _Partial(
                    part.conditions + [CondCount(record.index, table, filt, params)],
                    part.remap,
                    part.approx,
                )
            )
            continue
        for variant in normalize_query(ast, schema):
            remap = dict(part.remap)
            if variant.tag == "left_only":
                for old, new in enumerate(variant.result_map):
                    if new is None:
                        remap[(record.index, old)] = None
                    elif new != old:
                        remap[(record.index, old)] = RowCol(record.index, new)
            out.append(
                _Partial(
                    part.conditions + [CondQuery(record.index, variant.nf, params)],
                    remap,
                    part.approx or not variant.lossless,
                )
            )
    return out


def to_conditioned_queries(
    transcripts: list[Transcript], schema: Schema
) -> list[ConditionedQuery]:
    """One conditioned query per issued query per transcript (duplicates
    collapse), with LEFT JOIN splits and the COUNT(*) rewrite applied."""
    asts: dict[str, object] = {}

    def ast_cache(sql: str):
        if sql not in asts:
            asts[sql] = parse_sql(sql)
        return asts[sql]

    out: list[ConditionedQuery] = []
    for t in transcripts:
        for k, record in enumerate(t.records):
            if not isinstance(record, QueryRecord):
                continue
            prior = [
                r
                for r in t.records[:k]
                if isinstance(r, BranchRecord) or not r.is_empty
            ]
            partials = [_Partial([], {}, False)]
            for r in prior:
                partials = _expand_record(partials, r, ast_cache, schema)
            for part in partials:
                params, _ = _remap_params(record.params, part.remap)
                ast = ast_cache(record.sql)
                for variant in normalize_query(ast, schema):
                    out.append(
                        ConditionedQuery(
                            variant.nf,
                            params,
                            tuple(part.conditions),
                            handler=t.handler,
                            witness=t.input_id,
                            approx=part.approx or not variant.lossless,
                        )
                    )
    return _dedup(out)


# ---------------------------------------------------------------------------
# Simplification

SIMPLIFY_STEPS = (
    "vacuous_branches",
    "propagate_equalities",
    "duplicate_queries",
    "vacuous_queries",
    "merge_branches",
    "subsume",
)


@dataclass
class Simplifier:
    schema: Schema
    constraints: list[Constraint]
    param_types: dict[str, str] = field(default_factory=dict)
    table_bound: int = 2
    value_range: tuple[int, int] = (0, 7)
    timeout_s: float = 5.0
    skip: frozenset = frozenset()

    def simplify(self, cqs: list[ConditionedQuery]) -> list[ConditionedQuery]:
        cqs = _dedup(cqs)
        cqs = [self._per_cq(cq) for cq in cqs]
        cqs = _dedup(cqs)
        while True:
            before = list(cqs)
            if "vacuous_queries" not in self.skip:
                cqs = _dedup([self._remove_vacuous_queries(cq) for cq in cqs])
            if "merge_branches" not in self.skip:
                cqs = self._merge_branches(cqs)
            if cqs == before:
                break
        if "subsume" not in self.skip:
            cqs = self._remove_subsumed(cqs)
        return cqs

    # -- per-conditioned-query steps --------------------------------------

    def _per_cq(self, cq: ConditionedQuery) -> ConditionedQuery:
        if "vacuous_branches" not in self.skip:
            cq = self._remove_vacuous_branches(cq)
        if "propagate_equalities" not in self.skip:
            cq = self._propagate_equalities(cq)
        if "duplicate_queries" not in self.skip:
            cq = self._remove_duplicate_queries(cq)
        return cq

    # Solver plumbing for entailment checks over a condition prefix.

    def _param_names(self, cq: ConditionedQuery):
        names = {}
        def visit(s):
            if isinstance(s, (SessionParam, RequestParam)):
                names.setdefault(s.name, self.param_types.get(s.name, "int"))
        for rec in cq.conditions:
            if isinstance(rec, CondBranch):
                for t in iter_terms(rec.pred):
                    visit(t)
            else:
                for s in rec.params:
                    visit(s)
        for s in cq.params:
            visit(s)
        return names

    def _context(self, cq: ConditionedQuery):
        pool = VarPool()
        inst, labeled = encode_instance(
            self.schema, self.constraints, self.table_bound, pool, self.value_range
        )
        env = SymEnv()
        lo, hi = self.value_range
        for name in ("MyUserId", "Now"):
            env.params[name] = pool.new_int(name, lo, hi)
        for name, ptype in sorted(self._param_names(cq).items()):
            if name in env.params:
                continue
            plo, phi = (0, 1) if ptype == "bool" else (lo, hi)
            env.params[name] = pool.new_int(name, plo, phi)
        return pool, inst, env, labeled

    def _record_formula(self, rec, inst, env, pool, hard, k: int):
        """Assert one condition record; extends env with result symbols."""
        if isinstance(rec, CondBranch):
            f = encode_pred(rec.pred, {}, env)
            return f if rec.outcome else lnot(f)
        if isinstance(rec, CondCount):
            return None  # always returns a row; adds nothing
        enc = encode_query(
            rec.nf, rec.params, inst, self.schema, env, pool, f"c{k}", self.value_range
        )
        hard.extend(enc.defs)
        env.rows[rec.index] = enc.result
        return land(enc.non_empty, enc.at_most_one)

    def _entails(self, cq: ConditionedQuery, upto: int, formula_of) -> bool:
        """constraints + conditions[:upto] entail the formula built by
        `formula_of(inst, env, pool, hard)`; Unknown counts as no."""
        pool, inst, env, labeled = self._context(cq)
        hard: list = []
        for k, rec in enumerate(cq.conditions[:upto]):
            f = self._record_formula(rec, inst, env, pool, hard, k)
            if f is not None:
                labeled.append((f"cond{k}", f))
        goal = formula_of(inst, env, pool, hard)
        labeled.append(("negated-goal", lnot(goal)))
        # Entailment only needs sat/unsat, not cores: assert everything hard.
        verdict = check(pool, [], hard + [f for _, f in labeled], CdclBackend(), self.timeout_s)
        return verdict.status == "unsat"

    def _remove_vacuous_branches(self, cq: ConditionedQuery) -> ConditionedQuery:
        kept: list[CondRecord] = []
        removed = False
        for k, rec in enumerate(cq.conditions):
            if isinstance(rec, CondBranch):
                def goal(inst, env, pool, hard, rec=rec):
                    f = encode_pred(rec.pred, {}, env)
                    return f if rec.outcome else lnot(f)
                if self._entails(cq, k, goal):
                    removed = True
                    continue
            kept.append(rec)
        if not removed:
            return cq
        return replace(cq, conditions=tuple(kept))

    def _remove_vacuous_queries(self, cq: ConditionedQuery) -> ConditionedQuery:
        """Drop condition queries that must return a row and whose result
        columns are never referenced afterwards."""
        conditions = list(cq.conditions)
        k = 0
        while k < len(conditions):
            rec = conditions[k]
            if not isinstance(rec, (CondQuery, CondCount)):
                k += 1
                continue
            if self._referenced(rec.index, conditions[k + 1 :], cq.params):
                k += 1
                continue
            if isinstance(rec, CondCount):
                vacuous = True  # a count always returns one row
            else:
                def goal(inst, env, pool, hard, rec=rec, k=k):
                    enc = encode_query(
                        rec.nf, rec.params, inst, self.schema, env, pool, f"g{k}", self.value_range
                    )
                    hard.extend(enc.defs)
                    return enc.non_empty
                vacuous = self._entails(cq, k, goal)
            if vacuous:
                del conditions[k]
            else:
                k += 1
        if len(conditions) == len(cq.conditions):
            return cq
        return replace(cq, conditions=tuple(conditions))

    @staticmethod
    def _referenced(index: int, later: list[CondRecord], own_params) -> bool:
        def refs(scalars) -> bool:
            return any(isinstance(s, RowCol) and s.query_index == index for s in scalars)

        for rec in later:
            if isinstance(rec, CondBranch):
                if refs(iter_terms(rec.pred)):
                    return True
            elif refs(rec.params):
                return True
        return refs(own_params)

    # -- equality propagation ----------------------------------------------

    @staticmethod
    def _equality_classes(cq: ConditionedQuery):
        """Union-find over scalars forced equal by condition-query filters.

        Keys: ("qcol", query index, source ordinal) for result columns and
        plain columns of a condition query; ("scalar", s) for parameters and
        literals.  Returns (find, scalar_key, queries, positions).
        """
        parent: dict = {}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb

        queries: dict[int, CondQuery] = {
            rec.index: rec for rec in cq.conditions if isinstance(rec, CondQuery)
        }
        positions: dict[int, int] = {}
        for pos, rec in enumerate(cq.conditions):
            if isinstance(rec, (CondQuery, CondCount)):
                positions[rec.index] = pos

        def scalar_key(s: Scalar):
            if isinstance(s, RowCol) and s.query_index in queries:
                nf = queries[s.query_index].nf
                if s.column_index < len(nf.projection):
                    return ("qcol", s.query_index, nf.projection[s.column_index])
            if isinstance(s, (IntLit, BoolLit, SessionParam, RequestParam)):
                return ("scalar", s)
            return None

        def key_of(term, qindex: int):
            if isinstance(term, Col):
                return ("qcol", qindex, term.index)
            return scalar_key(term)

        for rec in cq.conditions:
            if not isinstance(rec, CondQuery):
                continue
            filt = substitute_placeholders(rec.nf.filter, rec.params)
            for atom in conjuncts(filt):
                if isinstance(atom, Cmp) and atom.op == "=":
                    ka = key_of(atom.left, rec.index)
                    kb = key_of(atom.right, rec.index)
                    if ka is not None and kb is not None:
                        union(ka, kb)
        return find, scalar_key, queries, positions, parent

    def _propagate_equalities(self, cq: ConditionedQuery) -> ConditionedQuery:
        find, scalar_key, queries, positions, parent = self._equality_classes(cq)
        if not parent:
            return cq

        # Representatives, position-aware: a RowCol is usable only after its
        # query's record; preference: literal, session param, earliest row
        # column, request param.
        def rank(member, at_pos: int):
            kind, payload = member[0], member[1:]
            if kind == "scalar":
                s = payload[0]
                if isinstance(s, (IntLit, BoolLit)):
                    return (0, repr(s))
                if isinstance(s, SessionParam):
                    return (1, ("MyUserId", "Now").index(s.name) if s.name in ("MyUserId", "Now") else 9, s.name)
                return (3, s.name)
            qindex, ordinal = payload
            nf = queries.get(qindex)
            if nf is None or positions.get(qindex, 10**9) >= at_pos:
                return None  # not available here
            if ordinal not in nf.nf.projection:
                return None
            return (2, positions[qindex], nf.nf.projection.index(ordinal))

        def best_scalar(s: Scalar, at_pos: int) -> Scalar:
            k = scalar_key(s)
            if k is None:
                return s
            root = find(k)
            members = [m for m in parent if find(m) == root]
            best = None
            best_rank = None
            for m in members:
                r = rank(m, at_pos)
                if r is None:
                    continue
                if best_rank is None or r < best_rank:
                    best_rank = r
                    best = m
            if best is None:
                return s
            if best[0] == "scalar":
                return best[1]
            qindex, ordinal = best[1], best[2]
            return RowCol(qindex, queries[qindex].nf.projection.index(ordinal))

        new_conditions: list[CondRecord] = []
        for pos, rec in enumerate(cq.conditions):
            if isinstance(rec, CondBranch):
                new_pred = map_terms(rec.pred, lambda t: best_scalar(t, pos) if not isinstance(t, Col) else t)
                new_conditions.append(CondBranch(new_pred, rec.outcome))
            elif isinstance(rec, CondCount):
                new_conditions.append(
                    replace(rec, params=tuple(best_scalar(s, pos) for s in rec.params))
                )
            else:
                new_conditions.append(
                    replace(rec, params=tuple(best_scalar(s, pos) for s in rec.params))
                )
        end = len(cq.conditions)
        new_params = tuple(best_scalar(s, end) for s in cq.params)
        return replace(cq, conditions=tuple(new_conditions), params=new_params)

    # -- duplicate query records --------------------------------------------

    def _remove_duplicate_queries(self, cq: ConditionedQuery) -> ConditionedQuery:
        """Collapse structurally identical query records; parameters are
        compared modulo the filter-induced equality classes, which is what
        makes duplicates visible after variable unification."""
        while True:
            find, scalar_key, _queries, _positions, _parent = self._equality_classes(cq)

            def param_key(s: Scalar):
                k = scalar_key(s)
                return find(k) if k is not None else s

            seen: dict = {}
            dup: tuple[int, int] | None = None  # (duplicate index, surviving index)
            for rec in cq.conditions:
                if isinstance(rec, CondQuery):
                    key = (rec.nf, tuple(param_key(s) for s in rec.params))
                elif isinstance(rec, CondCount):
                    key = (rec.source, rec.filter, tuple(param_key(s) for s in rec.params))
                else:
                    continue
                if key in seen:
                    dup = (rec.index, seen[key])
                    break
                seen[key] = rec.index
            if dup is None:
                return cq
            drop, keep = dup

            def renumber(s: Scalar) -> Scalar:
                if isinstance(s, RowCol) and s.query_index == drop:
                    return RowCol(keep, s.column_index)
                return s

            new_conditions = []
            for rec in cq.conditions:
                if isinstance(rec, (CondQuery, CondCount)) and rec.index == drop:
                    continue
                if isinstance(rec, CondBranch):
                    new_conditions.append(CondBranch(map_terms(rec.pred, renumber), rec.outcome))
                else:
                    new_conditions.append(replace(rec, params=tuple(renumber(s) for s in rec.params)))
            cq = replace(
                cq,
                conditions=tuple(new_conditions),
                params=tuple(renumber(s) for s in cq.params),
            )

    # -- cross-conditioned-query steps ---------------------------------------

    @staticmethod
    def _merge_branches(cqs: list[ConditionedQuery]) -> list[ConditionedQuery]:
        """Merge pairs identical except for one Branch record's outcome: the
        query is issued no matter which way that branch goes."""
        while True:
            sig_map: dict = {}
            merge: tuple[int, int, int] | None = None  # (earlier, later, branch pos)
            for i, cq in enumerate(cqs):
                for k, rec in enumerate(cq.conditions):
                    if not isinstance(rec, CondBranch):
                        continue
                    # The signature fixes everything but this record's outcome.
                    sig = (cq.sql, cq.params, cq.conditions[:k], cq.conditions[k + 1 :], rec.pred)
                    if sig in sig_map:
                        merge = (sig_map[sig], i, k)
                        break
                    sig_map[sig] = i
                if merge is not None:
                    break
            if merge is None:
                return cqs
            j, i, k = merge
            merged = replace(cqs[j], conditions=cqs[i].conditions[:k] + cqs[i].conditions[k + 1 :])
            out = [c for idx, c in enumerate(cqs) if idx not in (i, j)]
            out.insert(j, merged)
            cqs = _dedup(out)

    @staticmethod
    def _records_match(rb: CondRecord, ra: CondRecord, mapping: dict[int, int]) -> bool:
        def remap(s: Scalar) -> Scalar:
            if isinstance(s, RowCol) and s.query_index in mapping:
                return RowCol(mapping[s.query_index], s.column_index)
            return s

        if isinstance(rb, CondBranch) and isinstance(ra, CondBranch):
            return rb.outcome == ra.outcome and map_terms(rb.pred, remap) == ra.pred
        if isinstance(rb, CondQuery) and isinstance(ra, CondQuery):
            return rb.nf == ra.nf and tuple(remap(s) for s in rb.params) == ra.params
        if isinstance(rb, CondCount) and isinstance(ra, CondCount):
            return (
                rb.source == ra.source
                and rb.filter == ra.filter
                and tuple(remap(s) for s in rb.params) == ra.params
            )
        return False

    @classmethod
    def _subsumes(cls, b: ConditionedQuery, a: ConditionedQuery) -> bool:
        """Greedy order-preserving injective mapping of b's records into a's."""
        mapping: dict[int, int] = {}
        ai = 0
        for rb in b.conditions:
            found = False
            while ai < len(a.conditions):
                ra = a.conditions[ai]
                ai += 1
                if cls._records_match(rb, ra, mapping):
                    if isinstance(rb, (CondQuery, CondCount)):
                        mapping[rb.index] = ra.index
                    found = True
                    break
            if not found:
                return False

        def remap(s: Scalar) -> Scalar:
            if isinstance(s, RowCol) and s.query_index in mapping:
                return RowCol(mapping[s.query_index], s.column_index)
            return s

        return b.sql == a.sql and tuple(remap(s) for s in b.params) == a.params

    def _remove_subsumed(self, cqs: list[ConditionedQuery]) -> list[ConditionedQuery]:
        """Drop a conditioned query when another carries the same query under
        a subset of its conditions (earliest survives on equal length)."""
        kept: list[ConditionedQuery] = []
        for i, a in enumerate(cqs):
            subsumed = False
            for j, b in enumerate(cqs):
                if i == j:
                    continue
                nb, na = len(b.conditions), len(a.conditions)
                if nb > na or (nb == na and j > i):
                    continue
                if self._subsumes(b, a):
                    subsumed = True
                    break
            if not subsumed:
                kept.append(a)
        return kept


def simplify(
    cqs: list[ConditionedQuery],
    schema: Schema,
    constraints: list[Constraint],
    param_types: dict[str, str] | None = None,
    table_bound: int = 2,
    value_range: tuple[int, int] = (0, 7),
    timeout_s: float = 5.0,
    skip=(),
) -> list[ConditionedQuery]:
    s = Simplifier(
        schema, constraints, param_types or {}, table_bound, value_range, timeout_s, frozenset(skip)
    )
    return s.simplify(cqs)


# ---------------------------------------------------------------------------
# View generation (one view per conditioned query)


def _pred_via_mapping(pred: Predicate, mapping: dict[tuple[int, int], int]) -> Predicate:
    def sub(t):
        if isinstance(t, RowCol):
            key = (t.query_index, t.column_index)
            if key not in mapping:
                raise ViewGenError(f"condition references unavailable result column r{t.query_index}.c{t.column_index}")
            return Col(mapping[key])
        return t

    return map_terms(pred, sub)


def _conjoin_query(
    acc: NormalFormQuery,
    mapping: dict[tuple[int, int], int],
    nf: NormalFormQuery,
    params: tuple[Scalar, ...],
    index: int | None,
    schema: Schema,
) -> tuple[NormalFormQuery, dict]:
    n = acc.arity(schema)
    theta = substitute_placeholders(nf.filter, params)
    theta = map_terms(theta, lambda t: Col(t.index + n) if isinstance(t, Col) else t)
    theta = _pred_via_mapping(theta, mapping)
    new_filter = conjoin([acc.filter, theta])
    projection = acc.projection + tuple(n + j for j in nf.projection)
    sources = acc.sources + nf.sources
    out = NormalFormQuery(projection, new_filter, sources)
    new_mapping = dict(mapping)
    if index is not None:
        for i, j in enumerate(nf.projection):
            new_mapping[(index, i)] = n + j
    return out, new_mapping


def generate_view_trace(cq: ConditionedQuery, schema: Schema) -> list[NormalFormQuery]:
    """The accumulated query after each condition record, ending with the
    conditioned query itself conjoined (the generated view)."""
    acc = NormalFormQuery((), TRUE, ())
    mapping: dict[tuple[int, int], int] = {}
    trace: list[NormalFormQuery] = []
    for rec in cq.conditions:
        if isinstance(rec, CondBranch):
            theta = _pred_via_mapping(rec.pred, mapping)
            theta = theta if rec.outcome else Not(theta)
            acc = NormalFormQuery(acc.projection, conjoin([acc.filter, theta]), acc.sources)
        elif isinstance(rec, CondCount):
            raise ViewGenError(
                f"aggregation survived preprocessing in conditions of query {unparse_safe(cq.sql, schema)}"
            )
        else:
            acc, mapping = _conjoin_query(acc, mapping, rec.nf, rec.params, rec.index, schema)
        trace.append(acc)
    acc, _ = _conjoin_query(acc, mapping, cq.sql, cq.params, None, schema)
    trace.append(acc)
    return trace


def generate_view(cq: ConditionedQuery, schema: Schema) -> NormalFormQuery:
    return generate_view_trace(cq, schema)[-1]


def unparse_safe(nf: NormalFormQuery, schema: Schema) -> str:
    from .unparse import unparse_nf

    try:
        return unparse_nf(nf, schema)
    except Exception:
        return repr(nf)


# ---------------------------------------------------------------------------
# Request parameter removal


def remove_request_params(nf: NormalFormQuery, schema: Schema) -> NormalFormQuery:
    """Delete request parameters appearing as a single `col = X` equality on
    a non-nullable column; anything else is a hard error."""
    while True:
        names = sorted(
            {t.name for t in iter_terms(nf.filter) if isinstance(t, RequestParam)}
        )
        if not names:
            return nf
        name = names[0]
        nf = _remove_one_request_param(nf, name, schema)


def _remove_one_request_param(nf: NormalFormQuery, name: str, schema: Schema) -> NormalFormQuery:
    from .unparse import unparse_nf

    cs = conjuncts(nf.filter)
    hits: list[int] = []
    col: int | None = None
    occurrences = 0
    for t in iter_terms(nf.filter):
        if isinstance(t, RequestParam) and t.name == name:
            occurrences += 1
    for i, c in enumerate(cs):
        if not any(isinstance(t, RequestParam) and t.name == name for t in iter_terms(c)):
            continue
        hits.append(i)
        if isinstance(c, Cmp) and c.op == "=":
            if isinstance(c.left, Col) and c.right == RequestParam(name):
                col = c.left.index
            elif isinstance(c.right, Col) and c.left == RequestParam(name):
                col = c.right.index
    view_sql = unparse_safe(nf, schema)
    if occurrences != 1 or len(hits) != 1 or col is None:
        raise RequestParamRemovalError(
            view_sql, name, "the parameter must occur exactly once, as `column = Param`"
        )
    table, _pos, colname = column_of_ordinal(schema, nf.sources, col)
    if schema.table(table).column(colname).nullable:
        raise RequestParamRemovalError(view_sql, name, f"column {table}.{colname} is nullable")
    remaining = [c for i, c in enumerate(cs) if i != hits[0]]
    projection = nf.projection
    if not _projected_equal(col, projection, remaining):
        projection = projection + (col,)
    return NormalFormQuery(projection, conjoin(remaining), nf.sources)


def _projected_equal(col: int, projection: tuple[int, ...], remaining: list[Predicate]) -> bool:
    """Is `col` itself projected, or forced equal to a projected column?"""
    parent: dict[int, int] = {}

    def find(x: int) -> int:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in remaining:
        if isinstance(c, Cmp) and c.op == "=" and isinstance(c.left, Col) and isinstance(c.right, Col):
            ra, rb = find(c.left.index), find(c.right.index)
            if ra != rb:
                parent[ra] = rb
    root = find(col)
    return any(find(p) == root for p in projection)


def views_from_cqs(cqs: list[ConditionedQuery], schema: Schema) -> list[View]:
    views = []
    for cq in cqs:
        nf = remove_request_params(generate_view(cq, schema), schema)
        views.append(View(nf, handler=cq.handler, witness=cq.witness))
    return _dedup(views)
