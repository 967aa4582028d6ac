from __future__ import annotations

import random

from polex.constraints import expand_all, generate_constraints, validate_instance
from polex.evaluate import ScalarEnv, eval_executable, eval_nf
from polex.fdsolver import VarPool, eval_formula, lnot
from polex.normal import NormalFormQuery, to_executable
from polex.schema import parse_schema
from polex.solver import (
    SymEnv,
    check,
    encode_instance,
    encode_query,
    model_to_input,
)
from polex.sqlparser import parse_sql
from polex.terms import Cmp, Col, IntLit, IsNull, Not, SessionParam, TRUE, conjoin

SCHEMA = parse_schema(
    """
table courses { id int unique }
table roles {
  user_id int
  course_id int fk courses.id
  is_instructor bool
  note int nullable
}
"""
)
CONSTRAINTS = expand_all(generate_constraints(SCHEMA), SCHEMA)
RANGE = (0, 3)


def fresh_context(constraints=CONSTRAINTS, bound=2):
    pool = VarPool()
    inst, labeled = encode_instance(SCHEMA, constraints, bound, pool, RANGE)
    env = SymEnv()
    env.params["MyUserId"] = pool.new_int("MyUserId", *RANGE)
    env.params["Now"] = pool.new_int("Now", *RANGE)
    return pool, inst, env, labeled


def test_symbol_counts():
    pool = VarPool()
    schema = parse_schema("table t { a int  b int }")
    inst, _ = encode_instance(schema, [], 2, pool, RANGE)
    rows = inst.tables["t"].rows
    assert len(rows) == 2
    assert len([v for r in rows for v in r.values]) == 4
    assert all(n is None for r in rows for n in r.nulls)


def test_unique_constraint_formula():
    pool, inst, env, labeled = fresh_context()
    # courses.id is unique: no model may present two rows with equal ids.
    id0 = inst.tables["courses"].rows[0]
    id1 = inst.tables["courses"].rows[1]
    from polex.fdsolver import bvar, feq, ivar, land

    both_equal = land(
        bvar(id0.presence), bvar(id1.presence), feq(ivar(id0.values[0]), ivar(id1.values[0]))
    )
    verdict = check(pool, labeled + [("force", both_equal)], [])
    assert verdict.status == "unsat"


def test_fk_containment_models_validate():
    # Every model found under the constraints materializes into an input
    # that passes brute-force validation.
    pool, inst, env, labeled = fresh_context()
    from polex.fdsolver import bvar

    roles_present = bvar(inst.tables["roles"].rows[0].presence)
    for extra in range(4):
        verdict = check(pool, labeled + [("present", roles_present)], [])
        assert verdict.status == "sat"
        ci = model_to_input(verdict.model, inst, SCHEMA, env, "m", "h")
        ok, why = validate_instance(ci, CONSTRAINTS, SCHEMA)
        assert ok, why
        # ban this exact model's course ids to get a different one next time
        row = inst.tables["courses"].rows[0]
        labeled.append(
            (f"ban{extra}", lnot((("cmp", "=", ("v", row.values[0]), ("c", verdict.model[row.values[0]]))))),
        )


def test_nonempty_is_two_way_disjunction():
    pool, inst, env, labeled = fresh_context(constraints=[])
    nf = NormalFormQuery((0, 1, 2, 3), TRUE, ("roles",))
    enc = encode_query(nf, (), inst, SCHEMA, env, pool, "q1", RANGE)
    # nonEmpty holds iff some roles row is present.
    from polex.fdsolver import bvar, land

    none_present = land(
        lnot(bvar(inst.tables["roles"].rows[0].presence)),
        lnot(bvar(inst.tables["roles"].rows[1].presence)),
    )
    assert check(pool, [("ne", enc.non_empty), ("none", none_present)], enc.defs).status == "unsat"
    assert check(pool, [("ne", enc.non_empty)], enc.defs).status == "sat"


def test_query_over_absent_rows_unsat():
    pool, inst, env, labeled = fresh_context(constraints=[])
    from polex.fdsolver import bvar

    nf = NormalFormQuery((0,), TRUE, ("courses",))
    enc = encode_query(nf, (), inst, SCHEMA, env, pool, "q1", RANGE)
    hard = enc.defs + [lnot(bvar(r.presence)) for r in inst.tables["courses"].rows]
    assert check(pool, [("ne", enc.non_empty)], hard).status == "unsat"


def test_tautological_filter_nonempty_iff_row_present():
    pool, inst, env, labeled = fresh_context(constraints=[])
    nf = NormalFormQuery((0,), Cmp("=", Col(0), Col(0)), ("courses",))
    enc = encode_query(nf, (), inst, SCHEMA, env, pool, "q1", RANGE)
    from polex.fdsolver import bvar, lor

    some_present = lor(*[bvar(r.presence) for r in inst.tables["courses"].rows])
    # nonEmpty <-> some row present: both directions unsat when negated.
    assert check(pool, [("a", enc.non_empty), ("b", lnot(some_present))], enc.defs).status == "unsat"
    assert check(pool, [("a", lnot(enc.non_empty)), ("b", some_present)], enc.defs).status == "unsat"


def test_check_examples():
    pool = VarPool()
    x = pool.new_int("x", 0, 7)
    from polex.fdsolver import feq, ivar, const

    v = check(pool, [("a", feq(ivar(x), const(1))), ("b", feq(ivar(x), const(2)))])
    assert v.status == "unsat" and sorted(v.core) == ["a", "b"]
    v = check(pool, [("a", feq(ivar(x), const(1)))])
    assert v.status == "sat" and v.model[x] == 1


def test_model_to_input_empty_and_nulls():
    pool, inst, env, labeled = fresh_context(constraints=[])
    from polex.fdsolver import bvar

    # all rows absent -> empty database
    hard = [lnot(bvar(r.presence)) for t in inst.tables.values() for r in t.rows]
    v = check(pool, [], hard)
    ci = model_to_input(v.model, inst, SCHEMA, env, "m", "h")
    assert all(rows == () for rows in ci.tables.values())

    # force a roles row with a null note
    pool, inst, env, labeled = fresh_context(constraints=[])
    row = inst.tables["roles"].rows[0]
    hard = [bvar(row.presence), bvar(row.nulls[3])]
    v = check(pool, [], hard)
    ci = model_to_input(v.model, inst, SCHEMA, env, "m", "h")
    assert ci.tables["roles"][0][3] is None


def _random_nf(rng):
    sources = tuple(rng.choice(["courses", "roles"]) for _ in range(rng.randint(1, 2)))
    arity = sum(SCHEMA.table(s).arity for s in sources)
    proj = tuple(rng.sample(range(arity), rng.randint(0, arity)))
    atoms = []
    for _ in range(rng.randint(0, 3)):
        a = Col(rng.randrange(arity))
        c = rng.random()
        if c < 0.5:
            b = rng.choice([Col(rng.randrange(arity)), IntLit(rng.randint(0, 2)), SessionParam("MyUserId")])
            atoms.append(Cmp(rng.choice(["=", "<>", "<", "<="]), a, b))
        elif c < 0.75:
            atoms.append(IsNull(a))
        else:
            atoms.append(Not(IsNull(a)))
    return NormalFormQuery(proj, conjoin(atoms), sources)


def test_encoding_agrees_with_evaluator_on_random_queries():
    """Soundness: on every model, brute-force evaluation of the encoded query
    agrees with the model's nonEmpty and result-row values."""
    rng = random.Random(4242)
    checked = 0
    for _ in range(120):
        nf = _random_nf(rng)
        pool, inst, env, labeled = fresh_context()
        enc = encode_query(nf, (), inst, SCHEMA, env, pool, "q1", RANGE)
        want_nonempty = rng.random() < 0.7
        path = enc.non_empty if want_nonempty else lnot(enc.non_empty)
        verdict = check(pool, labeled + [("path", path), ("amo", enc.at_most_one)], enc.defs)
        if verdict.status != "sat":
            continue
        checked += 1
        ci = model_to_input(verdict.model, inst, SCHEMA, env, "t", "h")
        senv = ScalarEnv(session=ci.session, request=ci.request)
        rows = eval_nf(nf, ci, SCHEMA, senv)
        assert (len(rows) > 0) == want_nonempty
        assert len(rows) <= 1  # at-most-one was asserted
        if rows:
            row = next(iter(rows))
            for i, (term, null_f) in enumerate(enc.result):
                is_null = eval_formula(null_f, verdict.model)
                value = None if is_null else (term[1] if term[0] == "c" else verdict.model[term[1]])
                assert row[i] == value
    assert checked > 60


def test_left_join_encoding_agrees_with_evaluator():
    schema = parse_schema(
        "table a { id int unique  x int }\ntable b { a_id int fk a.id  y int }"
    )
    cons = expand_all(generate_constraints(schema), schema)
    exe = to_executable(
        parse_sql("SELECT a.id, b.y FROM a LEFT JOIN b ON a.id = b.a_id WHERE a.x = ?"), schema
    )
    rng = random.Random(11)
    checked_nonempty = 0
    for trial in range(60):
        pool = VarPool()
        inst, labeled = encode_instance(schema, cons, 2, pool, RANGE)
        env = SymEnv()
        env.params["MyUserId"] = pool.new_int("MyUserId", *RANGE)
        enc = encode_query(exe, (SessionParam("MyUserId"),), inst, schema, env, pool, "q1", RANGE)
        want = rng.random() < 0.75
        path = enc.non_empty if want else lnot(enc.non_empty)
        extra = []
        if rng.random() < 0.5:
            from polex.fdsolver import bvar

            extra.append(("row", bvar(inst.tables["b"].rows[0].presence)))
        verdict = check(pool, labeled + extra + [("p", path), ("amo", enc.at_most_one)], enc.defs)
        if verdict.status != "sat":
            continue
        ci = model_to_input(verdict.model, inst, schema, env, "t", "h")
        senv = ScalarEnv(session=ci.session)
        senv.placeholders = (ci.session["MyUserId"],)
        rows = eval_executable(exe, ci, schema, senv)
        assert (len(rows) > 0) == want
        assert len(rows) <= 1
        if rows:
            checked_nonempty += 1
            row = next(iter(rows))
            for i, (term, null_f) in enumerate(enc.result):
                is_null = eval_formula(null_f, verdict.model)
                value = None if is_null else (term[1] if term[0] == "c" else verdict.model[term[1]])
                assert row[i] == value
    assert checked_nonempty > 10


def test_count_query_never_empty():
    exe = to_executable(parse_sql("SELECT COUNT(*) FROM courses"), SCHEMA)
    pool, inst, env, labeled = fresh_context()
    enc = encode_query(exe, (), inst, SCHEMA, env, pool, "q1", RANGE)
    assert check(pool, labeled + [("ne", lnot(enc.non_empty))], enc.defs).status == "unsat"
