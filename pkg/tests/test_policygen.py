from __future__ import annotations

import itertools

import pytest

from polex.evaluate import ScalarEnv, eval_branch, eval_nf
from polex.explorer import ExplorationConfig, explore
from polex.instance import ConcreteInput
from polex.normal import to_normal_form
from polex.policygen import (
    CondBranch,
    CondCount,
    CondQuery,
    ConditionedQuery,
    RequestParamRemovalError,
    ViewGenError,
    generate_view,
    generate_view_trace,
    remove_request_params,
    simplify,
    to_conditioned_queries,
    views_from_cqs,
)
from polex.sqlparser import parse_sql
from polex.terms import (
    BoolCol,
    Cmp,
    Col,
    IntLit,
    IsNull,
    Not,
    PlaceholderRef,
    RequestParam,
    RowCol,
    SessionParam,
    TRUE,
    conjoin,
    substitute_placeholders,
)
from polex.transcript import BranchRecord, QueryRecord, Transcript
from polex.unparse import unparse_nf, unparse_view

ROLES_SQL = "SELECT * FROM roles WHERE user_id = ? AND course_id = ?"
GRADES_SQL = "SELECT * FROM grades WHERE course_id = ?"


def canonical_transcript():
    return Transcript(
        "view_grade_sheet",
        "x-0001",
        (
            QueryRecord(1, ROLES_SQL, (SessionParam("MyUserId"), RequestParam("CourseId")), False),
            BranchRecord(BoolCol(RowCol(1, 2)), True),
            QueryRecord(2, GRADES_SQL, (RowCol(1, 1),), False),
        ),
        "rendered",
    )


# ---------------------------------------------------------------------------
# Conditioned queries


def test_canonical_transcript_yields_two_cqs(grade_schema):
    cqs = to_conditioned_queries([canonical_transcript()], grade_schema)
    assert len(cqs) == 2
    roles_nf = to_normal_form(parse_sql(ROLES_SQL), grade_schema)
    first, second = cqs
    assert first.sql == roles_nf
    assert first.params == (SessionParam("MyUserId"), RequestParam("CourseId"))
    assert first.conditions == ()
    assert second.params == (RowCol(1, 1),)
    assert second.conditions == (
        CondQuery(1, roles_nf, (SessionParam("MyUserId"), RequestParam("CourseId"))),
        CondBranch(BoolCol(RowCol(1, 2)), True),
    )


def test_empty_result_query_still_produces_cq(grade_schema):
    t = Transcript(
        "h", "h-0001",
        (QueryRecord(1, ROLES_SQL, (SessionParam("MyUserId"), RequestParam("CourseId")), True),),
        "abort:404",
    )
    cqs = to_conditioned_queries([t], grade_schema)
    assert len(cqs) == 1
    assert cqs[0].conditions == ()


def test_empty_query_records_dropped_from_conditions(grade_schema):
    records = (
        QueryRecord(1, GRADES_SQL, (SessionParam("MyUserId"),), True),
        QueryRecord(2, ROLES_SQL, (SessionParam("MyUserId"), RequestParam("CourseId")), False),
    )
    t = Transcript("h", "h-0001", records, "rendered")
    cqs = to_conditioned_queries([t], grade_schema)
    roles_cq = [c for c in cqs if c.sql.sources == ("roles",)][0]
    assert roles_cq.conditions == ()  # the empty grades probe is dropped


def test_empty_transcript_yields_nothing(grade_schema):
    t = Transcript("h", "h-0001", (), "end")
    assert to_conditioned_queries([t], grade_schema) == []


def test_duplicate_cqs_collapse(grade_schema):
    t = canonical_transcript()
    cqs = to_conditioned_queries([t, t], grade_schema)
    assert len(cqs) == 2


# ---------------------------------------------------------------------------
# Simplification


def roles_nf(grade_schema):
    return to_normal_form(parse_sql(ROLES_SQL), grade_schema)


def grades_nf(grade_schema):
    return to_normal_form(parse_sql(GRADES_SQL), grade_schema)


def test_merge_branches_unit_case(grade_schema, grade_constraints):
    base = ConditionedQuery(
        grades_nf(grade_schema),
        (RowCol(1, 1),),
        (
            CondQuery(1, roles_nf(grade_schema), (SessionParam("MyUserId"), RequestParam("CourseId"))),
            CondBranch(BoolCol(RowCol(1, 2)), True),
        ),
    )
    flipped = ConditionedQuery(
        base.sql, base.params,
        (base.conditions[0], CondBranch(BoolCol(RowCol(1, 2)), False)),
    )
    out = simplify(
        [base, flipped], grade_schema, grade_constraints, {"CourseId": "int"},
        skip=("vacuous_branches", "vacuous_queries"),
    )
    assert len(out) == 1  # reduced by exactly one
    assert out[0].conditions == (base.conditions[0],)


def test_vacuous_branch_removed_by_solver(grade_schema, grade_constraints):
    # Branch(r1.user_id = MyUserId) is implied by query 1's own filter.
    cq = ConditionedQuery(
        grades_nf(grade_schema),
        (RowCol(1, 1),),
        (
            CondQuery(1, roles_nf(grade_schema), (SessionParam("MyUserId"), RequestParam("CourseId"))),
            CondBranch(Cmp("=", RowCol(1, 0), SessionParam("MyUserId")), True),
        ),
    )
    (out,) = simplify([cq], grade_schema, grade_constraints, {"CourseId": "int"},
                      skip=("propagate_equalities",))
    assert out.conditions == (cq.conditions[0],)


def test_non_vacuous_branch_kept(grade_schema, grade_constraints):
    cq = ConditionedQuery(
        grades_nf(grade_schema),
        (RowCol(1, 1),),
        (
            CondQuery(1, roles_nf(grade_schema), (SessionParam("MyUserId"), RequestParam("CourseId"))),
            CondBranch(BoolCol(RowCol(1, 2)), True),
        ),
    )
    (out,) = simplify([cq], grade_schema, grade_constraints, {"CourseId": "int"})
    assert len(out.conditions) == 2


def test_subset_subsumption(grade_schema, grade_constraints):
    bare = ConditionedQuery(roles_nf(grade_schema), (SessionParam("MyUserId"), RequestParam("CourseId")), ())
    guarded = ConditionedQuery(
        roles_nf(grade_schema),
        (SessionParam("MyUserId"), RequestParam("CourseId")),
        (CondBranch(Cmp("=", SessionParam("MyUserId"), IntLit(1)), True),),
    )
    out = simplify([bare, guarded], grade_schema, grade_constraints, {"CourseId": "int"})
    assert out == [bare]


def test_subsumption_renumbers_query_indices(grade_schema, grade_constraints):
    rnf = roles_nf(grade_schema)
    gnf = grades_nf(grade_schema)
    params = (SessionParam("MyUserId"), RequestParam("CourseId"))
    a = ConditionedQuery(
        gnf, (RowCol(3, 1),),
        (
            CondQuery(1, gnf, (SessionParam("MyUserId"),)),
            CondQuery(3, rnf, params),
        ),
    )
    b = ConditionedQuery(gnf, (RowCol(1, 1),), (CondQuery(1, rnf, params),))
    out = simplify([a, b], grade_schema, grade_constraints, {"CourseId": "int"},
                   skip=("vacuous_branches", "vacuous_queries"))
    assert out == [b]


def test_duplicate_queries_removed_and_renumbered(grade_schema, grade_constraints):
    rnf = roles_nf(grade_schema)
    params = (SessionParam("MyUserId"), RequestParam("CourseId"))
    cq = ConditionedQuery(
        grades_nf(grade_schema),
        (RowCol(2, 1),),
        (
            CondQuery(1, rnf, params),
            CondQuery(2, rnf, params),  # the same query issued twice
        ),
    )
    (out,) = simplify([cq], grade_schema, grade_constraints, {"CourseId": "int"},
                      skip=("vacuous_branches", "vacuous_queries"))
    assert out.conditions == (CondQuery(1, rnf, params),)
    assert out.params == (RowCol(1, 1),)


def test_equality_propagation_enables_duplicate_removal(grade_schema, grade_constraints):
    # Query 2 is issued once with the raw parameter and once with the
    # result column the filter pinned to it; unification makes them equal.
    rnf = roles_nf(grade_schema)
    gnf = grades_nf(grade_schema)
    cq = ConditionedQuery(
        gnf,
        (RowCol(1, 1),),
        (
            CondQuery(1, rnf, (SessionParam("MyUserId"), RequestParam("CourseId"))),
            CondQuery(2, gnf, (RequestParam("CourseId"),)),
            CondQuery(3, gnf, (RowCol(1, 1),)),
        ),
    )
    (out,) = simplify([cq], grade_schema, grade_constraints, {"CourseId": "int"},
                      skip=("vacuous_branches", "vacuous_queries"))
    queries = [r for r in out.conditions if isinstance(r, CondQuery)]
    assert len(queries) == 2  # records 2 and 3 collapsed


def test_vacuous_unused_query_removed(toys_schema, toys_constraints):
    details = to_normal_form(parse_sql("SELECT * FROM details WHERE body = ?"), toys_schema)
    items = to_normal_form(parse_sql("SELECT * FROM items WHERE id = ?"), toys_schema)
    cq = ConditionedQuery(
        details,
        (RowCol(1, 0),),
        (
            CondQuery(1, details, (RequestParam("BodyVal"),)),
            CondQuery(2, items, (RowCol(1, 0),)),  # forced by the foreign key, never used
        ),
    )
    (out,) = simplify([cq], toys_schema, toys_constraints, {"BodyVal": "int"})
    assert out.conditions == (CondQuery(1, details, (RequestParam("BodyVal"),)),)


def test_count_record_dropped_as_vacuous(toys_schema, toys_constraints):
    items = to_normal_form(parse_sql("SELECT * FROM items WHERE id = ?"), toys_schema)
    cq = ConditionedQuery(
        items,
        (RequestParam("ItemId"),),
        (CondCount(1, "items", TRUE, ()),),
    )
    (out,) = simplify([cq], toys_schema, toys_constraints, {"ItemId": "int"})
    assert out.conditions == ()


def test_surviving_count_record_is_a_view_error(toys_schema):
    items = to_normal_form(parse_sql("SELECT * FROM items WHERE id = ?"), toys_schema)
    cq = ConditionedQuery(items, (RequestParam("ItemId"),), (CondCount(1, "items", TRUE, ()),))
    with pytest.raises(ViewGenError):
        generate_view(cq, toys_schema)


# ---------------------------------------------------------------------------
# View generation (the conjoining algorithm)


def second_cq(grade_schema):
    cqs = to_conditioned_queries([canonical_transcript()], grade_schema)
    return [c for c in cqs if c.conditions][0]


def test_trace_matches_worked_example_textually(grade_schema):
    trace = generate_view_trace(second_cq(grade_schema), grade_schema)
    a1, a2, v = (unparse_nf(nf, grade_schema) for nf in trace)
    assert a1 == "SELECT * FROM roles\nWHERE user_id = MyUserId\n  AND course_id = CourseId"
    assert a2 == a1 + "\n  AND is_instructor"
    assert v == (
        "SELECT * FROM roles, grades\n"
        "WHERE roles.user_id = MyUserId\n"
        "  AND roles.course_id = CourseId\n"
        "  AND roles.is_instructor\n"
        "  AND grades.course_id = roles.course_id"
    )


def test_empty_conditions_view_is_the_query(grade_schema):
    nf = roles_nf(grade_schema)
    cq = ConditionedQuery(nf, (SessionParam("MyUserId"), RequestParam("CourseId")), ())
    view = generate_view(cq, grade_schema)
    assert view.sources == ("roles",)
    assert view.projection == (0, 1, 2)
    assert view.filter == substitute_placeholders(nf.filter, cq.params)


def test_false_branch_negates(grade_schema):
    cq = ConditionedQuery(
        grades_nf(grade_schema),
        (RowCol(1, 1),),
        (
            CondQuery(1, roles_nf(grade_schema), (SessionParam("MyUserId"), RequestParam("CourseId"))),
            CondBranch(IsNull(RowCol(1, 2)), False),
        ),
    )
    view = generate_view(cq, grade_schema)
    assert "is_instructor IS NOT NULL" in unparse_nf(view, grade_schema)


def _grade_instances(grade_schema):
    roles_rows = [(1, 2, 1), (1, 2, 0), (0, 2, 1), (1, 1, 1)]
    grades_rows = [(3, 2, 5), (4, 1, 0)]
    out = []
    for r in range(3):
        for g in range(3):
            for combo_r in itertools.combinations(roles_rows, r):
                for combo_g in itertools.combinations(grades_rows, g):
                    out.append(
                        ConcreteInput(
                            "i", "h",
                            {"courses": ((1,), (2,)), "roles": combo_r, "grades": combo_g},
                            {"MyUserId": 1, "Now": 0}, {"CourseId": 2},
                        )
                    )
    return out


def _expected_product(cq, inst, schema, session, request):
    """The conjoining invariant, computed directly: the Cartesian product of
    the condition queries' results joined with the query's own rows, empty
    as soon as a condition fails."""
    states = [({}, ())]
    for rec in cq.conditions:
        new_states = []
        for rows_env, acc in states:
            env = ScalarEnv(session=session, request=request, rows=rows_env)
            if isinstance(rec, CondBranch):
                if eval_branch(rec.pred, env) == rec.outcome:
                    new_states.append((rows_env, acc))
            else:
                env.placeholders = tuple(env.lookup(s) for s in rec.params)
                for row in eval_nf(rec.nf, inst, schema, env):
                    projected = tuple(row)
                    new_env = dict(rows_env)
                    new_env[rec.index] = row
                    new_states.append((new_env, acc + projected))
        states = new_states
    out = set()
    for rows_env, acc in states:
        env = ScalarEnv(session=session, request=request, rows=rows_env)
        env.placeholders = tuple(env.lookup(s) for s in cq.params)
        for row in eval_nf(cq.sql, inst, schema, env):
            out.add(acc + tuple(row))
    return frozenset(out)


def test_conjoining_invariant_on_bounded_instances(grade_schema):
    cq = second_cq(grade_schema)
    view = generate_view(cq, grade_schema)
    for inst in _grade_instances(grade_schema):
        for my_user in (0, 1):
            for course in (1, 2):
                session = {"MyUserId": my_user, "Now": 0}
                request = {"CourseId": course}
                env = ScalarEnv(session=session, request=request)
                got = eval_nf(view, inst, grade_schema, env)
                want = _expected_product(cq, inst, grade_schema, session, request)
                assert got == want


# ---------------------------------------------------------------------------
# Request parameter removal


def test_removal_produces_framed_view(grade_schema):
    trace = generate_view_trace(second_cq(grade_schema), grade_schema)
    out = remove_request_params(trace[-1], grade_schema)
    assert unparse_view(out, grade_schema) == (
        "SELECT * FROM roles, grades\n"
        "WHERE roles.user_id = MyUserId\n"
        "  AND roles.is_instructor\n"
        "  AND grades.course_id = roles.course_id"
    )


def test_removal_noop_without_request_params(grade_schema):
    nf = to_normal_form(parse_sql("SELECT * FROM roles WHERE user_id = MyUserId"), grade_schema)
    assert remove_request_params(nf, grade_schema) == nf


def test_removal_projects_column_when_not_projected(toys_schema):
    nf = to_normal_form(parse_sql("SELECT id FROM items WHERE category = Cat"), toys_schema)
    out = remove_request_params(nf, toys_schema)
    assert out.projection == (0, 3)  # category appended
    assert out.filter == TRUE


def test_removal_skips_projection_when_forced_equal(grade_schema):
    nf = to_normal_form(
        parse_sql(
            "SELECT grades.* FROM roles, grades"
            " WHERE roles.course_id = CourseId AND grades.course_id = roles.course_id"
        ),
        grade_schema,
    )
    out = remove_request_params(nf, grade_schema)
    assert out.projection == nf.projection  # grades.course_id already projected


def test_double_occurrence_is_hard_error(grade_schema):
    nf = to_normal_form(
        parse_sql("SELECT * FROM grades WHERE user_id = X AND course_id = X"), grade_schema
    )
    with pytest.raises(RequestParamRemovalError):
        remove_request_params(nf, grade_schema)


def test_nullable_column_is_hard_error():
    from polex.schema import parse_schema

    schema = parse_schema("table t { a int nullable }")
    nf = to_normal_form(parse_sql("SELECT * FROM t WHERE a = X"), schema)
    with pytest.raises(RequestParamRemovalError):
        remove_request_params(nf, schema)


def test_non_equality_occurrence_is_hard_error(grade_schema):
    nf = to_normal_form(parse_sql("SELECT * FROM grades WHERE NOT course_id = X"), grade_schema)
    with pytest.raises(RequestParamRemovalError):
        remove_request_params(nf, grade_schema)


# ---------------------------------------------------------------------------
# LEFT JOIN splitting at the conditioned-query level


def test_left_join_query_splits_cq(toys_schema):
    sql = (
        "SELECT items.id, items.owner_id, details.body FROM items"
        " LEFT JOIN details ON items.id = details.item_id WHERE items.id = ?"
    )
    t = Transcript(
        "h", "h-0001",
        (QueryRecord(1, sql, (RequestParam("ItemId"),), False),),
        "rendered",
    )
    cqs = to_conditioned_queries([t], toys_schema)
    assert len(cqs) == 2
    tags = sorted(len(c.sql.sources) for c in cqs)
    assert tags == [1, 2]  # the left-only part and the inner part
    assert all(c.approx for c in cqs)


def test_left_join_condition_with_null_branch(toys_schema):
    sql = (
        "SELECT items.id, items.owner_id, details.body FROM items"
        " LEFT JOIN details ON items.id = details.item_id WHERE items.id = ?"
    )
    follow = "SELECT * FROM details WHERE item_id = ?"
    base = (QueryRecord(1, sql, (RequestParam("ItemId"),), False),)
    # Path A: body observed null (the unmatched side).
    t_null = Transcript(
        "h", "h-0001",
        base + (BranchRecord(IsNull(RowCol(1, 2)), True),
                QueryRecord(2, follow, (RowCol(1, 0),), False)),
        "rendered",
    )
    cqs = to_conditioned_queries([t_null], toys_schema)
    follow_cqs = [c for c in cqs if c.sql.sources == ("details",) and c.conditions]
    # inner variant: the is_null branch survives; left-only variant: the
    # branch is vacuous under "unmatched" and is dropped.
    assert len(follow_cqs) == 2
    n_conditions = sorted(len(c.conditions) for c in follow_cqs)
    assert n_conditions == [1, 2]
    # Path B: body observed non-null kills the left-only variant.
    t_notnull = Transcript(
        "h", "h-0002",
        base + (BranchRecord(IsNull(RowCol(1, 2)), False),
                QueryRecord(2, follow, (RowCol(1, 0),), False)),
        "rendered",
    )
    cqs_b = to_conditioned_queries([t_notnull], toys_schema)
    follow_b = [c for c in cqs_b if c.sql.sources == ("details",) and c.conditions]
    assert len(follow_b) == 1
    assert len(follow_b[0].conditions) == 2


def test_completeness_views_from_cqs_deterministic(grade_schema, grade_constraints, grade_program):
    res = explore(grade_program, grade_schema, grade_constraints, ExplorationConfig())
    cqs = simplify(
        to_conditioned_queries(res.transcripts, grade_schema),
        grade_schema, grade_constraints, {"CourseId": "int"},
    )
    v1 = views_from_cqs(cqs, grade_schema)
    v2 = views_from_cqs(cqs, grade_schema)
    assert v1 == v2
