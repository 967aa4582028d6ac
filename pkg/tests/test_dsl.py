from __future__ import annotations

import pytest

from polex.dsl import (
    AbortIfEmpty,
    ComputedArgumentError,
    DslError,
    IfStmt,
    LetQuery,
    RenderStmt,
    UseBeforeGuardError,
    parse_handler,
)


def test_grade_sheet_handler_parses(grade_program):
    assert grade_program.name == "view_grade_sheet"
    assert grade_program.request_params == (("CourseId", "int"),)
    assert len(grade_program.body) == 5
    kinds = [type(s).__name__ for s in grade_program.body]
    assert kinds == ["LetQuery", "AbortIfEmpty", "IfStmt", "LetQuery", "RenderStmt"]


def test_empty_handler_is_valid():
    p = parse_handler("handler nothing() { }")
    assert p.body == ()
    assert p.queries == {}


def test_computed_argument_rejected():
    with pytest.raises(ComputedArgumentError):
        parse_handler(
            'handler h(Uid: int) { let x = query("SELECT * FROM t WHERE a = ?", Uid * Uid); render(x); }'
        )


def test_unguarded_field_access_rejected():
    with pytest.raises(UseBeforeGuardError):
        parse_handler(
            """
handler h() {
  let x = query("SELECT * FROM t WHERE a = ?", MyUserId);
  let y = query("SELECT * FROM t WHERE a = ?", x.a);
  render(y);
}
"""
        )


def test_abort_if_empty_guards_following_statements():
    p = parse_handler(
        """
handler h() {
  let x = query("SELECT * FROM t WHERE a = ?", MyUserId);
  abort_if_empty(x, 404);
  let y = query("SELECT * FROM t WHERE a = ?", x.a);
  render(y);
}
"""
    )
    assert isinstance(p.body[2], LetQuery)


def test_nonempty_guard_in_then_branch():
    parse_handler(
        """
handler h() {
  let x = query("SELECT * FROM t WHERE a = ?", MyUserId);
  if (nonempty(x)) {
    let y = query("SELECT * FROM t WHERE a = ?", x.a);
    render(y);
  }
  abort(404);
}
"""
    )


def test_negated_nonempty_guards_else_branch():
    parse_handler(
        """
handler h() {
  let x = query("SELECT * FROM t WHERE a = ?", MyUserId);
  if (!nonempty(x)) {
    abort(404);
  }
  let y = query("SELECT * FROM t WHERE a = ?", x.a);
  render(y);
}
"""
    )


def test_then_branch_does_not_leak_guard():
    with pytest.raises(UseBeforeGuardError):
        parse_handler(
            """
handler h() {
  let x = query("SELECT * FROM t WHERE a = ?", MyUserId);
  if (nonempty(x)) {
    render(x);
  }
  let y = query("SELECT * FROM t WHERE a = ?", x.a);
  render(y);
}
"""
        )


def test_placeholder_arity_checked():
    with pytest.raises(DslError) as e:
        parse_handler('handler h() { let x = query("SELECT * FROM t WHERE a = ?"); render(x); }')
    assert "placeholder" in str(e.value)


def test_unreachable_statement_rejected():
    with pytest.raises(DslError) as e:
        parse_handler("handler h() { abort(404); render(); }")
    assert "unreachable" in str(e.value)


def test_duplicate_binding_rejected():
    with pytest.raises(DslError):
        parse_handler(
            'handler h() { let x = query("SELECT * FROM t"); let x = query("SELECT * FROM t"); }'
        )


def test_request_params_must_be_camelcase():
    with pytest.raises(DslError):
        parse_handler("handler h(uid: int) { }")


def test_session_param_cannot_be_redeclared():
    with pytest.raises(DslError):
        parse_handler("handler h(MyUserId: int) { }")


def test_condition_operators_outside_instrumented_set():
    with pytest.raises(DslError) as e:
        parse_handler(
            'handler h(A: int) { let x = query("SELECT * FROM t"); if (A < 3) { abort(1); } render(x); }'
        )
    assert "instrumented" in str(e.value)


def test_count_fields_not_referenceable():
    with pytest.raises(DslError):
        parse_handler(
            """
handler h() {
  let n = query("SELECT COUNT(*) FROM t");
  if (n.count = 0) { abort(1); }
  render(n);
}
"""
        )


def test_exists_fields_not_referenceable():
    with pytest.raises(DslError):
        parse_handler(
            """
handler h() {
  let e = query("SELECT 1 FROM t LIMIT 1");
  abort_if_empty(e, 404);
  render(e.a);
}
"""
        )


def test_literals_collected(grade_program):
    # The grade-sheet handler has no integer literals in conditions or SQL.
    assert grade_program.literals == frozenset()


def test_sql_and_program_literals_collected():
    p = parse_handler(
        'handler h(A: int) { let x = query("SELECT * FROM t WHERE a = 7"); if (A = 3) { render(x); } abort(2); }'
    )
    assert p.literals == {3, 7}
