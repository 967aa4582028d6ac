from __future__ import annotations

from pathlib import Path

import pytest

from polex.constraints import expand_all, generate_constraints
from polex.dsl import parse_handler
from polex.schema import parse_schema

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grade_schema():
    return parse_schema((CORPUS / "grade_sheet" / "schema.txt").read_text())


@pytest.fixture(scope="session")
def grade_constraints(grade_schema):
    return expand_all(generate_constraints(grade_schema), grade_schema)


@pytest.fixture(scope="session")
def grade_program():
    text = (CORPUS / "grade_sheet" / "handlers" / "view_grade_sheet.hdl").read_text()
    return parse_handler(text)


@pytest.fixture(scope="session")
def toys_schema():
    return parse_schema((CORPUS / "toys" / "schema.txt").read_text())


@pytest.fixture(scope="session")
def toys_constraints(toys_schema):
    return expand_all(generate_constraints(toys_schema), toys_schema)
