"""Bounded information containment and policy minimization.

A query is allowed under a policy iff it can be answered from the views
alone.  We decide this at a finite bound with the standard two-instance
formulation: search for two constraint-satisfying instances (within the
table bound and value range) that share session-parameter values and
agree on every view's result set yet disagree on the query.  No such
pair means Allowed (at this bound); a found pair is verified by
brute-force evaluation before it is reported.

Pruning walks views in decreasing join count (ties: longer SQL text
first, then lexicographic) and greedily removes any view already
answerable from the rest; Unknown verdicts never remove a view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .constraints import Constraint, validate_instance
from .evaluate import ScalarEnv, eval_nf
from .fdsolver import CdclBackend, VarPool, land, lnot, lor
from .instance import ConcreteInput
from .normal import NormalFormQuery
from .policygen import View
from .schema import Schema
from .solver import (
    SymEnv,
    check,
    encode_instance,
    model_to_input,
    result_pairs,
    sym_value_eq,
)
from .unparse import unparse_view

ALLOWED = "allowed"
NOT_ALLOWED = "not_allowed"
UNKNOWN = "unknown"


@dataclass
class ContainmentVerdict:
    status: str
    counterexample: tuple[ConcreteInput, ConcreteInput] | None = None

    @property
    def allowed(self) -> bool:
        return self.status == ALLOWED


@dataclass
class Policy:
    views: list[View]
    bound: int = 2
    value_range: tuple[int, int] = (0, 7)

    def view_queries(self) -> list[NormalFormQuery]:
        return [v.nf for v in self.views]


class PrunerError(Exception):
    pass


def _tuple_eq(ta, tb):
    return land(*[sym_value_eq(a, b) for a, b in zip(ta, tb)])


def _set_eq(pairs_a, pairs_b):
    """Result sets equal: mutual membership over distinct tuples."""
    parts = []
    for g, tup in pairs_a:
        member = lor(*[land(g2, _tuple_eq(tup, tup2)) for g2, tup2 in pairs_b])
        parts.append(lor(lnot(g), member))
    for g, tup in pairs_b:
        member = lor(*[land(g2, _tuple_eq(tup, tup2)) for g2, tup2 in pairs_a])
        parts.append(lor(lnot(g), member))
    return land(*parts)


def _set_neq(pairs_a, pairs_b):
    """Some tuple of A's result with no equal tuple in B's.

    One direction suffices: the two instances are interchangeable, so any
    distinguishing pair can be swapped into this orientation.
    """
    parts = []
    for g, tup in pairs_a:
        others = [land(g2, _tuple_eq(tup, tup2)) for g2, tup2 in pairs_b]
        parts.append(land(g, *[lnot(o) for o in others]))
    return lor(*parts)


def is_allowed(
    q: NormalFormQuery,
    views: list[NormalFormQuery],
    constraints: list[Constraint],
    schema: Schema,
    bound: int = 2,
    value_range: tuple[int, int] = (0, 7),
    timeout_s: float = 5.0,
    backend=None,
) -> ContainmentVerdict:
    """Bounded determinacy check of `q` against `views`."""
    pool = VarPool()
    lo, hi = value_range
    env = SymEnv()
    env.params["MyUserId"] = pool.new_int("MyUserId", lo, hi)
    env.params["Now"] = pool.new_int("Now", lo, hi)
    inst_a, labeled_a = encode_instance(schema, constraints, bound, pool, value_range, prefix="A.")
    inst_b, labeled_b = encode_instance(schema, constraints, bound, pool, value_range, prefix="B.")
    labeled = labeled_a + labeled_b
    for k, v in enumerate(views):
        pa = result_pairs(v, inst_a, schema, env)
        pb = result_pairs(v, inst_b, schema, env)
        labeled.append((f"agree:view{k}", _set_eq(pa, pb)))
    qa = result_pairs(q, inst_a, schema, env)
    qb = result_pairs(q, inst_b, schema, env)
    labeled.append(("differ:query", _set_neq(qa, qb)))
    # Cores are not needed here; asserting everything as hard formulas lets
    # the backend propagate them at the root level.
    verdict = check(pool, [], [f for _, f in labeled], backend or CdclBackend(), timeout_s)
    if verdict.status == "unknown":
        return ContainmentVerdict(UNKNOWN)
    if verdict.status == "unsat":
        return ContainmentVerdict(ALLOWED)
    model = verdict.model
    ca = model_to_input(model, inst_a, schema, env, "counterexample-a", "")
    cb = model_to_input(model, inst_b, schema, env, "counterexample-b", "")
    _verify_counterexample(q, views, constraints, schema, ca, cb)
    return ContainmentVerdict(NOT_ALLOWED, (ca, cb))


def _verify_counterexample(q, views, constraints, schema, ca, cb) -> None:
    """A NotAllowed verdict must hold under brute-force evaluation."""
    for ci in (ca, cb):
        ok, viol = validate_instance(ci, constraints, schema)
        if not ok:
            raise PrunerError(f"counterexample violates constraints: {viol}")
    if ca.session != cb.session:
        raise PrunerError("counterexample instances disagree on session parameters")
    env_a = ScalarEnv(session=dict(ca.session))
    env_b = ScalarEnv(session=dict(cb.session))
    for v in views:
        if eval_nf(v, ca, schema, env_a) != eval_nf(v, cb, schema, env_b):
            raise PrunerError("counterexample instances disagree on a policy view")
    if eval_nf(q, ca, schema, env_a) == eval_nf(q, cb, schema, env_b):
        raise PrunerError("counterexample instances agree on the checked query")


def _prune_order(views: list[View], schema: Schema) -> list[View]:
    def key(v: View):
        text = unparse_view(v.nf, schema)
        joins = len(v.nf.sources) - 1
        return (-joins, -len(text), text)

    return sorted(views, key=key)


def prune(
    policy: Policy,
    constraints: list[Constraint],
    schema: Schema,
    timeout_s: float = 5.0,
    pinned: frozenset = frozenset(),
) -> tuple[Policy, list[View]]:
    """Single greedy pass; returns (pruned policy, removed views).

    Views whose normal form is in `pinned` are never removed.
    """
    current = list(policy.views)
    removed: list[View] = []
    for v in _prune_order(policy.views, schema):
        if v.nf in pinned or v not in current:
            continue
        rest = [w.nf for w in current if w is not v]
        verdict = is_allowed(
            v.nf, rest, constraints, schema, policy.bound, policy.value_range, timeout_s
        )
        if verdict.allowed:
            current = [w for w in current if w is not v]
            removed.append(v)
    return Policy(current, policy.bound, policy.value_range), removed


def merge_and_prune(
    policies: list[Policy],
    constraints: list[Constraint],
    schema: Schema,
    timeout_s: float = 5.0,
) -> tuple[Policy, list[View]]:
    """Union of per-handler policies, deduplicated, then pruned."""
    if not policies:
        return Policy([], 2), []
    bound = policies[0].bound
    value_range = policies[0].value_range
    merged: list[View] = []
    seen = set()
    for p in policies:
        if (p.bound, p.value_range) != (bound, value_range):
            raise PrunerError("policies merged with different bounds")
        for v in p.views:
            if v.nf not in seen:
                seen.add(v.nf)
                merged.append(v)
    return prune(Policy(merged, bound, value_range), constraints, schema, timeout_s)


@dataclass
class BroadenReport:
    removed: list[tuple[View, list[int]]] = field(default_factory=list)
    # each removed view is attributed to the indices of the user views
    # that individually make it redundant (empty: only jointly redundant)


def broaden(
    policy: Policy,
    user_views: list[View],
    constraints: list[Constraint],
    schema: Schema,
    timeout_s: float = 5.0,
) -> tuple[Policy, BroadenReport]:
    """Add pinned user views, re-prune, and report what became redundant."""
    seen = {v.nf for v in policy.views}
    added = [v for v in user_views if v.nf not in seen]
    combined = Policy(policy.views + added, policy.bound, policy.value_range)
    pinned = frozenset(v.nf for v in user_views)
    pruned, removed = prune(combined, constraints, schema, timeout_s, pinned=pinned)
    report = BroadenReport()
    base = [v.nf for v in pruned.views if v.nf not in pinned]
    for v in removed:
        blame: list[int] = []
        for i, u in enumerate(user_views):
            verdict = is_allowed(
                v.nf, base + [u.nf], constraints, schema, policy.bound, policy.value_range, timeout_s
            )
            if verdict.allowed:
                blame.append(i)
        report.removed.append((v, blame))
    return pruned, report
