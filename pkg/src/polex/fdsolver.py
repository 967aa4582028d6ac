"""Finite-domain satisfiability core.

Everything the workbench asks a solver is a quantifier-free boolean
combination of comparisons between integer symbols drawn from small
bounded domains (database values are restricted to a configurable range,
[0, 7] by default) plus free boolean symbols.  That makes the problems
finite, so instead of an external SMT engine we compile to SAT:

  * each int symbol becomes a one-hot vector of SAT variables over its
    domain, with exactly-one side clauses;
  * comparison atoms become clauses over the one-hot vectors;
  * the boolean structure is Tseitin-encoded with full equivalences.

`check` runs a small CDCL (two-watched literals, 1UIP learning, VSIDS-ish
activities, phase saving) under one selector assumption per labeled
formula, which yields unsat cores the usual way; cores are then shrunk by
deletion so that re-checking only the core is still unsat.  All heuristics
are deterministic, so identical inputs give identical models.

A brute-force enumeration backend over the same formula IR serves as the
reference implementation in tests.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from heapq import heapify as _heapify, heappop as _heappop, heappush as _heappush

from .terms import cmp_eval

# ---------------------------------------------------------------------------
# Formula IR: plain tuples, hashable and cheap.
#
#   ("true",) | ("false",)
#   ("bv", vid)
#   ("not", f) | ("and", (f, ...)) | ("or", (f, ...))
#   ("cmp", op, term, term)        term = ("v", vid) | ("c", int)

TRUE_F = ("true",)
FALSE_F = ("false",)


def bvar(vid: int):
    return ("bv", vid)


def ivar(vid: int):
    return ("v", vid)


def const(value: int):
    return ("c", value)


def lnot(f):
    if f == TRUE_F:
        return FALSE_F
    if f == FALSE_F:
        return TRUE_F
    if f[0] == "not":
        return f[1]
    return ("not", f)


def land(*fs):
    flat = []
    for f in fs:
        if f == TRUE_F:
            continue
        if f == FALSE_F:
            return FALSE_F
        if f[0] == "and":
            flat.extend(f[1])
        else:
            flat.append(f)
    if not flat:
        return TRUE_F
    if len(flat) == 1:
        return flat[0]
    return ("and", tuple(flat))


def lor(*fs):
    flat = []
    for f in fs:
        if f == FALSE_F:
            continue
        if f == TRUE_F:
            return TRUE_F
        if f[0] == "or":
            flat.extend(f[1])
        else:
            flat.append(f)
    if not flat:
        return FALSE_F
    if len(flat) == 1:
        return flat[0]
    return ("or", tuple(flat))


def implies(a, b):
    return lor(lnot(a), b)


def iff(a, b):
    return land(implies(a, b), implies(b, a))


def fcmp(op: str, t1, t2):
    if t1[0] == "c" and t2[0] == "c":
        return TRUE_F if cmp_eval(op, t1[1], t2[1]) else FALSE_F
    return ("cmp", op, t1, t2)


def feq(t1, t2):
    return fcmp("=", t1, t2)


@dataclass
class VarPool:
    """Symbol registry: boolean symbols and bounded integer symbols."""

    names: list[str] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)  # "bool" | "int"
    domains: list[tuple[int, int] | None] = field(default_factory=list)

    def new_bool(self, name: str) -> int:
        self.names.append(name)
        self.kinds.append("bool")
        self.domains.append(None)
        return len(self.names) - 1

    def new_int(self, name: str, lo: int, hi: int) -> int:
        if hi < lo:
            raise ValueError("empty domain")
        self.names.append(name)
        self.kinds.append("int")
        self.domains.append((lo, hi))
        return len(self.names) - 1

    def __len__(self) -> int:
        return len(self.names)


def eval_formula(f, model: dict) -> bool:
    """Evaluate IR against a model mapping vid -> bool/int."""
    op = f[0]
    if op == "true":
        return True
    if op == "false":
        return False
    if op == "bv":
        return bool(model[f[1]])
    if op == "not":
        return not eval_formula(f[1], model)
    if op == "and":
        return all(eval_formula(g, model) for g in f[1])
    if op == "or":
        return any(eval_formula(g, model) for g in f[1])
    if op == "cmp":
        a = f[2][1] if f[2][0] == "c" else model[f[2][1]]
        b = f[3][1] if f[3][0] == "c" else model[f[3][1]]
        return cmp_eval(f[1], a, b)
    raise ValueError(f"bad formula node {f!r}")


# ---------------------------------------------------------------------------
# CNF compilation


class _Cnf:
    def __init__(self):
        self.nvars = 0
        self.clauses: list[list[int]] = []

    def new_var(self) -> int:
        self.nvars += 1
        return self.nvars - 1

    def add(self, lits: list[int]) -> None:
        seen = set()
        out = []
        for l in lits:
            if l ^ 1 in seen:
                return  # tautology
            if l not in seen:
                seen.add(l)
                out.append(l)
        self.clauses.append(out)


class Compiler:
    """Compile formula IR over a VarPool into CNF with named selectors."""

    def __init__(self, pool: VarPool):
        self.pool = pool
        self.cnf = _Cnf()
        self.cache: dict = {}
        self.bool_sat: dict[int, int] = {}
        self.onehot: dict[int, dict[int, int]] = {}  # vid -> value -> sat var
        self._true_lit: int | None = None
        for vid in range(len(pool)):
            if pool.kinds[vid] == "bool":
                self.bool_sat[vid] = self.cnf.new_var()
            else:
                lo, hi = pool.domains[vid]
                hot = {v: self.cnf.new_var() for v in range(lo, hi + 1)}
                self.onehot[vid] = hot
                lits = [2 * s for s in hot.values()]
                self.cnf.add(lits)  # at least one
                vals = list(hot.values())
                for i in range(len(vals)):
                    for j in range(i + 1, len(vals)):
                        self.cnf.add([2 * vals[i] + 1, 2 * vals[j] + 1])

    def true_lit(self) -> int:
        if self._true_lit is None:
            v = self.cnf.new_var()
            self.cnf.add([2 * v])
            self._true_lit = 2 * v
        return self._true_lit

    def _aux(self) -> int:
        return self.cnf.new_var()

    def lit(self, f) -> int:
        """SAT literal equivalent to formula `f` (adds defining clauses)."""
        if f in self.cache:
            return self.cache[f]
        out = self._compile(f)
        self.cache[f] = out
        return out

    def _compile(self, f) -> int:
        op = f[0]
        if op == "true":
            return self.true_lit()
        if op == "false":
            return self.true_lit() ^ 1
        if op == "bv":
            return 2 * self.bool_sat[f[1]]
        if op == "not":
            return self.lit(f[1]) ^ 1
        if op == "and":
            lits = [self.lit(g) for g in f[1]]
            g = self._aux()
            gl = 2 * g
            for l in lits:
                self.cnf.add([gl ^ 1, l])
            self.cnf.add([gl] + [l ^ 1 for l in lits])
            return gl
        if op == "or":
            lits = [self.lit(g) for g in f[1]]
            g = self._aux()
            gl = 2 * g
            self.cnf.add([gl ^ 1] + lits)
            for l in lits:
                self.cnf.add([gl, l ^ 1])
            return gl
        if op == "cmp":
            return self._compile_cmp(f)
        raise ValueError(f"bad formula node {f!r}")

    def _value_set_lit(self, vid: int, values: list[int]) -> int:
        """Literal for "vid takes a value in `values`" given exactly-one."""
        hot = self.onehot[vid]
        domain = list(hot.keys())
        inside = [v for v in domain if v in values]
        if not inside:
            return self.true_lit() ^ 1
        if len(inside) == len(domain):
            return self.true_lit()
        if len(inside) == 1:
            return 2 * hot[inside[0]]
        if len(inside) == len(domain) - 1:
            (only,) = [v for v in domain if v not in values]
            return 2 * hot[only] + 1
        g = self._aux()
        gl = 2 * g
        self.cnf.add([gl ^ 1] + [2 * hot[v] for v in inside])
        for v in inside:
            self.cnf.add([gl, 2 * hot[v] + 1])
        return gl

    def _compile_cmp(self, f) -> int:
        _, op, t1, t2 = f
        if t1[0] == "c" and t2[0] == "c":
            return self.true_lit() if cmp_eval(op, t1[1], t2[1]) else self.true_lit() ^ 1
        if t1[0] == "c":
            vid = t2[1]
            values = [v for v in self.onehot[vid] if cmp_eval(op, t1[1], v)]
            return self._value_set_lit(vid, values)
        if t2[0] == "c":
            vid = t1[1]
            values = [v for v in self.onehot[vid] if cmp_eval(op, v, t2[1])]
            return self._value_set_lit(vid, values)
        x, y = t1[1], t2[1]
        if x == y:
            values = [v for v in self.onehot[x] if cmp_eval(op, v, v)]
            return self._value_set_lit(x, values)
        if op == "<>":
            return self.lit(("cmp", "=", t1, t2)) ^ 1
        hx, hy = self.onehot[x], self.onehot[y]
        g = self._aux()
        gl = 2 * g
        if op == "=":
            # g <-> (x == y), exploiting the shared domain values.
            for u, su in hx.items():
                sw = hy.get(u)
                if sw is None:
                    self.cnf.add([gl ^ 1, 2 * su + 1])  # value unavailable on y
                    continue
                self.cnf.add([gl ^ 1, 2 * su + 1, 2 * sw])
                self.cnf.add([gl ^ 1, 2 * sw + 1, 2 * su])
                self.cnf.add([gl, 2 * su + 1, 2 * sw + 1])
            for w, sw in hy.items():
                if w not in hx:
                    self.cnf.add([gl ^ 1, 2 * sw + 1])
            return gl
        for u, su in hx.items():
            for w, sw in hy.items():
                if cmp_eval(op, u, w):
                    self.cnf.add([2 * su + 1, 2 * sw + 1, gl])
                else:
                    self.cnf.add([2 * su + 1, 2 * sw + 1, gl ^ 1])
        return gl

    def model_from_sat(self, assigns: list) -> dict:
        model: dict = {}
        for vid in range(len(self.pool)):
            if self.pool.kinds[vid] == "bool":
                model[vid] = assigns[self.bool_sat[vid]] == 1
            else:
                value = None
                for v, s in self.onehot[vid].items():
                    if assigns[s] == 1:
                        value = v
                        break
                # exactly-one guarantees a hit
                model[vid] = value
        return model


# ---------------------------------------------------------------------------
# CDCL


class _Timeout(Exception):
    pass


def _luby(x: int) -> int:
    """Luby restart sequence 1,1,2,1,1,2,4,... (0-indexed)."""
    size, seq = 1, 0
    while size < x + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != x:
        size = (size - 1) >> 1
        seq -= 1
        x = x % size
    return 1 << seq


class _Cdcl:
    """Minisat-style solver over a fixed clause database."""

    def __init__(self, nvars: int, clauses: list[list[int]], deadline: float | None):
        self.nvars = nvars
        self.clauses = [list(c) for c in clauses]
        self.deadline = deadline
        self.assigns: list = [None] * nvars
        self.level = [0] * nvars
        self.reason: list = [None] * nvars
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.watches: list[list[int]] = [[] for _ in range(2 * nvars)]
        self.activity = [0.0] * nvars
        self.var_inc = 1.0
        self.phase = [0] * nvars
        self.heap: list[tuple[float, int]] = [(0.0, v) for v in range(nvars)]
        self.ok = True
        self.conflicts = 0
        for ci, clause in enumerate(self.clauses):
            if not self._attach(ci, clause):
                self.ok = False
                return

    def _attach(self, ci: int, clause: list[int]) -> bool:
        if len(clause) == 0:
            return False
        if len(clause) == 1:
            return self.enqueue(clause[0], None)
        self.watches[clause[0]].append(ci)
        self.watches[clause[1]].append(ci)
        return True

    def value(self, lit: int):
        a = self.assigns[lit >> 1]
        if a is None:
            return None
        return a != (lit & 1)

    def enqueue(self, lit: int, reason) -> bool:
        v = lit >> 1
        a = self.assigns[v]
        if a is not None:
            return a == ((lit & 1) ^ 1)
        self.assigns[v] = (lit & 1) ^ 1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)
        return True

    def propagate(self):
        while self.qhead < len(self.trail):
            p = self.trail[self.qhead]
            self.qhead += 1
            fl = p ^ 1
            ws = self.watches[fl]
            i = j = 0
            n = len(ws)
            while i < n:
                ci = ws[i]
                i += 1
                clause = self.clauses[ci]
                if clause[0] == fl:
                    clause[0], clause[1] = clause[1], clause[0]
                first = clause[0]
                if self.value(first) is True:
                    ws[j] = ci
                    j += 1
                    continue
                found = False
                for k in range(2, len(clause)):
                    if self.value(clause[k]) is not False:
                        clause[1], clause[k] = clause[k], clause[1]
                        self.watches[clause[1]].append(ci)
                        found = True
                        break
                if found:
                    continue
                ws[j] = ci
                j += 1
                if self.value(first) is False:
                    while i < n:
                        ws[j] = ws[i]
                        j += 1
                        i += 1
                    del ws[j:]
                    self.qhead = len(self.trail)
                    return ci
                self.enqueue(first, ci)
            del ws[j:]
        return None

    def decision_level(self) -> int:
        return len(self.trail_lim)

    def new_level(self) -> None:
        self.trail_lim.append(len(self.trail))

    def cancel_until(self, lvl: int) -> None:
        if self.decision_level() <= lvl:
            return
        heappush = _heappush
        for i in range(len(self.trail) - 1, self.trail_lim[lvl] - 1, -1):
            lit = self.trail[i]
            v = lit >> 1
            self.phase[v] = self.assigns[v]
            self.assigns[v] = None
            self.reason[v] = None
            heappush(self.heap, (-self.activity[v], v))
        del self.trail[self.trail_lim[lvl]:]
        del self.trail_lim[lvl:]
        self.qhead = len(self.trail)

    def bump(self, v: int) -> None:
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for i in range(self.nvars):
                self.activity[i] *= 1e-100
            self.var_inc *= 1e-100
            self.heap = [(-self.activity[x], x) for x in range(self.nvars) if self.assigns[x] is None]
            _heapify(self.heap)
            return
        if self.assigns[v] is None:
            _heappush(self.heap, (-self.activity[v], v))

    def analyze(self, confl: int):
        learnt = [0]
        seen = [False] * self.nvars
        counter = 0
        p = None
        index = len(self.trail) - 1
        cur_level = self.decision_level()
        while True:
            clause = self.clauses[confl]
            start = 0 if p is None else 1
            for q in clause[start:]:
                v = q >> 1
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self.bump(v)
                    if self.level[v] >= cur_level:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[self.trail[index] >> 1]:
                index -= 1
            p = self.trail[index]
            v = p >> 1
            index -= 1
            seen[v] = False
            counter -= 1
            if counter == 0:
                break
            confl = self.reason[v]
        learnt[0] = p ^ 1
        # Local minimization: drop literals implied by the rest of the clause.
        if len(learnt) > 2:
            marked = {q >> 1 for q in learnt}
            kept = [learnt[0]]
            for q in learnt[1:]:
                r = self.reason[q >> 1]
                if r is None:
                    kept.append(q)
                    continue
                if all((w >> 1) in marked or self.level[w >> 1] == 0 for w in self.clauses[r][1:]):
                    continue  # redundant
                kept.append(q)
            learnt = kept
        if len(learnt) == 1:
            bt = 0
        else:
            # move the highest-level literal (other than learnt[0]) to slot 1
            max_i = 1
            for i in range(2, len(learnt)):
                if self.level[learnt[i] >> 1] > self.level[learnt[max_i] >> 1]:
                    max_i = i
            learnt[1], learnt[max_i] = learnt[max_i], learnt[1]
            bt = self.level[learnt[1] >> 1]
        return learnt, bt

    def analyze_final(self, p: int) -> list[int]:
        """Assumption literals responsible for forcing ~p; p is an assumption."""
        core = [p]
        if self.decision_level() == 0:
            return core
        seen = [False] * self.nvars
        seen[p >> 1] = True
        for i in range(len(self.trail) - 1, self.trail_lim[0] - 1, -1):
            lit = self.trail[i]
            v = lit >> 1
            if not seen[v]:
                continue
            if self.reason[v] is None:
                core.append(lit)
            else:
                for q in self.clauses[self.reason[v]][1:]:
                    if self.level[q >> 1] > 0:
                        seen[q >> 1] = True
            seen[v] = False
        return core

    def _check_time(self) -> None:
        if self.deadline is not None and self.conflicts % 64 == 0:
            if time.monotonic() > self.deadline:
                raise _Timeout()

    def decide_var(self) -> int | None:
        heap = self.heap
        while heap:
            act, v = _heappop(heap)
            if self.assigns[v] is None and -act == self.activity[v]:
                return v
        for v in range(self.nvars):  # heap may be stale after rescaling
            if self.assigns[v] is None:
                return v
        return None

    def solve(self, assumptions: list[int]):
        """Returns ("sat", assigns) | ("unsat", core_lits)."""
        if not self.ok:
            return "unsat", []
        if self.propagate() is not None:
            return "unsat", []
        restart_count = 0
        conflicts_left = 64 * _luby(restart_count)
        while True:
            confl = self.propagate()
            if confl is not None:
                self.conflicts += 1
                conflicts_left -= 1
                self._check_time()
                if self.decision_level() == 0:
                    return "unsat", []
                learnt, bt = self.analyze(confl)
                self.cancel_until(bt)
                ci = len(self.clauses)
                self.clauses.append(learnt)
                if len(learnt) == 1:
                    self.enqueue(learnt[0], None)
                else:
                    self.watches[learnt[0]].append(ci)
                    self.watches[learnt[1]].append(ci)
                    self.enqueue(learnt[0], ci)
                self.var_inc /= 0.95
                continue
            if conflicts_left <= 0 and self.decision_level() > len(assumptions):
                restart_count += 1
                conflicts_left = 64 * _luby(restart_count)
                self.cancel_until(len(assumptions))
                continue
            # extend with assumptions, then decide
            next_lit = None
            while self.decision_level() < len(assumptions):
                p = assumptions[self.decision_level()]
                v = self.value(p)
                if v is True:
                    self.new_level()
                elif v is False:
                    return "unsat", self.analyze_final(p)
                else:
                    next_lit = p
                    break
            if next_lit is None:
                v = self.decide_var()
                if v is None:
                    return "sat", list(self.assigns)
                next_lit = 2 * v + (1 - self.phase[v])
            self.new_level()
            self.enqueue(next_lit, None)


# ---------------------------------------------------------------------------
# Public check interface


@dataclass
class CheckResult:
    status: str  # "sat" | "unsat" | "unknown"
    model: dict | None = None  # vid -> bool/int
    core: list[str] | None = None  # labels


class InternalSolverError(Exception):
    pass


class CdclBackend:
    """Default backend: compile to SAT and run the CDCL under assumptions."""

    name = "cdcl"

    def check(
        self,
        pool: VarPool,
        labeled: list[tuple[str, tuple]],
        hard: list[tuple] = (),
        timeout_s: float | None = 5.0,
        shrink_cores: bool = True,
    ) -> CheckResult:
        deadline = None if timeout_s is None else time.monotonic() + timeout_s
        comp = Compiler(pool)
        for f in hard:
            comp.cnf.add([comp.lit(f)])
        label_sel: dict[str, int] = {}
        sel_label: dict[int, str] = {}
        for label, f in labeled:
            if label in label_sel:
                raise InternalSolverError(f"duplicate formula label {label!r}")
            s = comp.cnf.new_var()
            comp.cnf.add([2 * s + 1, comp.lit(f)])
            label_sel[label] = s
            sel_label[s] = label

        def solve_subset(labels: list[str]):
            solver = _Cdcl(comp.cnf.nvars, comp.cnf.clauses, deadline)
            return solver.solve([2 * label_sel[l] for l in labels])

        all_labels = [label for label, _ in labeled]
        try:
            status, payload = solve_subset(all_labels)
        except _Timeout:
            return CheckResult("unknown")
        if status == "sat":
            model = comp.model_from_sat(payload)
            self._verify_model(model, labeled, hard)
            return CheckResult("sat", model=model)
        core = [l for l in all_labels if label_sel[l] in {q >> 1 for q in payload}]
        if shrink_cores:
            core = self._shrink(solve_subset, core, deadline)
        return CheckResult("unsat", core=core)

    @staticmethod
    def _shrink(solve_subset, core: list[str], deadline) -> list[str]:
        """Deletion-based minimization; the result is always a correct core."""
        i = 0
        while i < len(core):
            if deadline is not None and time.monotonic() > deadline:
                break
            trial = core[:i] + core[i + 1:]
            try:
                status, _payload = solve_subset(trial)
            except _Timeout:
                break
            if status == "unsat":
                core = trial
            else:
                i += 1
        return core

    @staticmethod
    def _verify_model(model, labeled, hard) -> None:
        for f in hard:
            if not eval_formula(f, model):
                raise InternalSolverError("model does not satisfy a hard formula")
        for label, f in labeled:
            if not eval_formula(f, model):
                raise InternalSolverError(f"model does not satisfy formula {label!r}")


class EnumerationBackend:
    """Reference backend: enumerate all assignments (tiny problems only)."""

    name = "enumerate"

    def check(
        self,
        pool: VarPool,
        labeled: list[tuple[str, tuple]],
        hard: list[tuple] = (),
        timeout_s: float | None = 5.0,
        shrink_cores: bool = True,
    ) -> CheckResult:
        deadline = None if timeout_s is None else time.monotonic() + timeout_s
        spaces = []
        for vid in range(len(pool)):
            if pool.kinds[vid] == "bool":
                spaces.append((False, True))
            else:
                lo, hi = pool.domains[vid]
                spaces.append(tuple(range(lo, hi + 1)))

        def find_model(formulas) -> dict | None:
            for combo in itertools.product(*spaces):
                if deadline is not None and time.monotonic() > deadline:
                    raise _Timeout()
                model = dict(enumerate(combo))
                if all(eval_formula(f, model) for f in formulas):
                    return model
            return None

        by_label = dict(labeled)
        try:
            model = find_model(list(hard) + [f for _, f in labeled])
            if model is not None:
                return CheckResult("sat", model=model)
            core = [label for label, _ in labeled]
            if shrink_cores:
                i = 0
                while i < len(core):
                    trial = core[:i] + core[i + 1:]
                    if find_model(list(hard) + [by_label[l] for l in trial]) is None:
                        core = trial
                    else:
                        i += 1
            return CheckResult("unsat", core=core)
        except _Timeout:
            return CheckResult("unknown")


# ---------------------------------------------------------------------------
# Debug dump


def _smt_term(pool: VarPool, t) -> str:
    if t[0] == "c":
        return str(t[1])
    return f"|{pool.names[t[1]]}|"


def _smt_formula(pool: VarPool, f) -> str:
    op = f[0]
    if op == "true":
        return "true"
    if op == "false":
        return "false"
    if op == "bv":
        return f"|{pool.names[f[1]]}|"
    if op == "not":
        return f"(not {_smt_formula(pool, f[1])})"
    if op == "and":
        return "(and " + " ".join(_smt_formula(pool, g) for g in f[1]) + ")"
    if op == "or":
        return "(or " + " ".join(_smt_formula(pool, g) for g in f[1]) + ")"
    if op == "cmp":
        a, b = _smt_term(pool, f[2]), _smt_term(pool, f[3])
        if f[1] == "=":
            return f"(= {a} {b})"
        if f[1] == "<>":
            return f"(distinct {a} {b})"
        return f"({f[1]} {a} {b})"
    raise ValueError(f"bad formula node {f!r}")


def to_smtlib(pool: VarPool, labeled: list[tuple[str, tuple]], hard: list[tuple] = ()) -> str:
    """Render the problem as SMT-LIB2 text for offline inspection."""
    lines = ["(set-logic QF_LIA)", "(set-option :produce-unsat-cores true)"]
    for vid in range(len(pool)):
        name = pool.names[vid]
        if pool.kinds[vid] == "bool":
            lines.append(f"(declare-fun |{name}| () Bool)")
        else:
            lo, hi = pool.domains[vid]
            lines.append(f"(declare-fun |{name}| () Int)")
            lines.append(f"(assert (and (<= {lo} |{name}|) (<= |{name}| {hi})))")
    for f in hard:
        lines.append(f"(assert {_smt_formula(pool, f)})")
    for label, f in labeled:
        lines.append(f"(assert (! {_smt_formula(pool, f)} :named |{label}|))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"
