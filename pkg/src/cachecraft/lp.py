"""Self-contained exact rational linear-program solver.

Primal simplex on a sparse standard-form tableau with exact rational pivots
(two phases, artificial variables for equality/>= rows).  Pricing is
Dantzig's rule for speed, with a permanent switch to Bland's anti-cycling
rule after a long run of degenerate pivots, so termination is guaranteed.
Every returned optimum is re-substituted into the original problem before it
is handed back; the solver never returns an assignment it has not verified.

Internally the tableau uses ``gmpy2.mpq`` when available (same exact
semantics as :class:`fractions.Fraction`, several times faster); the public
interface speaks Fractions only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .core import Rational, rational_str

try:  # gmpy2 is an optional accelerator; Fraction is the semantic reference
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover
    _Q = Fraction

LE = "<="
EQ = "="
GE = ">="

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpError(ValueError):
    """Malformed problem (unknown variable, duplicate label, bad relation)."""


class LpInternalError(RuntimeError):
    """The solver produced an assignment that failed re-substitution."""


@dataclass(frozen=True)
class Variable:
    name: str
    lb: Fraction
    ub: Fraction | None  # None means unbounded above


@dataclass(frozen=True)
class Constraint:
    coeffs: dict[int, Fraction]  # variable index -> coefficient
    rel: str
    rhs: Fraction
    label: str


@dataclass(frozen=True)
class Violation:
    label: str
    kind: str  # "row" | "lb" | "ub" | "missing"
    amount: Fraction
    detail: str


class LpProblem:
    """A named LP: bounded variables, sparse rows, one linear objective.

    Build it up with :meth:`add_variable` / :meth:`add_constraint` /
    :meth:`set_objective`; treat it as immutable once handed to the solver.
    """

    def __init__(self, name: str = "lp"):
        self.name = name
        self.variables: list[Variable] = []
        self._index: dict[str, int] = {}
        self.sense: str = "min"
        self.objective: dict[int, Fraction] = {}
        self.constraints: list[Constraint] = []
        self._labels: set[str] = set()

    # -- construction -------------------------------------------------

    def add_variable(self, name: str, lb: Rational = 0, ub: Rational | None = None) -> str:
        if name in self._index:
            raise LpError(f"duplicate variable {name!r}")
        lbf = Fraction(lb)
        ubf = None if ub is None else Fraction(ub)
        if ubf is not None and ubf < lbf:
            raise LpError(f"variable {name!r} has empty bound range")
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, lbf, ubf))
        return name

    def has_variable(self, name: str) -> bool:
        return name in self._index

    def set_objective(self, sense: str, coeffs: Mapping[str, Rational]) -> None:
        if sense not in ("min", "max"):
            raise LpError(f"objective sense must be 'min' or 'max', got {sense!r}")
        self.sense = sense
        self.objective = {self._var(name): Fraction(c) for name, c in coeffs.items() if c != 0}

    def add_constraint(
        self, coeffs: Mapping[str, Rational], rel: str, rhs: Rational, label: str
    ) -> None:
        if rel not in (LE, EQ, GE):
            raise LpError(f"relation must be one of <=, =, >=; got {rel!r}")
        if label in self._labels:
            raise LpError(f"duplicate constraint label {label!r}")
        self._labels.add(label)
        self.constraints.append(
            Constraint(
                coeffs={self._var(name): Fraction(c) for name, c in coeffs.items() if c != 0},
                rel=rel,
                rhs=Fraction(rhs),
                label=label,
            )
        )

    def _var(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise LpError(f"unknown variable {name!r}") from None

    # -- inspection ---------------------------------------------------

    def dump(self) -> str:
        """Human-readable text form, one constraint per line, exact fractions."""
        def term(c: Fraction, name: str) -> str:
            if c == 1:
                return name
            if c == -1:
                return f"-{name}"
            return f"{rational_str(c)} {name}"

        lines = [f"# {self.name}"]
        obj = " + ".join(
            term(c, self.variables[j].name) for j, c in sorted(self.objective.items())
        ) or "0"
        lines.append(f"{self.sense} {obj}")
        lines.append("s.t.")
        for con in self.constraints:
            body = " + ".join(
                term(c, self.variables[j].name) for j, c in sorted(con.coeffs.items())
            ) or "0"
            lines.append(f"  {con.label}: {body} {con.rel} {rational_str(con.rhs)}")
        for v in self.variables:
            hi = "inf" if v.ub is None else rational_str(v.ub)
            lines.append(f"  bounds: {rational_str(v.lb)} <= {v.name} <= {hi}")
        return "\n".join(lines)


@dataclass(frozen=True)
class LpSolution:
    status: str
    value: Fraction | None
    assignment: dict[str, Fraction]
    tight_constraints: frozenset[str] = field(default_factory=frozenset)


# ---------------------------------------------------------------------------
# Feasibility checking (also the post-solve verifier)
# ---------------------------------------------------------------------------

def check_feasible(problem: LpProblem, assignment: Mapping[str, Rational]) -> list[Violation]:
    """Every violated constraint or bound, with its violation magnitude.

    An empty list means the assignment is exactly feasible.  Raises if the
    assignment does not cover every declared variable.
    """
    values: list[Fraction] = []
    for v in problem.variables:
        if v.name not in assignment:
            raise LpError(f"assignment is missing variable {v.name!r}")
        values.append(Fraction(assignment[v.name]))

    out: list[Violation] = []
    for v, x in zip(problem.variables, values):
        if x < v.lb:
            out.append(Violation(v.name, "lb", v.lb - x, f"{v.name}={rational_str(x)} < lb {rational_str(v.lb)}"))
        if v.ub is not None and x > v.ub:
            out.append(Violation(v.name, "ub", x - v.ub, f"{v.name}={rational_str(x)} > ub {rational_str(v.ub)}"))
    for con in problem.constraints:
        lhs = sum((c * values[j] for j, c in con.coeffs.items()), Fraction(0))
        slack = con.rhs - lhs
        bad = (
            (con.rel == LE and slack < 0)
            or (con.rel == GE and slack > 0)
            or (con.rel == EQ and slack != 0)
        )
        if bad:
            out.append(
                Violation(con.label, "row", abs(slack),
                          f"{con.label}: lhs={rational_str(lhs)} {con.rel} rhs={rational_str(con.rhs)} violated")
            )
    return out


def evaluate_objective(problem: LpProblem, assignment: Mapping[str, Rational]) -> Fraction:
    return sum(
        (c * Fraction(assignment[problem.variables[j].name]) for j, c in problem.objective.items()),
        Fraction(0),
    )


# ---------------------------------------------------------------------------
# Simplex core
# ---------------------------------------------------------------------------

class _Tableau:
    """Sparse row tableau in canonical form (basic columns are unit).

    Cycling is prevented by the lexicographic ratio test: at the start of
    each phase columns are (virtually) reordered so the current basis comes
    first, making every row lexicographically positive; tied minimum ratios
    are then broken by comparing the scaled rows in that order, which makes
    each pivot a strict lexicographic decrease.  Bland's rule remains as a
    belt-and-braces fallback behind a very long degenerate streak.
    """

    __slots__ = (
        "rows", "rhs", "basis", "obj", "objrhs", "banned", "banned_pool",
        "bland", "degen", "lexmode", "lexrank", "lex_trigger",
    )

    BLAND_TRIGGER = 50_000  # last-resort fallback

    def __init__(self, nrows_hint: int):
        self.rows: list[dict[int, object] | None] = []
        self.rhs: list[object] = []
        self.basis: list[int] = []
        self.obj: dict[int, object] = {}
        self.objrhs = _Q(0)
        self.banned: set[int] = set()
        self.banned_pool: frozenset[int] | set[int] = frozenset()
        self.bland = False
        self.degen = 0
        self.lexmode = False
        self.lexrank: dict[int, int] = {}
        # benign degenerate streaks scale with row count; only genuine
        # stalls should pay for the lexicographic tie-break
        self.lex_trigger = max(150, nrows_hint)

    def start_phase(self) -> None:
        self.bland = False
        self.lexmode = False
        self.degen = 0
        self.lexrank = {}

    def _anchor_lex_order(self) -> None:
        """Basis-first column order: every row is lexicographically positive
        in it (rhs >= 0, +1 in its own basis column, 0 in the others), so
        lexicographic ratio tests from here on strictly decrease and cannot
        revisit a basis."""
        rank: dict[int, int] = {}
        for i, b in enumerate(self.basis):
            if self.rows[i] is not None:
                rank[b] = len(rank)
        self.lexrank = rank

    def pivot(self, r: int, c: int) -> None:
        prow = self.rows[r]
        p = prow[c]
        if p != 1:
            prow = {j: v / p for j, v in prow.items()}
            self.rows[r] = prow
            self.rhs[r] = self.rhs[r] / p
        items = [(j, v) for j, v in prow.items() if j != c]
        prhs = self.rhs[r]
        for i, row in enumerate(self.rows):
            if row is None or i == r:
                continue
            f = row.get(c)
            if f:
                del row[c]
                for j, v in items:
                    cur = row.get(j)
                    nv = (cur - f * v) if cur is not None else (-f * v)
                    if nv:
                        row[j] = nv
                    elif cur is not None:
                        del row[j]
                if prhs:
                    self.rhs[i] -= f * prhs
            elif f is not None:
                del row[c]
        f = self.obj.get(c)
        if f:
            del self.obj[c]
            obj = self.obj
            for j, v in items:
                cur = obj.get(j)
                nv = (cur - f * v) if cur is not None else (-f * v)
                if nv:
                    obj[j] = nv
                elif cur is not None:
                    del obj[j]
            if prhs:
                self.objrhs -= f * prhs
        self.basis[r] = c

    def optimize(self) -> str:
        """Run simplex to optimality or unboundedness on the current objective."""
        while True:
            c = self._entering()
            if c is None:
                return OPTIMAL
            r = self._leaving(c)
            if r is None:
                return UNBOUNDED
            leaving_col = self.basis[r]
            degenerate = self.rhs[r] == 0
            self.pivot(r, c)
            if leaving_col in self.banned_pool:
                self.banned.add(leaving_col)
            if degenerate:
                self.degen += 1
                if not self.lexmode and self.degen >= self.lex_trigger:
                    self.lexmode = True
                    self._anchor_lex_order()
                if self.degen >= self.BLAND_TRIGGER:
                    self.bland = True
            else:
                self.degen = 0
                self.lexmode = False

    def _entering(self) -> int | None:
        banned = self.banned
        best = None
        if self.bland:
            for j, cost in self.obj.items():
                if cost < 0 and j not in banned and (best is None or j < best):
                    best = j
            return best
        best_cost = None
        for j, cost in self.obj.items():
            if cost < 0 and j not in banned:
                if best is None or cost < best_cost or (cost == best_cost and j < best):
                    best, best_cost = j, cost
        return best

    def _leaving(self, c: int) -> int | None:
        ties: list[int] = []
        best_ratio = None
        rhs = self.rhs
        for i, row in enumerate(self.rows):
            if row is None:
                continue
            a = row.get(c)
            if a is not None and a > 0:
                ratio = rhs[i] / a
                if best_ratio is None or ratio < best_ratio:
                    best_ratio = ratio
                    ties = [i]
                elif ratio == best_ratio:
                    ties.append(i)
        if not ties:
            return None
        if len(ties) == 1:
            return ties[0]
        if self.lexmode:
            return self._lex_break(ties, c)
        return min(ties, key=lambda i: self.basis[i])

    def _lex_break(self, ties: list[int], c: int) -> int:
        """Among tied rows, the lexicographic minimum of row_i / a_ic."""
        rank = self.lexrank
        fallback = len(rank) + len(self.obj) + 10**9
        cols = sorted(
            {j for i in ties for j in self.rows[i]},
            key=lambda j: rank.get(j, fallback + j),
        )
        pivots = {i: self.rows[i][c] for i in ties}
        for col in cols:
            if col == c:
                continue
            best_val = None
            keep: list[int] = []
            for i in ties:
                val = self.rows[i].get(col)
                scaled = (val / pivots[i]) if val is not None else _Q(0)
                if best_val is None or scaled < best_val:
                    best_val = scaled
                    keep = [i]
                elif scaled == best_val:
                    keep.append(i)
            ties = keep
            if len(ties) == 1:
                return ties[0]
        return min(ties, key=lambda i: self.basis[i])


def solve(problem: LpProblem) -> LpSolution:
    """Exact optimum of ``problem``; deterministic for identical input.

    Optimal solutions are verified by substitution before being returned.
    """
    nvars = len(problem.variables)
    for v in problem.variables:
        if v.lb is None:
            raise LpError(f"variable {v.name!r} needs a finite lower bound")

    # Shift variables to x' = x - lb >= 0; upper bounds become extra rows.
    rows_in: list[tuple[dict[int, Fraction], str, Fraction]] = []
    for con in problem.constraints:
        shift = sum((c * problem.variables[j].lb for j, c in con.coeffs.items()), Fraction(0))
        rows_in.append((con.coeffs, con.rel, con.rhs - shift))
    for j, v in enumerate(problem.variables):
        if v.ub is not None:
            rows_in.append(({j: Fraction(1)}, LE, v.ub - v.lb))

    nrows = len(rows_in)
    tab = _Tableau(nrows)
    slack_start = nvars
    next_col = nvars
    art_cols: set[int] = set()
    art_rows: list[int] = []
    for coeffs, rel, rhs in rows_in:
        row = {j: _Q(c) for j, c in coeffs.items() if c != 0}
        q_rhs = _Q(rhs)
        if q_rhs < 0:
            row = {j: -v for j, v in row.items()}
            q_rhs = -q_rhs
            rel = {LE: GE, GE: LE, EQ: EQ}[rel]
        if rel == LE:
            row[next_col] = _Q(1)
            basis_col = next_col
            next_col += 1
        elif rel == GE:
            row[next_col] = _Q(-1)
            next_col += 1
            row[next_col] = _Q(1)
            basis_col = next_col
            art_cols.add(next_col)
            next_col += 1
        else:
            row[next_col] = _Q(1)
            basis_col = next_col
            art_cols.add(next_col)
            next_col += 1
        tab.rows.append(row)
        tab.rhs.append(q_rhs)
        tab.basis.append(basis_col)
        if basis_col in art_cols:
            art_rows.append(len(tab.rows) - 1)

    # Phase 1: minimize the sum of artificials.
    if art_cols:
        tab.obj = {a: _Q(1) for a in art_cols}
        tab.objrhs = _Q(0)
        for i in art_rows:
            row = tab.rows[i]
            for j, v in row.items():
                cur = tab.obj.get(j)
                nv = (cur - v) if cur is not None else -v
                if nv:
                    tab.obj[j] = nv
                elif cur is not None:
                    del tab.obj[j]
            tab.objrhs -= tab.rhs[i]
        tab.banned_pool = art_cols
        tab.start_phase()
        status = tab.optimize()
        if status != OPTIMAL or -tab.objrhs > 0:
            return LpSolution(INFEASIBLE, None, {})
        # Drive leftover artificials out of the basis (their value is 0).
        for i, b in enumerate(tab.basis):
            if tab.rows[i] is not None and b in art_cols:
                row = tab.rows[i]
                real = sorted(j for j in row if j not in art_cols and row[j])
                if real:
                    tab.pivot(i, real[0])
                else:
                    tab.rows[i] = None  # redundant row

    # Phase 2: the real objective (internally always minimize).
    negate = problem.sense == "max"
    costs = {j: (-c if negate else c) for j, c in problem.objective.items()}
    tab.obj = {j: _Q(c) for j, c in costs.items() if c != 0}
    tab.objrhs = _Q(0)
    for i, row in enumerate(tab.rows):
        if row is None:
            continue
        cb = costs.get(tab.basis[i])
        if cb:
            f = _Q(cb)
            for j, v in row.items():
                cur = tab.obj.get(j)
                nv = (cur - f * v) if cur is not None else (-f * v)
                if nv:
                    tab.obj[j] = nv
                elif cur is not None:
                    del tab.obj[j]
            tab.objrhs -= f * tab.rhs[i]
    tab.banned = set(art_cols)
    tab.banned_pool = art_cols
    tab.start_phase()
    status = tab.optimize()
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, None, {})

    shifted = {}
    for i, b in enumerate(tab.basis):
        if tab.rows[i] is not None and b < nvars:
            shifted[b] = tab.rhs[i]
    assignment: dict[str, Fraction] = {}
    for j, v in enumerate(problem.variables):
        raw = shifted.get(j)
        x = v.lb if raw is None else v.lb + Fraction(int(raw.numerator), int(raw.denominator))
        assignment[v.name] = x

    value = evaluate_objective(problem, assignment)
    bad = check_feasible(problem, assignment)
    if bad:
        raise LpInternalError(
            f"{problem.name}: optimum failed re-substitution: "
            + "; ".join(v.detail for v in bad[:5])
        )
    internal = -tab.objrhs
    internal_val = Fraction(int(internal.numerator), int(internal.denominator))
    shift_const = sum(
        (Fraction(c) * problem.variables[j].lb for j, c in costs.items()), Fraction(0)
    )
    if (-internal_val if negate else internal_val) + (-shift_const if negate else shift_const) != value:
        raise LpInternalError(f"{problem.name}: objective bookkeeping mismatch")

    tight = set()
    for con in problem.constraints:
        lhs = sum((c * assignment[problem.variables[j].name] for j, c in con.coeffs.items()), Fraction(0))
        if lhs == con.rhs:
            tight.add(con.label)
    return LpSolution(OPTIMAL, value, assignment, frozenset(tight))
