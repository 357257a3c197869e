"""Optimization front-ends: minimum load, uncoded lower bound, allocation.

All four solvers build labeled rows through :mod:`cachecraft.model`, run the
exact simplex, and re-verify the returned vertex against the *full*
(unreduced) constraint system before handing it back.

Two exact, value-preserving reductions keep the LPs tractable:

* the builders' ``reduced_coupling`` mode drops u <= a rows that are implied
  by a redundancy row plus nonnegativity;
* for the joint allocation problem, users with identical link rates are
  interchangeable, so an optimal solution exists that is constant on every
  orbit of variables under permuting such users (average any optimum over
  the symmetry group).  When user count and ties make it worthwhile the LP
  is collapsed onto orbit representatives and the solution expanded back.

Vertices returned are deterministic but not canonical; optimal values are
what acceptance compares.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from . import lp
from .core import (
    CacheInstance,
    CapacityInstance,
    Rational,
    ResourceLimitError,
    enumerate_subsets,
    full_mask,
    parse_subset_label,
    set_size,
    user_bit,
    users_of,
    validate_instance,
)
from .lp import GE, LE, LpProblem, LpSolution
from .model import (
    Scheme,
    a_var,
    build_delivery_rows,
    build_placement_rows,
    m_var,
    scheme_from_assignment,
    u_var,
    v_var,
)


@dataclass(frozen=True)
class LoadSolution:
    load: Fraction
    scheme: Scheme


@dataclass(frozen=True)
class BoundValue:
    value: Fraction
    kind: str  # "uncoded" | "amiri" | "cutset"


@dataclass(frozen=True)
class DctSolution:
    dct: Fraction
    m: tuple[Fraction, ...]
    scheme: Scheme


class SolverError(RuntimeError):
    """A solver LP unexpectedly came back infeasible/unbounded."""


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------

def _scheme_problem(
    inst: CacheInstance, *, m_variable: bool = False, reduced: bool = True, name: str
) -> LpProblem:
    prob = LpProblem(name)
    build_placement_rows(inst, prob, m_variable=m_variable, unit_box=not reduced)
    build_delivery_rows(inst, prob, reduced_coupling=reduced, aggregate_unicast=reduced)
    return prob


def _restore_unicasts(K: int, assignment: Mapping[str, Fraction]) -> dict[str, Fraction]:
    """Rebuild the projected-out unicast pieces from a reduced-problem vertex.

    Each unicast structure row only needs u[{k}, S] <= a_S per class and the
    right total; the ``unicast:k`` row guarantees enough capacity, so a
    greedy fill in ascending mask order is exact.
    """
    out = dict(assignment)
    for k in range(1, K + 1):
        bit = user_bit(k)
        if u_var(bit, 0) in out:
            return dict(assignment)  # nothing was aggregated
        need = out[v_var(bit)]
        for S in enumerate_subsets(K, lambda s: not s & bit):
            take = min(need, out[a_var(S)])
            out[u_var(bit, S)] = take
            need -= take
        if need != 0:
            raise lp.LpInternalError(f"unicast for user {k} cannot be restored (short {need})")
    return out


def _load_objective(K: int) -> dict[str, Fraction]:
    return {v_var(T): Fraction(1) for T in enumerate_subsets(K, lambda s: s != 0)}


def _dct_objective(K: int, C: Sequence[Fraction]) -> dict[str, Fraction]:
    out = {}
    for T in enumerate_subsets(K, lambda s: s != 0):
        out[v_var(T)] = 1 / min(C[k - 1] for k in users_of(T))
    return out


def _verify_vertex(
    inst: CacheInstance,
    assignment: Mapping[str, Fraction],
    value: Fraction,
    objective: Mapping[str, Fraction],
    *,
    m_variable: bool,
    name: str,
) -> None:
    """Re-check the vertex against the full, unreduced constraint system."""
    full = _scheme_problem(inst, m_variable=m_variable, reduced=False, name=name + ":full")
    full.set_objective("min", dict(objective))
    bad = lp.check_feasible(full, assignment)
    if bad:
        raise lp.LpInternalError(
            f"{name}: vertex violates the full system: " + "; ".join(v.detail for v in bad[:5])
        )
    if lp.evaluate_objective(full, assignment) != value:
        raise lp.LpInternalError(f"{name}: objective mismatch against the full system")


def _require_optimal(sol: LpSolution, name: str) -> LpSolution:
    if sol.status != lp.OPTIMAL:
        raise SolverError(f"{name}: expected an optimal solution, got {sol.status}")
    return sol


# ---------------------------------------------------------------------------
# Minimum worst-case load
# ---------------------------------------------------------------------------

def solve_min_load(inst: CacheInstance) -> LoadSolution:
    """Exact minimum worst-case delivery load and one optimal scheme.

    Always feasible: caching nothing and unicasting every file is a valid
    point, so the result status is optimal by construction.
    """
    validate_instance(inst)
    prob = _scheme_problem(inst, name="min-load")
    objective = _load_objective(inst.K)
    prob.set_objective("min", objective)
    sol = _require_optimal(lp.solve(prob), prob.name)
    assignment = _restore_unicasts(inst.K, sol.assignment)
    _verify_vertex(inst, assignment, sol.value, objective, m_variable=False, name=prob.name)
    return LoadSolution(load=sol.value, scheme=scheme_from_assignment(inst.K, assignment))


# ---------------------------------------------------------------------------
# Uncoded-placement lower bound (permutation genie)
# ---------------------------------------------------------------------------

_GENIE_MAX_K = 8


def solve_uncoded_lower_bound(inst: CacheInstance) -> BoundValue:
    """Largest genie bound over all placements: min R s.t. one row per permutation.

    For each user permutation, R must dominate the mass a virtual user with
    prefix-ordered side information still needs; coefficient of a_S is the
    number of permutation prefixes disjoint from S.
    """
    validate_instance(inst)
    K = inst.K
    if K > _GENIE_MAX_K:
        raise ResourceLimitError(
            f"uncoded lower bound needs K! = {_factorial(K)} permutation rows; K <= {_GENIE_MAX_K}"
        )
    prob = LpProblem("uncoded-lb")
    build_placement_rows(inst, prob, unit_box=False)
    prob.add_variable("R", 0, None)
    subsets = enumerate_subsets(K)
    for q in itertools.permutations(range(1, K + 1)):
        coeffs: dict[str, Rational] = {"R": -1}
        for S in subsets:
            if S == 0:
                c = K
            else:
                c = next(i for i, qk in enumerate(q) if S & user_bit(qk))
            if c:
                coeffs[a_var(S)] = c
        prob.add_constraint(coeffs, LE, 0, f"perm:{list(q)}")
    prob.set_objective("min", {"R": 1})
    sol = _require_optimal(lp.solve(prob), prob.name)
    return BoundValue(value=sol.value, kind="uncoded")


def _factorial(n: int) -> int:
    out = 1
    for i in range(2, n + 1):
        out *= i
    return out


# ---------------------------------------------------------------------------
# Joint memory allocation (minimum completion time)
# ---------------------------------------------------------------------------

def solve_min_dct(inst: CapacityInstance, *, symmetry: bool = True) -> DctSolution:
    """Jointly optimal cache sizes and scheme for a total memory budget."""
    validate_instance(inst)
    K = inst.K
    base = CacheInstance(K=K, N=inst.N, m=tuple(Fraction(1) for _ in range(K)))
    prob = _scheme_problem(base, m_variable=True, name="min-dct")
    prob.add_constraint({m_var(k): 1 for k in range(1, K + 1)}, LE, inst.m_tot, "budget")
    objective = _dct_objective(K, inst.C)
    prob.set_objective("min", objective)

    sol = None
    if symmetry and K >= 6:
        classes = _capacity_classes(inst.C)
        if any(set_size(c) >= 2 for c in classes):
            sol = _solve_with_orbits(prob, classes)
    if sol is None:
        sol = lp.solve(prob)
    sol = _require_optimal(sol, prob.name)
    assignment = _restore_unicasts(K, sol.assignment)

    full = _full_dct_problem(inst)
    bad = lp.check_feasible(full, assignment)
    if bad:
        raise lp.LpInternalError(
            "min-dct: vertex violates the full system: " + "; ".join(v.detail for v in bad[:5])
        )
    if lp.evaluate_objective(full, assignment) != sol.value:
        raise lp.LpInternalError("min-dct: objective mismatch against the full system")

    m_star = tuple(assignment[m_var(k)] for k in range(1, K + 1))
    return DctSolution(dct=sol.value, m=m_star, scheme=scheme_from_assignment(K, assignment))


def _full_dct_problem(inst: CapacityInstance) -> LpProblem:
    K = inst.K
    base = CacheInstance(K=K, N=inst.N, m=tuple(Fraction(1) for _ in range(K)))
    full = _scheme_problem(base, m_variable=True, reduced=False, name="min-dct:full")
    full.add_constraint({m_var(k): 1 for k in range(1, K + 1)}, LE, inst.m_tot, "budget")
    full.set_objective("min", _dct_objective(K, inst.C))
    return full


def evaluate_dct(inst: CapacityInstance, m: Sequence[Rational]) -> DctSolution:
    """Best completion time for a *fixed* allocation (with C = 1 this is the load)."""
    validate_instance(inst)
    mf = tuple(Fraction(x) for x in m)
    base = validate_instance(CacheInstance(K=inst.K, N=inst.N, m=mf))
    prob = _scheme_problem(base, name="eval-dct")
    objective = _dct_objective(inst.K, inst.C)
    prob.set_objective("min", objective)
    sol = _require_optimal(lp.solve(prob), prob.name)
    assignment = _restore_unicasts(inst.K, sol.assignment)
    _verify_vertex(base, assignment, sol.value, objective, m_variable=False, name=prob.name)
    return DctSolution(dct=sol.value, m=mf, scheme=scheme_from_assignment(inst.K, assignment))


# ---------------------------------------------------------------------------
# Symmetry reduction
# ---------------------------------------------------------------------------

def _capacity_classes(C: Sequence[Fraction]) -> list[int]:
    """Masks of user groups with identical link rate, ascending by rate."""
    groups: dict[Fraction, int] = {}
    for i, c in enumerate(C):
        groups[c] = groups.get(c, 0) | (1 << i)
    return [groups[c] for c in sorted(groups)]


def _orbit_key(name: str, classes: Sequence[int]):
    if name.startswith("a["):
        S = parse_subset_label(name[1:])
        return ("a", tuple(set_size(S & c) for c in classes))
    if name.startswith("v["):
        T = parse_subset_label(name[1:])
        return ("v", tuple(set_size(T & c) for c in classes))
    if name.startswith("u[T="):
        body = name[2:-1]
        t_part, s_part = body.split("|S=")
        T = parse_subset_label(t_part[2:])
        S = parse_subset_label(s_part)
        return (
            "u",
            tuple((set_size(T & c), set_size(S & c), set_size(T & S & c)) for c in classes),
        )
    if name.startswith("m["):
        k = int(name[2:-1])
        bit = user_bit(k)
        return ("m", next(i for i, c in enumerate(classes) if c & bit))
    return ("misc", name)


def _solve_with_orbits(prob: LpProblem, classes: Sequence[int]) -> LpSolution | None:
    """Solve on the subspace fixed by permuting users within equal-rate classes.

    The LP is invariant under those permutations, so averaging any optimum
    over the group yields an orbit-constant optimum; collapsing each orbit
    to one variable and deduplicating the folded rows solves the same value.
    Returns the expanded solution, or None when the reduction fails to apply.
    """
    orbit_of: dict[str, tuple] = {}
    members: dict[tuple, list[lp.Variable]] = {}
    for var in prob.variables:
        key = _orbit_key(var.name, classes)
        orbit_of[var.name] = key
        members.setdefault(key, []).append(var)
    for group in members.values():
        if any((g.lb, g.ub) != (group[0].lb, group[0].ub) for g in group):
            return None  # orbit members must share bounds for the collapse

    rep = {key: group[0].name for key, group in members.items()}
    qprob = LpProblem(prob.name + ":orbits")
    for key, group in members.items():
        qprob.add_variable(rep[key], group[0].lb, group[0].ub)

    qobj: dict[str, Fraction] = {}
    for j, c in prob.objective.items():
        name = rep[orbit_of[prob.variables[j].name]]
        qobj[name] = qobj.get(name, Fraction(0)) + c
    qprob.set_objective(prob.sense, qobj)

    seen: dict[tuple, str] = {}
    for con in prob.constraints:
        folded: dict[str, Fraction] = {}
        for j, c in con.coeffs.items():
            name = rep[orbit_of[prob.variables[j].name]]
            folded[name] = folded.get(name, Fraction(0)) + c
        folded = {n: c for n, c in folded.items() if c != 0}
        sig = (con.rel, con.rhs, tuple(sorted(folded.items())))
        if sig in seen:
            continue
        seen[sig] = con.label
        qprob.add_constraint(folded, con.rel, con.rhs, con.label)

    qsol = lp.solve(qprob)
    if qsol.status != lp.OPTIMAL:
        return LpSolution(qsol.status, None, {})
    assignment = {
        var.name: qsol.assignment[rep[orbit_of[var.name]]] for var in prob.variables
    }
    value = lp.evaluate_objective(prob, assignment)
    bad = lp.check_feasible(prob, assignment)
    if bad:
        raise lp.LpInternalError(
            "orbit expansion violated the original system: "
            + "; ".join(v.detail for v in bad[:5])
        )
    tight = set()
    for con in prob.constraints:
        lhs = sum(
            (c * assignment[prob.variables[j].name] for j, c in con.coeffs.items()),
            Fraction(0),
        )
        if lhs == con.rhs:
            tight.add(con.label)
    return LpSolution(lp.OPTIMAL, value, assignment, frozenset(tight))
