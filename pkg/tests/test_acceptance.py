"""Acceptance suite: one test per release criterion, exact equalities throughout.

Run with ``pytest -s tests/test_acceptance.py`` to see one PASS line per
criterion.  Everything is exact rational comparison; there are no numeric
tolerances anywhere.
"""

from __future__ import annotations

import random
from fractions import Fraction

from cachecraft import formulas, lp, scheme as scheme_mod, solve
from cachecraft.core import cache_instance, capacity_instance, mask_of
from cachecraft.formulas import (
    bound_amiri,
    bound_cutset,
    build_scheme_large_memory,
    build_scheme_lemma1,
    build_scheme_small_memory,
    build_scheme_three_user,
    dct_closed_form,
    dct_uniform,
    load_large_memory,
    load_small_memory,
    load_three_user,
)
from cachecraft.model import build_delivery_rows, build_placement_rows, scheme_assignment
from cachecraft.lp import LpProblem
from conftest import pmap, published_example1_scheme

F = Fraction
GRID_STEP = F(1, 20)


def passline(n: int, text: str) -> None:
    print(f"\nACCEPTANCE {n}: PASS — {text}")


def stick_break(rng: random.Random, K: int, den: int) -> list[Fraction]:
    """K nonnegative rationals with denominator ``den`` summing to at most 1."""
    total = den
    parts = []
    for _ in range(K):
        n = rng.randint(0, total)
        parts.append(n)
        total -= n
    rng.shuffle(parts)
    return [F(n, den) for n in parts]


# ---------------------------------------------------------------------------
# 1. Motivational three-user instance
# ---------------------------------------------------------------------------

def test_criterion_1_motivational_example():
    inst = cache_instance(3, 3, ["2/5", "1/2", "7/10"])
    result = solve.solve_min_load(inst)
    assert result.load == F(7, 10)
    passline(1, "minimum load for m=[2/5,1/2,7/10] is exactly 7/10")


# ---------------------------------------------------------------------------
# 2. Published K=3 optimum: value, feasibility of the published plan, P=30
# ---------------------------------------------------------------------------

def test_criterion_2_published_plan():
    inst = cache_instance(3, 3, ["2/5", "1/2", "3/5"])
    result = solve.solve_min_load(inst)
    assert result.load == F(11, 15) == F(22, 30)

    plan = published_example1_scheme()
    prob = LpProblem("o1")
    build_placement_rows(inst, prob)
    build_delivery_rows(inst, prob)
    assert lp.check_feasible(prob, scheme_assignment(plan, inst)) == []
    assert plan.load == F(22, 30)

    ms = scheme_mod.materialize(plan, inst)
    assert ms.P == 30
    assert scheme_mod.simulate_and_decode(ms).ok
    passline(2, "load 11/15; published plan feasible at 22/30; subpacketization 30")


# ---------------------------------------------------------------------------
# 3. Three-user exactness on the full 1/20 grid
# ---------------------------------------------------------------------------

def _criterion3_point(point):
    i, j, k = point
    m = [F(i, 20), F(j, 20), F(k, 20)]
    inst = cache_instance(3, 3, m)
    closed, _ = load_three_user(inst)
    achievable = solve.solve_min_load(inst).load
    lower = solve.solve_uncoded_lower_bound(inst).value
    return closed == achievable == lower


def test_criterion_3_three_user_grid():
    points = [
        (i, j, k)
        for i in range(21)
        for j in range(i, 21)
        for k in range(j, 21)
    ]
    assert len(points) == 1771
    results = pmap(_criterion3_point, points)
    assert all(results)
    passline(3, f"closed form = LP load = uncoded bound on all {len(points)} grid points")


# ---------------------------------------------------------------------------
# 4. Small/large total memory regimes, 200 fuzzed instances each
# ---------------------------------------------------------------------------

def _criterion4_case(args):
    seed, K, regime = args
    rng = random.Random(seed)
    den = rng.randint(max(2, K), 4 * K)
    parts = stick_break(rng, K, den)
    if regime == "small":
        m = parts
        closed = load_small_memory(cache_instance(K, K, m))
        scheme = build_scheme_small_memory(cache_instance(K, K, m))
    else:
        m = [1 - x for x in parts]
        closed = load_large_memory(cache_instance(K, K, m))
        scheme = build_scheme_large_memory(cache_instance(K, K, m))
    inst = cache_instance(K, K, m)
    achieved = solve.solve_min_load(inst).load
    return closed == achieved == scheme.load


def test_criterion_4_memory_regimes():
    sizes = {2: 70, 3: 60, 4: 45, 5: 25}
    for regime in ("small", "large"):
        cases = [
            (1000 * K + s + (0 if regime == "small" else 500_000), K, regime)
            for K, count in sizes.items()
            for s in range(count)
        ]
        assert len(cases) == 200
        assert all(pmap(_criterion4_case, cases)), regime
    passline(4, "closed forms match the LP exactly on 200 fuzzed instances per regime")


# ---------------------------------------------------------------------------
# 5. Published allocation cases
# ---------------------------------------------------------------------------

def test_criterion_5_allocation_cases():
    case1 = capacity_instance(3, 3, ["1/5", "2/5", "1/2"], 1)
    case2 = capacity_instance(3, 3, ["3/10", "3/10", "3/5"], 1)
    case3 = capacity_instance(3, 3, ["1/5", "3/10", "3/5"], 1)

    r1 = solve.solve_min_dct(case1)
    r2 = solve.solve_min_dct(case2)
    r3 = solve.solve_min_dct(case3)
    assert r1.dct == F(25, 6)
    assert r2.dct == F(10, 3)
    assert r3.dct == F(25, 6)
    assert r3.m == (F(1, 2), F(1, 2), F(0))
    assert dct_uniform(case3) == F(40, 9)
    for inst, lp_result in ((case1, r1), (case2, r2), (case3, r3)):
        assert dct_closed_form(inst).theta == lp_result.dct
    passline(5, "allocation optimum 25/6, 10/3, 25/6 with m*=[1/2,1/2,0] and uniform 40/9")


# ---------------------------------------------------------------------------
# 6. Allocation closed form vs joint LP, 100 fuzzed capacity instances
# ---------------------------------------------------------------------------

def _criterion6_case(args):
    seed, K = args
    rng = random.Random(seed)
    C = [F(rng.randint(1, 10), 10) for _ in range(K)]
    m_tot = F(rng.randint(0, 12), 12)
    inst = capacity_instance(K, K, C, m_tot)
    return dct_closed_form(inst).theta == solve.solve_min_dct(inst).dct


def test_criterion_6_allocation_closed_form_vs_lp():
    sizes = {2: 35, 3: 30, 4: 20, 5: 15}
    cases = [(7000 + 100 * K + s, K) for K, count in sizes.items() for s in range(count)]
    assert len(cases) == 100
    assert all(pmap(_criterion6_case, cases))
    passline(6, "small-budget allocation closed form equals the joint LP on 100 instances")


# ---------------------------------------------------------------------------
# 7. Bound sandwich on the shared fuzz corpus
# ---------------------------------------------------------------------------

def _criterion7_case(args):
    seed, K = args
    rng = random.Random(seed)
    m = [F(rng.randint(0, 10), 10) for _ in range(K)]
    inst = cache_instance(K, K, m)
    achievable = solve.solve_min_load(inst).load
    uncoded = solve.solve_uncoded_lower_bound(inst).value
    general = max(bound_amiri(inst), bound_cutset(inst))
    return general <= uncoded <= achievable


def test_criterion_7_bound_sandwich():
    sizes = {2: 12, 3: 12, 4: 8, 5: 6, 6: 2}
    cases = [(3000 + 10 * K + s, K) for K, count in sizes.items() for s in range(count)]
    assert all(pmap(_criterion7_case, cases))
    passline(7, f"general bounds <= uncoded bound <= achievable on {len(cases)} fuzzed instances")


# ---------------------------------------------------------------------------
# 8. End-to-end decodability of every produced scheme
# ---------------------------------------------------------------------------

def _decode_ok(scheme, inst, flip_demand=False):
    demand = tuple(range(inst.K, 0, -1)) if flip_demand else None
    ms = scheme_mod.materialize(scheme, inst, demand=demand)
    report = scheme_mod.simulate_and_decode(ms)
    load, _ = scheme_mod.measure(ms)
    return report.ok and load == scheme.load


def _criterion8_case(args):
    kind, seed, K = args
    rng = random.Random(seed)
    if kind == "small":
        m = stick_break(rng, K, rng.randint(max(2, K), 4 * K))
        inst = cache_instance(K, K, m)
        return _decode_ok(build_scheme_small_memory(inst), inst, seed % 2 == 0)
    if kind == "large":
        m = [1 - x for x in stick_break(rng, K, rng.randint(max(2, K), 4 * K))]
        inst = cache_instance(K, K, m)
        return _decode_ok(build_scheme_large_memory(inst), inst, seed % 2 == 0)
    if kind == "three":
        m = sorted(F(rng.randint(0, 12), 12) for _ in range(3))
        inst = cache_instance(3, 3, m)
        return _decode_ok(build_scheme_three_user(inst), inst, seed % 2 == 0)
    if kind == "lemma1":
        m = stick_break(rng, K, rng.randint(max(2, K), 3 * K))
        inst = cache_instance(K, K, m)
        return _decode_ok(build_scheme_lemma1(
            capacity_instance(K, K, [F(1)] * K, 1), m
        ), inst, seed % 2 == 0)
    if kind == "solver":
        m = [F(rng.randint(0, 8), 8) for _ in range(K)]
        inst = cache_instance(K, K, m)
        return _decode_ok(solve.solve_min_load(inst).scheme, inst, seed % 2 == 0)
    if kind == "dct":
        C = [F(rng.randint(1, 10), 10) for _ in range(K)]
        m_tot = F(rng.randint(0, 2 * K), 2)
        result = solve.solve_min_dct(capacity_instance(K, K, C, m_tot))
        inst = cache_instance(K, K, result.m)
        return _decode_ok(result.scheme, inst, seed % 2 == 0)
    raise AssertionError(kind)


def test_criterion_8_end_to_end_decodability():
    cases = []
    cases += [("small", 100 + s, K) for K in (2, 3, 4, 5) for s in range(25)]
    cases += [("large", 200 + s, K) for K in (2, 3, 4, 5) for s in range(25)]
    cases += [("three", 300 + s, 3) for s in range(120)]
    cases += [("lemma1", 400 + s, K) for K in (2, 3, 4, 5) for s in range(15)]
    cases += [("solver", 500 + s, K) for K, n in ((2, 40), (3, 40), (4, 30), (5, 10)) for s in range(n)]
    cases += [("dct", 600 + s, K) for K, n in ((2, 10), (3, 10)) for s in range(n)]
    assert len(cases) >= 500
    results = pmap(_criterion8_case, cases)
    assert all(results)
    passline(8, f"all {len(cases)} produced schemes materialize and decode byte-exactly")


# ---------------------------------------------------------------------------
# 9. Figure-shape properties at K=7
# ---------------------------------------------------------------------------

FIG6_C = ["1/5", "2/5", "3/5", "3/5", "4/5", "4/5", "1"]
FIG7A_C = ["1/5", "1/5", "1/5", "1/2", "3/5", "7/10", "7/10"]


def _criterion9_case(args):
    which, m_tot = args
    C = FIG6_C if which == "fig6" else FIG7A_C
    inst = capacity_instance(7, 7, C, m_tot)
    result = solve.solve_min_dct(inst)
    return which, m_tot, result.dct, result.m


def test_criterion_9_figure_shapes():
    tasks = [("fig6", F(1, 2)), ("fig6", F(1)), ("fig6", F(2)), ("fig6", F(4))]
    tasks += [("fig7a", x) for x in (F(1, 2), F(1), F(2), F(3), F(4), F(5), F(6))]
    results = {(w, x): (dct, m) for w, x, dct, m in pmap(_criterion9_case, tasks)}

    # Optimal completion time never beats the equal-split upper bound, and
    # matches it exactly while the budget is at most one library.
    C6 = [F(c) for c in FIG6_C]
    theta0 = sum(1 / c for c in C6)
    theta1 = dct_uniform(capacity_instance(7, 7, FIG6_C, 1))
    for m_tot in (F(1, 2), F(1)):
        theta, _ = results[("fig6", m_tot)]
        closed = dct_closed_form(capacity_instance(7, 7, FIG6_C, m_tot))
        interpolated = (1 - m_tot) * theta0 + m_tot * theta1
        assert theta == closed.theta == interpolated
    for m_tot in (F(2), F(4)):
        theta, _ = results[("fig6", m_tot)]
        assert theta <= dct_uniform(capacity_instance(7, 7, FIG6_C, m_tot))
    assert solve.solve_min_dct(capacity_instance(7, 7, FIG6_C, 7)).dct == 0

    # The optimal allocation for the second rate profile splits the users
    # into the three slow ones and the four fast ones at every budget.
    for m_tot in (F(1, 2), F(1), F(2), F(3), F(4), F(5), F(6)):
        _, m_star = results[("fig7a", m_tot)]
        slow = {m_star[0], m_star[1], m_star[2]}
        fast = {m_star[3], m_star[4], m_star[5], m_star[6]}
        assert len(slow) == 1 and len(fast) == 1, (m_tot, m_star)
        assert m_star[0] >= m_star[3]
    passline(9, "equal-split bound respected (equal up to budget 1); slow/fast grouping {1,2,3} vs {4,5,6,7}")


# ---------------------------------------------------------------------------
# 10. Unit link rates reduce completion time to delivery load
# ---------------------------------------------------------------------------

def _criterion10_case(args):
    seed, K = args
    rng = random.Random(seed)
    m = [F(rng.randint(0, 9), 9) for _ in range(K)]
    inst = capacity_instance(K, K, [F(1)] * K, 0)
    fixed = solve.evaluate_dct(inst, m)
    load = solve.solve_min_load(cache_instance(K, K, m)).load
    return fixed.dct == load


def test_criterion_10_unit_capacity_reduction():
    sizes = {2: 35, 3: 30, 4: 20, 5: 15}
    cases = [(9000 + 100 * K + s, K) for K, count in sizes.items() for s in range(count)]
    assert len(cases) == 100
    assert all(pmap(_criterion10_case, cases))
    passline(10, "fixed-allocation completion time with unit rates equals the load LP on 100 instances")
