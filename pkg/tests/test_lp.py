"""Exact simplex: golden cases, anti-cycling, and a vertex-enumeration oracle."""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

import pytest

from cachecraft import lp
from cachecraft.lp import EQ, GE, LE, LpProblem


def small_lp(sense, objective, rows, bounds):
    prob = LpProblem("t")
    for name, (lb, ub) in bounds.items():
        prob.add_variable(name, lb, ub)
    for i, (coeffs, rel, rhs) in enumerate(rows):
        prob.add_constraint(coeffs, rel, rhs, f"r{i}")
    prob.set_objective(sense, objective)
    return prob


class TestGoldenCases:
    def test_simple_max(self):
        prob = small_lp(
            "max", {"x": 1, "y": 1},
            [({"x": 1}, LE, 1), ({"y": 1}, LE, 2)],
            {"x": (0, None), "y": (0, None)},
        )
        sol = lp.solve(prob)
        assert sol.status == lp.OPTIMAL
        assert sol.value == 3
        assert sol.assignment == {"x": Fraction(1), "y": Fraction(2)}
        assert sol.tight_constraints == {"r0", "r1"}

    def test_infeasible(self):
        prob = small_lp("min", {"x": 1}, [({"x": 1}, GE, 1), ({"x": 1}, LE, 0)], {"x": (0, None)})
        assert lp.solve(prob).status == lp.INFEASIBLE

    def test_unbounded(self):
        prob = small_lp("max", {"x": 1}, [], {"x": (0, None)})
        assert lp.solve(prob).status == lp.UNBOUNDED

    def test_equality_and_negative_rhs(self):
        prob = small_lp(
            "min", {"x": 2, "y": 3},
            [({"x": 1, "y": 1}, EQ, 4), ({"x": -1, "y": -1}, LE, -2)],
            {"x": (0, None), "y": (0, None)},
        )
        sol = lp.solve(prob)
        assert sol.value == 8 and sol.assignment["x"] == 4

    def test_variable_bounds_and_shift(self):
        prob = small_lp(
            "min", {"x": 1, "y": -1},
            [({"x": 1, "y": 1}, LE, 5)],
            {"x": (1, 3), "y": (0, 2)},
        )
        sol = lp.solve(prob)
        assert sol.assignment == {"x": Fraction(1), "y": Fraction(2)}
        assert sol.value == -1

    def test_anticycling_on_degenerate_instance(self):
        # Classic cycling example for naive pivoting; optimum is -1/20.
        prob = small_lp(
            "min",
            {"x1": Fraction(-3, 4), "x2": 150, "x3": Fraction(-1, 50), "x4": 6},
            [
                ({"x1": Fraction(1, 4), "x2": -60, "x3": Fraction(-1, 25), "x4": 9}, LE, 0),
                ({"x1": Fraction(1, 2), "x2": -90, "x3": Fraction(-1, 50), "x4": 3}, LE, 0),
                ({"x3": 1}, LE, 1),
            ],
            {name: (0, None) for name in ("x1", "x2", "x3", "x4")},
        )
        sol = lp.solve(prob)
        assert sol.status == lp.OPTIMAL
        assert sol.value == Fraction(-1, 20)

    def test_determinism(self):
        prob = small_lp(
            "max", {"x": 1, "y": 1, "z": 1},
            [({"x": 1, "y": 2, "z": 1}, LE, 4), ({"x": 2, "y": 1, "z": 3}, LE, 6)],
            {n: (0, None) for n in "xyz"},
        )
        first = lp.solve(prob)
        second = lp.solve(prob)
        assert first.assignment == second.assignment and first.value == second.value


class TestProblemValidation:
    def test_unknown_variable(self):
        prob = LpProblem()
        prob.add_variable("x")
        with pytest.raises(lp.LpError, match="unknown variable"):
            prob.add_constraint({"y": 1}, LE, 1, "r")

    def test_duplicate_label(self):
        prob = LpProblem()
        prob.add_variable("x")
        prob.add_constraint({"x": 1}, LE, 1, "r")
        with pytest.raises(lp.LpError, match="duplicate"):
            prob.add_constraint({"x": 1}, LE, 2, "r")

    def test_check_feasible_missing_variable(self):
        prob = LpProblem()
        prob.add_variable("x")
        with pytest.raises(lp.LpError, match="missing variable"):
            lp.check_feasible(prob, {})

    def test_dump_contains_exact_fractions(self):
        prob = small_lp("min", {"x": Fraction(2, 3)}, [({"x": 1}, GE, Fraction(1, 7))], {"x": (0, 1)})
        text = prob.dump()
        assert "2/3 x" in text and ">= 1/7" in text and "r0" in text


# ---------------------------------------------------------------------------
# Oracle: exhaustive vertex enumeration on small boxed LPs
# ---------------------------------------------------------------------------

def _gauss_solve(rows, rhs):
    """Exact solve of a square system; None if singular."""
    n = len(rows)
    M = [list(r) + [b] for r, b in zip(rows, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        inv = M[col][col]
        M[col] = [x / inv for x in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


def brute_force_boxed_lp(c, rows, ub):
    """Exact optimum of min c.x s.t. rows (<=), 0 <= x <= ub, by vertex enumeration."""
    n = len(c)
    hyperplanes = [(list(coeffs), rhs) for coeffs, rhs in rows]
    for j in range(n):
        e = [Fraction(0)] * n
        e[j] = Fraction(1)
        hyperplanes.append((list(e), Fraction(0)))
        hyperplanes.append((list(e), ub[j]))
    best = None
    for combo in itertools.combinations(range(len(hyperplanes)), n):
        rows_n = [hyperplanes[i][0] for i in combo]
        rhs_n = [hyperplanes[i][1] for i in combo]
        x = _gauss_solve([list(r) for r in rows_n], rhs_n)
        if x is None:
            continue
        if any(xi < 0 or xi > ub[j] for j, xi in enumerate(x)):
            continue
        if any(sum(a * xi for a, xi in zip(coeffs, x)) > rhs for coeffs, rhs in rows):
            continue
        value = sum(ci * xi for ci, xi in zip(c, x))
        if best is None or value < best:
            best = value
    return best


class TestAgainstVertexOracle:
    def test_random_boxed_lps(self):
        rng = random.Random(20240817)
        names = ["x0", "x1", "x2", "x3"]
        for trial in range(40):
            n = rng.randint(2, 4)
            m = rng.randint(2, 5)
            ub = [Fraction(rng.randint(1, 4)) for _ in range(n)]
            c = [Fraction(rng.randint(-5, 5)) for _ in range(n)]
            rows = []
            for _ in range(m):
                coeffs = [Fraction(rng.randint(-3, 3)) for _ in range(n)]
                rhs = Fraction(rng.randint(-4, 8))
                rows.append((coeffs, rhs))
            expected = brute_force_boxed_lp(c, rows, ub)

            prob = LpProblem(f"fuzz{trial}")
            for j in range(n):
                prob.add_variable(names[j], 0, ub[j])
            for i, (coeffs, rhs) in enumerate(rows):
                prob.add_constraint(
                    {names[j]: coeffs[j] for j in range(n)}, LE, rhs, f"r{i}"
                )
            prob.set_objective("min", {names[j]: c[j] for j in range(n)})
            sol = lp.solve(prob)
            if expected is None:
                assert sol.status == lp.INFEASIBLE, f"trial {trial}"
            else:
                assert sol.status == lp.OPTIMAL, f"trial {trial}"
                assert sol.value == expected, f"trial {trial}"

    def test_weak_duality_spot_check(self):
        rng = random.Random(99)
        for trial in range(10):
            n = rng.randint(2, 3)
            names = [f"x{j}" for j in range(n)]
            ub = [Fraction(rng.randint(1, 3)) for _ in range(n)]
            c = [Fraction(rng.randint(-4, 4)) for _ in range(n)]
            rows = [
                ([Fraction(rng.randint(-2, 3)) for _ in range(n)], Fraction(rng.randint(0, 6)))
                for _ in range(3)
            ]
            prob = LpProblem(f"wd{trial}")
            for j in range(n):
                prob.add_variable(names[j], 0, ub[j])
            for i, (coeffs, rhs) in enumerate(rows):
                prob.add_constraint({names[j]: coeffs[j] for j in range(n)}, LE, rhs, f"r{i}")
            prob.set_objective("min", {names[j]: c[j] for j in range(n)})
            sol = lp.solve(prob)
            if sol.status != lp.OPTIMAL:
                continue
            found = 0
            while found < 20:
                x = [Fraction(rng.randint(0, 6 * int(ub[j])), 6) for j in range(n)]
                if any(xj > ub[j] for j, xj in enumerate(x)):
                    continue
                if any(sum(a * xi for a, xi in zip(coeffs, x)) > rhs for coeffs, rhs in rows):
                    found += 1  # count attempts to bound the loop
                    continue
                found += 1
                assert sum(ci * xi for ci, xi in zip(c, x)) >= sol.value
