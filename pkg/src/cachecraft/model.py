"""Constraint builders for the placement and delivery polytopes.

Placement is a vector ``a`` indexed by user subsets S: ``a_S`` is the
fraction of every file stored exclusively at the users in S (S may be
empty).  Delivery is a vector ``v`` of signal sizes indexed by nonempty
subsets T, plus assignment variables ``u[T, S]`` giving how much of subfile
class S rides inside signal T (S ranges over the family
:func:`cachecraft.core.b_family` of the unique recipient it serves).

The builders emit labeled rows into an :class:`cachecraft.lp.LpProblem`:

* ``norm``           sum of all a_S equals 1
* ``mem:k``          user k's cached fraction fits its memory
* ``struct:T:j``     the pieces for recipient j fill signal T exactly
* ``red:S:j``        user j never receives duplicate bits of subfile class S
* ``complete:k``     signals touching user k finish its request
* ``cap:T:S``        u[T, S] <= a_S (only when a is variable)

``red`` rows exist for 2 <= |S| <= K-1 only; for smaller S the u <= a
bounds subsume them.  With ``reduced_coupling=True`` the builder skips the
``cap`` rows that are provably implied by a ``red`` row plus nonnegativity
(multicast T with 2 <= |S| <= K-1); the feasible set and optimum are
unchanged, the row count drops by roughly |u|.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .core import (
    CacheInstance,
    Rational,
    b_family,
    enumerate_subsets,
    full_mask,
    parse_subset_label,
    rational_str,
    set_size,
    subset_label,
    user_bit,
    users_of,
    validate_instance,
)
from .lp import EQ, GE, LE, LpProblem


def a_var(S: int) -> str:
    return f"a{subset_label(S)}"


def v_var(T: int) -> str:
    return f"v{subset_label(T)}"


def u_var(T: int, S: int) -> str:
    return f"u[T={subset_label(T)}|S={subset_label(S)}]"


def m_var(k: int) -> str:
    return f"m[{k}]"


# ---------------------------------------------------------------------------
# Scheme value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlacementVector:
    """Sparse map S -> a_S; absent subsets carry 0."""

    K: int
    a: dict[int, Fraction]

    def value(self, S: int) -> Fraction:
        return self.a.get(S, Fraction(0))

    def cached_fraction(self, k: int) -> Fraction:
        bit = user_bit(k)
        return sum((x for S, x in self.a.items() if S & bit), Fraction(0))

    def total(self) -> Fraction:
        return sum(self.a.values(), Fraction(0))


@dataclass(frozen=True)
class DeliveryPlan:
    """Sparse signal sizes v and piece assignments u; absent keys carry 0."""

    K: int
    v: dict[int, Fraction]
    u: dict[tuple[int, int], Fraction]

    def v_of(self, T: int) -> Fraction:
        return self.v.get(T, Fraction(0))

    def u_of(self, T: int, S: int) -> Fraction:
        return self.u.get((T, S), Fraction(0))


@dataclass(frozen=True)
class Scheme:
    placement: PlacementVector
    delivery: DeliveryPlan

    @property
    def K(self) -> int:
        return self.placement.K

    @property
    def load(self) -> Fraction:
        return sum(self.delivery.v.values(), Fraction(0))

    def dct(self, C: tuple[Fraction, ...]) -> Fraction:
        total = Fraction(0)
        for T, vt in self.delivery.v.items():
            total += vt / min(C[k - 1] for k in users_of(T))
        return total


def make_scheme(
    K: int,
    a: Mapping[int, Rational],
    v: Mapping[int, Rational],
    u: Mapping[tuple[int, int], Rational],
) -> Scheme:
    """Normalize sparse maps into a Scheme, dropping exact zeros."""
    return Scheme(
        placement=PlacementVector(K, {S: Fraction(x) for S, x in a.items() if x != 0}),
        delivery=DeliveryPlan(
            K,
            {T: Fraction(x) for T, x in v.items() if x != 0},
            {key: Fraction(x) for key, x in u.items() if x != 0},
        ),
    )


# ---------------------------------------------------------------------------
# Row builders
# ---------------------------------------------------------------------------

def build_placement_rows(
    inst: CacheInstance,
    prob: LpProblem | None = None,
    *,
    m_variable: bool = False,
    unit_box: bool = True,
) -> LpProblem:
    """Declare a_S for every S in [0, 1] and add normalization + memory rows.

    With ``m_variable=True`` the per-user memories become variables
    ``m[k]`` in [0, 1] and the memory rows couple to them (used by the
    joint allocation solver); otherwise the instance's m is the constant
    right-hand side.  ``unit_box=False`` declares a_S without the upper
    bound, which the normalization row makes redundant anyway; solvers use
    it to keep tableaus small.
    """
    validate_instance(inst)
    if prob is None:
        prob = LpProblem("placement")
    subsets = enumerate_subsets(inst.K)
    for S in subsets:
        prob.add_variable(a_var(S), 0, 1 if unit_box else None)
    prob.add_constraint({a_var(S): 1 for S in subsets}, EQ, 1, "norm")
    for k in range(1, inst.K + 1):
        bit = user_bit(k)
        coeffs: dict[str, Rational] = {a_var(S): 1 for S in subsets if S & bit}
        if m_variable:
            prob.add_variable(m_var(k), 0, 1)
            coeffs[m_var(k)] = -1
            prob.add_constraint(coeffs, LE, 0, f"mem:{k}")
        else:
            prob.add_constraint(coeffs, LE, inst.m[k - 1], f"mem:{k}")
    return prob


def redundancy_terms(K: int, S: int, j: int) -> list[int]:
    """Signals T whose piece for user j draws on subfile class S.

    These are T = {j} union W for nonempty W contained in S; the unicast
    T = {j} is excluded because it does not intersect S.
    """
    jb = user_bit(j)
    out = []
    for T in sorted((W | jb) for W in _nonempty_submasks(S)):
        out.append(T)
    return out


def _nonempty_submasks(mask: int) -> list[int]:
    subs = []
    s = mask
    while s:
        subs.append(s)
        s = (s - 1) & mask
    return subs


def build_delivery_rows(
    inst: CacheInstance,
    prob: LpProblem,
    *,
    placement: PlacementVector | None = None,
    reduced_coupling: bool = False,
    aggregate_unicast: bool = False,
) -> LpProblem:
    """Declare v_T and u[T, S] and add structure/redundancy/completion rows.

    If ``placement`` is None the a_S variables must already be declared in
    ``prob`` (joint optimization); the u <= a couplings become ``cap`` rows.
    With a fixed placement they become plain upper bounds on u and the
    placement values enter the redundancy/completion right-hand sides.

    Two solver-side reductions preserve the feasible set's projection and
    the optimum exactly:

    * ``reduced_coupling=True`` skips ``cap`` rows implied by a ``red`` row
      plus nonnegativity (multicast T with 2 <= |S| <= K-1);
    * ``aggregate_unicast=True`` projects out the unicast pieces
      u[{k}, S], which occur only in their own structure row and their
      couplings: they exist exactly when v_{k} fits the placement mass the
      user does not cache, enforced by one ``unicast:k`` row.  The pieces
      are reconstructed greedily after the solve.
    """
    validate_instance(inst)
    K = inst.K
    a_fixed = placement is not None
    if not a_fixed and not prob.has_variable(a_var(0)):
        raise ValueError("placement variables must be declared first (or pass placement=)")

    nonempty = enumerate_subsets(K, lambda s: s != 0)
    for T in nonempty:
        prob.add_variable(v_var(T), 0, None)
    for T in nonempty:
        if aggregate_unicast and set_size(T) == 1:
            continue
        for j in users_of(T):
            for S in b_family(T, j, K):
                if a_fixed:
                    prob.add_variable(u_var(T, S), 0, placement.value(S))
                else:
                    prob.add_variable(u_var(T, S), 0, None)
                    if reduced_coupling and set_size(T) >= 2 and 2 <= set_size(S) <= K - 1:
                        continue  # implied by the red:S:j row plus u >= 0
                    prob.add_constraint(
                        {u_var(T, S): 1, a_var(S): -1}, LE, 0, f"cap:{subset_label(T)}:{subset_label(S)}"
                    )

    for T in nonempty:
        if aggregate_unicast and set_size(T) == 1:
            k = users_of(T)[0]
            bit = user_bit(k)
            if a_fixed:
                prob.add_constraint(
                    {v_var(T): 1}, LE, 1 - placement.cached_fraction(k), f"unicast:{k}"
                )
            else:
                coeffs = {v_var(T): 1}
                for S in enumerate_subsets(K):
                    if S & bit:
                        coeffs[a_var(S)] = 1
                prob.add_constraint(coeffs, LE, 1, f"unicast:{k}")
            continue
        for j in users_of(T):
            coeffs = {u_var(T, S): 1 for S in b_family(T, j, K)}
            coeffs[v_var(T)] = -1
            prob.add_constraint(coeffs, EQ, 0, f"struct:{subset_label(T)}:{j}")

    for S in enumerate_subsets(K, lambda s: 2 <= set_size(s) <= K - 1):
        for j in range(1, K + 1):
            if S & user_bit(j):
                continue
            coeffs = {u_var(T, S): 1 for T in redundancy_terms(K, S, j)}
            label = f"red:{subset_label(S)}:{j}"
            if a_fixed:
                prob.add_constraint(coeffs, LE, placement.value(S), label)
            else:
                coeffs[a_var(S)] = -1
                prob.add_constraint(coeffs, LE, 0, label)

    for k in range(1, K + 1):
        bit = user_bit(k)
        coeffs = {v_var(T): 1 for T in nonempty if T & bit}
        if a_fixed:
            rhs = 1 - placement.cached_fraction(k)
            prob.add_constraint(coeffs, GE, rhs, f"complete:{k}")
        else:
            for S in enumerate_subsets(K):
                if S & bit:
                    coeffs[a_var(S)] = 1
            prob.add_constraint(coeffs, GE, 1, f"complete:{k}")
    return prob


# ---------------------------------------------------------------------------
# Assignment <-> Scheme
# ---------------------------------------------------------------------------

def scheme_from_assignment(K: int, assignment: Mapping[str, Fraction]) -> Scheme:
    a: dict[int, Fraction] = {}
    v: dict[int, Fraction] = {}
    u: dict[tuple[int, int], Fraction] = {}
    for name, value in assignment.items():
        if value == 0:
            continue
        if name.startswith("a["):
            a[parse_subset_label(name[1:])] = Fraction(value)
        elif name.startswith("v["):
            v[parse_subset_label(name[1:])] = Fraction(value)
        elif name.startswith("u[T="):
            body = name[2:-1]
            t_part, s_part = body.split("|S=")
            u[(parse_subset_label(t_part[2:]), parse_subset_label(s_part))] = Fraction(value)
    return Scheme(PlacementVector(K, a), DeliveryPlan(K, v, u))


def scheme_assignment(scheme: Scheme, inst: CacheInstance) -> dict[str, Fraction]:
    """Dense variable assignment (zeros included) for feasibility checking."""
    K = inst.K
    out: dict[str, Fraction] = {}
    for S in enumerate_subsets(K):
        out[a_var(S)] = scheme.placement.value(S)
    for T in enumerate_subsets(K, lambda s: s != 0):
        out[v_var(T)] = scheme.delivery.v_of(T)
        for j in users_of(T):
            for S in b_family(T, j, K):
                out[u_var(T, S)] = scheme.delivery.u_of(T, S)
    return out


def scheme_to_json(scheme: Scheme) -> dict:
    return {
        "load": rational_str(scheme.load),
        "a": {subset_label(S): rational_str(x) for S, x in sorted(scheme.placement.a.items())},
        "v": {subset_label(T): rational_str(x) for T, x in sorted(scheme.delivery.v.items())},
        "u": {
            f"T={subset_label(T)}|S={subset_label(S)}": rational_str(x)
            for (T, S), x in sorted(scheme.delivery.u.items())
        },
    }


def scheme_from_json(data: Mapping, K: int) -> Scheme:
    a = {parse_subset_label(key): Fraction(str(val)) for key, val in data.get("a", {}).items()}
    v = {parse_subset_label(key): Fraction(str(val)) for key, val in data.get("v", {}).items()}
    u = {}
    for key, val in data.get("u", {}).items():
        t_part, s_part = key.split("|S=")
        u[(parse_subset_label(t_part[2:]), parse_subset_label(s_part))] = Fraction(str(val))
    return make_scheme(K, a, v, u)


# ---------------------------------------------------------------------------
# Side-information consistency check
# ---------------------------------------------------------------------------

def check_side_information(scheme: Scheme) -> list[str]:
    """Verify that multicast volume never exceeds available side information.

    For every seed set S' (1 <= |S'| <= K-2) and user j outside it, the
    total size of signals reaching {j} union S' is bounded by the placement
    mass stored at supersets of S' that exclude j.  Feasible plans always
    satisfy this; a violation indicates a constraint-builder bug.
    """
    K = scheme.K
    violations: list[str] = []
    for Sp in enumerate_subsets(K, lambda s: 1 <= set_size(s) <= K - 2):
        for j in range(1, K + 1):
            jb = user_bit(j)
            if Sp & jb:
                continue
            seed = Sp | jb
            lhs = sum(
                (x for T, x in scheme.delivery.v.items() if T & seed == seed), Fraction(0)
            )
            rhs = sum(
                (x for S, x in scheme.placement.a.items() if S & Sp == Sp and not S & jb),
                Fraction(0),
            )
            if lhs > rhs:
                violations.append(
                    f"side-info S'={subset_label(Sp)} j={j}: "
                    f"signals {rational_str(lhs)} > stored {rational_str(rhs)}"
                )
    return violations
