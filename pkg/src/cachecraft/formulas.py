"""Closed-form loads, bounds, allocations, and explicit scheme constructors.

Everything here is a pure function of exact rationals.  The closed forms
assume an ascending sort of the memory (or capacity) vector; sorting happens
internally and constructed schemes are relabeled back to the caller's
original user order.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Mapping, Sequence

from .core import (
    CacheInstance,
    CapacityInstance,
    Rational,
    full_mask,
    mask_of,
    rational_str,
    user_bit,
    users_of,
    validate_instance,
)
from .model import Scheme, make_scheme


class RegimeError(ValueError):
    """The instance lies outside the regime where a closed form is valid."""


@dataclass(frozen=True)
class RegionLabel:
    """Which branch of the three-user trade-off applies (ascending m)."""

    tag: str  # "I" | "II" | "III" | "IV"
    condition: str


@dataclass(frozen=True)
class AllocationResult:
    """Optimal small-budget memory split: equal shares for the q slowest users."""

    m_star: tuple[Fraction, ...]  # in the caller's original user order
    q: int
    maximizers: frozenset[int]
    theta: Fraction


def _sorted_memories(inst: CacheInstance) -> list[Fraction]:
    validate_instance(inst)
    return sorted(inst.m)


# ---------------------------------------------------------------------------
# Closed-form loads
# ---------------------------------------------------------------------------

def load_small_memory(inst: CacheInstance) -> Fraction:
    """Minimum worst-case load when the caches jointly hold at most one library's worth."""
    m = _sorted_memories(inst)
    K = inst.K
    if sum(m) > 1:
        raise RegimeError(
            f"total memory {rational_str(sum(m, Fraction(0)))} > 1: small-memory form does not apply"
        )
    return K - sum(((K - j + 1) * m[j - 1] for j in range(1, K + 1)), Fraction(0))


def load_large_memory(inst: CacheInstance) -> Fraction:
    """Minimum worst-case load when total memory is at least K-1 libraries."""
    m = _sorted_memories(inst)
    if sum(m) < inst.K - 1:
        raise RegimeError(
            f"total memory {rational_str(sum(m, Fraction(0)))} < K-1: large-memory form does not apply"
        )
    return 1 - m[0]


def three_user_region(m: Sequence[Fraction]) -> RegionLabel:
    """Region of the three-user trade-off for ascending m (first match wins)."""
    m1, m2, m3 = m
    total = m1 + m2 + m3
    if total <= 1:
        return RegionLabel("I", "m1+m2+m3 <= 1")
    if total <= 2 and m3 < m2 + 3 * m1 - 1 and 2 * m2 + m3 < 2:
        return RegionLabel("II", "1 < sum <= 2, m3 < m2+3m1-1, 2m2+m3 < 2")
    if total <= 2 and m3 >= m2 + 3 * m1 - 1 and m1 + m2 < 1:
        return RegionLabel("III", "1 < sum <= 2, m3 >= m2+3m1-1, m1+m2 < 1")
    return RegionLabel("IV", "m1+m2 >= 1 and 2m2+m3 >= 2 (or sum >= 2)")


def load_three_user(inst: CacheInstance) -> tuple[Fraction, RegionLabel]:
    """Exact three-user trade-off: max of the four supporting planes, plus region."""
    if inst.K != 3:
        raise ValueError(f"three-user form needs K=3, got K={inst.K}")
    m = _sorted_memories(inst)
    m1, m2, m3 = m
    value = max(
        3 - (3 * m1 + 2 * m2 + m3),
        Fraction(5, 3) - Fraction(3 * m1 + 2 * m2 + m3, 3),
        2 - 2 * m1 - m2,
        1 - m1,
    )
    return value, three_user_region(m)


# ---------------------------------------------------------------------------
# General-placement lower bounds
# ---------------------------------------------------------------------------

def bound_amiri(inst: CacheInstance) -> Fraction:
    """Cut-style lower bound on the general (any-placement) load.

    Maximizes over the number of served users s and request rounds l; the
    only operation where N enters arithmetic beyond validation.
    """
    m = _sorted_memories(inst)
    K, N = inst.K, inst.N
    best = Fraction(0)
    for s in range(1, K + 1):
        for l in range(1, -(-N // s) + 1):
            gamma = min(max(-(-N // l) - s, 0), K - s)
            first = Fraction(N - max(N - K * l, 0), l)
            second = Fraction(
                s * N * sum(m[: s + gamma], Fraction(0)) + gamma * max(N - l * s, 0),
                l * (s + gamma),
            )
            best = max(best, first - second)
    return best


def bound_cutset(inst: CacheInstance) -> Fraction:
    """Max of the two cut-set families over the served-subset size s."""
    m = _sorted_memories(inst)
    K, N = inst.K, inst.N
    best = Fraction(0)
    for s in range(1, min(K, N) + 1):
        first = s - sum(
            (Fraction(N, N - k + 1) * sum(m[:k], Fraction(0)) for k in range(1, s + 1)),
            Fraction(0),
        )
        second = s * (1 - sum(m[:s], Fraction(0)))
        best = max(best, first, second)
    return best


def gamma_weight(K: int, alpha: Mapping[tuple[int, ...], Rational], S: int) -> Fraction:
    """Permutation-averaged coefficient of a_S in the genie lower bound.

    ``alpha`` is a probability distribution over permutations of 1..K.  For
    one permutation the coefficient of a_S is the number of prefix sets
    disjoint from S, i.e. first-hit position minus one (K for the empty set,
    0 for the full set).
    """
    total = Fraction(0)
    seen = Fraction(0)
    for q, w in alpha.items():
        w = Fraction(w)
        if w < 0:
            raise ValueError("alpha weights must be nonnegative")
        if tuple(sorted(q)) != tuple(range(1, K + 1)):
            raise ValueError(f"{q!r} is not a permutation of 1..{K}")
        seen += w
        if S == 0:
            total += w * K
        elif S == full_mask(K):
            continue
        else:
            first_hit = next(i for i, qk in enumerate(q, start=1) if S & user_bit(qk))
            total += w * (first_hit - 1)
    if seen != 1:
        raise ValueError("alpha weights must sum to 1")
    return total


# ---------------------------------------------------------------------------
# Completion-time closed forms
# ---------------------------------------------------------------------------

def dct_closed_form(inst: CapacityInstance) -> AllocationResult:
    """Optimal allocation of a small budget (at most one library's worth).

    The budget is split equally over the q users with the slowest links,
    where q maximizes the weighted harmonic score; all maximizers are
    reported, the smallest one is used for the returned allocation.
    """
    validate_instance(inst)
    if inst.m_tot > 1:
        raise RegimeError("budget > 1: no closed form, use solve.solve_min_dct")
    K = inst.K
    order = sorted(range(K), key=lambda i: (inst.C[i], i))
    sorted_c = [inst.C[i] for i in order]
    scores: list[Fraction] = []
    acc = Fraction(0)
    for i in range(1, K + 1):
        acc += Fraction(i) / sorted_c[i - 1]
        scores.append(acc / i)
    best = max(scores)
    maximizers = frozenset(i + 1 for i, s in enumerate(scores) if s == best)
    q = min(maximizers)
    theta = sum((1 / c for c in sorted_c), Fraction(0)) - inst.m_tot * best
    m_star = [Fraction(0)] * K
    for pos in range(q):
        m_star[order[pos]] = inst.m_tot / q
    return AllocationResult(tuple(m_star), q, maximizers, theta)


def dct_uniform(inst: CapacityInstance) -> Fraction:
    """Completion time of the equal-split placement for an integer budget."""
    validate_instance(inst)
    if inst.m_tot.denominator != 1 or not (1 <= inst.m_tot <= inst.K):
        raise RegimeError(
            f"uniform-allocation form needs an integer budget in 1..{inst.K}, "
            f"got {rational_str(inst.m_tot)}"
        )
    K = inst.K
    t = int(inst.m_tot)
    sorted_c = sorted(inst.C)
    total = sum(
        (Fraction(comb(K - j, t)) / sorted_c[j - 1] for j in range(1, K - t + 1)),
        Fraction(0),
    )
    return total / comb(K, t)


# ---------------------------------------------------------------------------
# Explicit scheme constructors
# ---------------------------------------------------------------------------

def _fill_unicasts(
    K: int,
    a: dict[int, Fraction],
    u: dict[tuple[int, int], Fraction],
    sizes: Mapping[int, Fraction],
) -> dict[int, Fraction]:
    """Assign unicast pieces u[{j}, S] so each unicast is exactly covered.

    A user's unicast draws from subfile classes it does not cache, net of
    what the multicast pieces already assigned to *that user* consumed
    (pieces for other users live in other files and do not compete).  Every
    constructor below leaves exactly enough net capacity; this is asserted.
    """
    v_out: dict[int, Fraction] = {}
    for j, size in sizes.items():
        if size == 0:
            continue
        jb = user_bit(j)
        need = Fraction(size)
        for S in sorted(a):
            if S & jb:
                continue
            consumed = Fraction(0)
            W = S
            while W:  # multicasts {j} | W, W a nonempty submask of S
                consumed += u.get((W | jb, S), Fraction(0))
                W = (W - 1) & S
            cap = a[S] - consumed
            take = min(need, cap)
            if take > 0:
                u[(jb, S)] = take
                need -= take
            if need == 0:
                break
        assert need == 0, f"unicast for user {j} short by {need}"
        v_out[jb] = Fraction(size)
    return v_out


def _pairwise_scheme(K: int, m: Sequence[Fraction]) -> Scheme:
    """Singleton placement a_{k} = m_k with all pairwise exchanges.

    Valid whenever total memory is at most 1 (in any user order): pair
    {i, j} exchanges min(m_i, m_j), unicasts carry the rest.
    """
    a: dict[int, Fraction] = {}
    a[0] = 1 - sum(m, Fraction(0))
    for k in range(1, K + 1):
        a[user_bit(k)] = Fraction(m[k - 1])
    v: dict[int, Fraction] = {}
    u: dict[tuple[int, int], Fraction] = {}
    for i in range(1, K + 1):
        for j in range(i + 1, K + 1):
            w = min(m[i - 1], m[j - 1])
            if w > 0:
                T = user_bit(i) | user_bit(j)
                v[T] = w
                u[(T, user_bit(i))] = w
                u[(T, user_bit(j))] = w
    sizes = {}
    for j in range(1, K + 1):
        mj = m[j - 1]
        sizes[j] = 1 - mj - sum(
            (min(m[i - 1], mj) for i in range(1, K + 1) if i != j), Fraction(0)
        )
    v.update(_fill_unicasts(K, a, u, sizes))
    return make_scheme(K, a, v, u)


def build_scheme_small_memory(inst: CacheInstance) -> Scheme:
    """Explicit optimal scheme for the small total memory regime."""
    validate_instance(inst)
    if sum(inst.m, Fraction(0)) > 1:
        raise RegimeError("total memory > 1: small-memory scheme does not apply")
    return _pairwise_scheme(inst.K, inst.m)


def build_scheme_lemma1(inst: CapacityInstance, m: Sequence[Rational]) -> Scheme:
    """The completion-time-optimal scheme for a fixed small allocation.

    Identical structure to the small-memory scheme; the capacities only
    affect how its completion time is scored, not the scheme itself.
    """
    validate_instance(inst)
    mf = [Fraction(x) for x in m]
    if len(mf) != inst.K or any(not 0 <= x <= 1 for x in mf):
        raise ValueError("allocation must give each user a fraction in [0,1]")
    if sum(mf, Fraction(0)) > 1:
        raise RegimeError("total allocation > 1: pairwise-exchange scheme does not apply")
    return _pairwise_scheme(inst.K, mf)


def _sort_permutation(m: Sequence[Fraction]) -> list[int]:
    return sorted(range(len(m)), key=lambda i: (m[i], i))


def _remap_scheme(K: int, order: list[int], a, v, u) -> Scheme:
    """Relabel a scheme built on sorted user positions back to original ids."""

    def remap(mask: int) -> int:
        out = 0
        for pos in range(K):
            if mask & (1 << pos):
                out |= 1 << order[pos]
        return out

    return make_scheme(
        K,
        {remap(S): x for S, x in a.items()},
        {remap(T): x for T, x in v.items()},
        {(remap(T), remap(S)): x for (T, S), x in u.items()},
    )


def build_scheme_large_memory(inst: CacheInstance) -> Scheme:
    """Explicit optimal scheme for the large total memory regime.

    Placement puts every file on all-but-one-user sets; delivery uses the
    case split on how the smallest caches compare with the rest.  When the
    nested case applies, the smallest valid split index is used.
    """
    m_sorted = _sorted_memories(inst)
    K = inst.K
    total = sum(m_sorted, Fraction(0))
    if total < K - 1:
        raise RegimeError("total memory < K-1: large-memory scheme does not apply")
    full = full_mask(K)
    a: dict[int, Fraction] = {full: total - (K - 1)}
    for i in range(1, K + 1):
        a[full & ~user_bit(i)] = 1 - m_sorted[i - 1]
    v: dict[int, Fraction] = {}
    u: dict[tuple[int, int], Fraction] = {}

    def emit(T: int, size: Fraction) -> None:
        if size == 0:
            return
        v[T] = size
        for k in users_of(T):
            u[(T, full & ~user_bit(k))] = size

    tail = sum(m_sorted[1:], Fraction(0))
    if (K - 2) * m_sorted[0] >= tail - 1:
        for i in range(2, K + 1):
            emit(full & ~user_bit(i), m_sorted[i - 1] - m_sorted[0])
        emit(full, 1 + (K - 2) * m_sorted[0] - tail)
    else:
        chosen = None
        for l in range(1, K - 1):
            tail_l = sum(m_sorted[l:], Fraction(0))
            tail_l1 = sum(m_sorted[l + 1:], Fraction(0))
            if (K - l - 1) * m_sorted[l - 1] < tail_l - 1 and (K - l - 2) * m_sorted[l] >= tail_l1 - 1:
                chosen = l
                break
        assert chosen is not None, "no valid split index in the nested case"
        l = chosen
        denom = K - l - 1
        tail_l = sum(m_sorted[l:], Fraction(0))
        for i in range(1, l):
            emit(mask_of(range(1, i + 1)), m_sorted[i] - m_sorted[i - 1])
        emit(mask_of(range(1, l + 1)), Fraction(tail_l - 1 - denom * m_sorted[l - 1], denom))
        for i in range(l + 1, K + 1):
            emit(full & ~user_bit(i), Fraction(denom * m_sorted[i - 1] + 1 - tail_l, denom))
    order = _sort_permutation(inst.m)
    return _remap_scheme(K, order, a, v, u)


# Masks in sorted three-user space.
_U1, _U2, _U3 = 1, 2, 4
_T12, _T13, _T23, _T123 = 3, 5, 6, 7


def _region2_scheme(m1: Fraction, m2: Fraction, m3: Fraction):
    a1 = Fraction(2 + m2 - m3, 3) - m1
    a2 = Fraction(2 - 2 * m2 - m3, 3)
    a12 = m1 - Fraction(m3 + 1 - m2, 3)
    a13 = m1 - Fraction(2 * m2 + 1 - 2 * m3, 3)
    a23 = Fraction(4 * m2 + 2 * m3 - 1, 3) - m1
    a = {_U1: a1, _U2: a2, _U3: a2, _T12: a12, _T13: a13, _T23: a23}
    v123 = m1 + Fraction(m2 - m3 - 1, 3)
    v = {
        _T12: Fraction(2 + 2 * m3 - 2 * m2, 3) - m1,
        _T13: Fraction(2 + m2 - m3, 3) - m1,
        _T23: a2,
        _T123: v123,
    }
    u = {
        (_T12, _U2): a2, (_T12, _T23): m3 - m1,
        (_T12, _U1): a1, (_T12, _T13): m3 - m2,
        (_T13, _U3): a2, (_T13, _T23): m2 - m1,
        (_T13, _U1): a1,
        (_T23, _U3): a2, (_T23, _U2): a2,
        (_T123, _T23): v123, (_T123, _T13): v123, (_T123, _T12): v123,
    }
    return a, v, u, {}


def _region3_scheme(m1: Fraction, m2: Fraction, m3: Fraction):
    if m1 <= Fraction(1, 3) and m1 + m3 < 1:
        a = {_U1: m1, _U2: 1 - m1 - m3, _U3: 1 - m1 - m2, _T23: m1 + m2 + m3 - 1}
        x = min(m1, a[_U2])
        y = min(m1, a[_U3])
        v = {_T12: m1, _T13: m1, _T23: a[_U2]}
        u = {
            (_T12, _U2): x, (_T12, _T23): m1 - x, (_T12, _U1): m1,
            (_T13, _U3): y, (_T13, _T23): m1 - y, (_T13, _U1): m1,
            (_T23, _U3): a[_U2], (_T23, _U2): a[_U2],
        }
        sizes = {1: 1 - 3 * m1, 2: m3 - m2}
    elif m1 > Fraction(1, 3) and m3 < 2 * m1:
        a = {
            _U1: 1 - 2 * m1, _U2: 2 * m1 - m3, _U3: 1 - m1 - m2,
            _T13: 3 * m1 - 1, _T23: m2 + m3 - 2 * m1,
        }
        v = {_T12: m1, _T13: 1 - 2 * m1, _T23: 2 * m1 - m3}
        u = {
            (_T12, _U2): a[_U2], (_T12, _T23): m3 - m1,
            (_T12, _U1): a[_U1], (_T12, _T13): a[_T13],
            (_T13, _U3): a[_U3], (_T13, _T23): m2 - m1,
            (_T13, _U1): a[_U1],
            (_T23, _U3): 2 * m1 - m3, (_T23, _U2): a[_U2],
        }
        sizes = {2: 1 + m3 - 3 * m1 - m2}
    else:  # m1 + m3 >= 1 and m3 >= 2 m1
        a = {_U1: 1 - m3, _U3: 1 - m1 - m2, _T13: m1 + m3 - 1, _T23: m2}
        y = min(1 - m3, a[_U3])
        v = {_T12: m1, _T13: 1 - m3}
        u = {
            (_T12, _T23): m1,
            (_T12, _U1): 1 - m3, (_T12, _T13): m1 + m3 - 1,
            (_T13, _U3): y, (_T13, _T23): (1 - m3) - y,
            (_T13, _U1): 1 - m3,
        }
        sizes = {1: m3 - 2 * m1, 2: 1 - m1 - m2}
    return a, v, u, sizes


def _region4_scheme(m1: Fraction, m2: Fraction, m3: Fraction):
    total = m1 + m2 + m3
    sizes: dict[int, Fraction] = {}
    if total >= 2:
        a = {_T12: 1 - m3, _T13: 1 - m2, _T23: 1 - m1, _T123: total - 2}
        if 1 + m1 >= m2 + m3:
            v123 = 1 + m1 - m2 - m3
            v = {_T12: m3 - m1, _T13: m2 - m1, _T123: v123}
            u = {
                (_T12, _T23): m3 - m1, (_T12, _T13): m3 - m1,
                (_T13, _T23): m2 - m1, (_T13, _T12): m2 - m1,
                (_T123, _T23): v123, (_T123, _T13): v123, (_T123, _T12): v123,
            }
        else:
            v = {_T12: 1 - m2, _T13: 1 - m3}
            u = {
                (_T12, _T23): 1 - m2, (_T12, _T13): 1 - m2,
                (_T13, _T23): 1 - m3, (_T13, _T12): 1 - m3,
            }
            sizes = {1: m2 + m3 - 1 - m1}
    else:
        a = {_U1: 2 - total, _T12: m1 + m2 - 1, _T13: m1 + m3 - 1, _T23: 1 - m1}
        if 1 + m1 >= m2 + m3:
            v123 = 1 + m1 - m2 - m3
            v = {_T12: m3 - m1, _T13: m2 - m1, _T123: v123}
            u = {
                (_T12, _T23): m3 - m1,
                (_T12, _U1): a[_U1], (_T12, _T13): m2 + 2 * m3 - 2,
                (_T13, _T23): m2 - m1,
                (_T13, _U1): a[_U1], (_T13, _T12): 2 * m2 + m3 - 2,
                (_T123, _T23): v123, (_T123, _T13): v123, (_T123, _T12): v123,
            }
        else:
            v = {_T12: 1 - m2, _T13: 1 - m3}
            u = {
                (_T12, _T23): 1 - m2,
                (_T12, _U1): a[_U1], (_T12, _T13): m1 + m3 - 1,
                (_T13, _T23): 1 - m3,
                (_T13, _U1): a[_U1], (_T13, _T12): m1 + m2 - 1,
            }
            sizes = {1: m2 + m3 - 1 - m1}
    return a, v, u, sizes


def build_scheme_three_user(inst: CacheInstance) -> Scheme:
    """Optimal three-user scheme, dispatched on the trade-off region."""
    value, region = load_three_user(inst)
    if region.tag == "I":
        scheme = _pairwise_scheme(3, inst.m)
    else:
        m1, m2, m3 = _sorted_memories(inst)
        builder = {"II": _region2_scheme, "III": _region3_scheme, "IV": _region4_scheme}[region.tag]
        a, v, u, sizes = builder(m1, m2, m3)
        a = {S: x for S, x in a.items() if x != 0}
        u = {key: x for key, x in u.items() if x != 0}
        v = {T: x for T, x in v.items() if x != 0}
        if sizes:
            v.update(_fill_unicasts(3, a, u, sizes))
        scheme = _remap_scheme(3, _sort_permutation(inst.m), a, v, u)
    assert scheme.load == value, "constructed load disagrees with the closed form"
    return scheme
