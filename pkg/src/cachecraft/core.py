"""Domain types and subset algebra shared by the whole toolkit.

Conventions used everywhere:

* Users are 1-based in every public interface.  A set of users is a plain
  ``int`` bitmask where bit ``k-1`` stands for user ``k``; iteration over
  subsets is always in ascending mask value.
* Every fractional quantity (normalized memories, allocation fractions,
  signal sizes, link capacities) is an exact :class:`fractions.Fraction`.
  No float enters any computation; floats appear only in rendered output.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Sequence

Rational = Fraction

#: Hard limit on the number of users: constraint counts grow like K * 2^K.
HARD_MAX_K = 16

_DEFAULT_SOFT_MAX_K = 8


class InstanceError(ValueError):
    """Instance data violates an invariant.  Carries every violation found."""

    def __init__(self, violations: Iterable[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ResourceLimitError(RuntimeError):
    """A computation was refused because it would blow up combinatorially."""


def soft_max_k() -> int:
    """User-count threshold above which a warning is emitted.

    Overridable through the ``CACHECRAFT_MAX_K`` environment variable.
    """
    raw = os.environ.get("CACHECRAFT_MAX_K")
    if raw is None:
        return _DEFAULT_SOFT_MAX_K
    try:
        return int(raw)
    except ValueError:
        return _DEFAULT_SOFT_MAX_K


def check_user_count(K: int) -> None:
    if not isinstance(K, int) or K < 1 or K > HARD_MAX_K:
        raise InstanceError([f"K={K!r} outside the supported range 1..{HARD_MAX_K}"])
    if K > soft_max_k():
        warnings.warn(
            f"K={K} users: expect exponential constraint counts (threshold {soft_max_k()})",
            RuntimeWarning,
            stacklevel=2,
        )


# ---------------------------------------------------------------------------
# Bitmask subset algebra
# ---------------------------------------------------------------------------

def full_mask(K: int) -> int:
    return (1 << K) - 1


def user_bit(k: int) -> int:
    """Bitmask of the singleton set {k} (users are 1-based)."""
    return 1 << (k - 1)


def mask_of(users: Iterable[int]) -> int:
    mask = 0
    for k in users:
        mask |= 1 << (k - 1)
    return mask


def users_of(mask: int) -> tuple[int, ...]:
    """The 1-based members of ``mask`` in ascending order."""
    out = []
    k = 1
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return tuple(out)


def set_size(mask: int) -> int:
    return mask.bit_count()


def enumerate_subsets(K: int, predicate: Callable[[int], bool] | None = None) -> list[int]:
    """All subsets of [K] passing ``predicate``, in ascending mask order."""
    check_user_count(K)
    masks = range(1 << K)
    if predicate is None:
        return list(masks)
    return [m for m in masks if predicate(m)]


def iter_submasks(mask: int) -> Iterator[int]:
    """Submasks of ``mask`` in ascending numeric order (including 0 and mask)."""
    subs = []
    s = mask
    while True:
        subs.append(s)
        if s == 0:
            break
        s = (s - 1) & mask
    return iter(reversed(subs))


def b_family(T: int, j: int, K: int) -> list[int]:
    """Subfile indices usable inside signal ``T`` for the piece aimed at ``j``.

    These are exactly the sets S with T \\ {j} contained in S and j not in S:
    every other member of T caches such a subfile and can cancel the piece,
    while user j does not hold it.  Ascending mask order; the family has
    2^(K - |T|) members.
    """
    jb = user_bit(j)
    if T == 0:
        raise ValueError("T must be nonempty")
    if not T & jb:
        raise ValueError(f"user {j} is not a member of {subset_label(T)}")
    base = T & ~jb
    free = full_mask(K) & ~T
    return [base | extra for extra in iter_submasks(free)]


def subset_label(mask: int) -> str:
    """Canonical text form of a user set, e.g. ``[1,3]`` (``[]`` for empty)."""
    return "[" + ",".join(str(k) for k in users_of(mask)) + "]"


def parse_subset_label(text: str) -> int:
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise ValueError(f"bad subset label {text!r}")
    body = body[1:-1].strip()
    if not body:
        return 0
    return mask_of(int(part) for part in body.split(","))


# ---------------------------------------------------------------------------
# Rational parsing / rendering
# ---------------------------------------------------------------------------

def parse_rational(text: str | int) -> Fraction:
    """Parse a canonical ``p/q`` (or bare ``p``) string into a Fraction."""
    if isinstance(text, int):
        return Fraction(text)
    return Fraction(str(text).strip())


def rational_str(x: Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def decimal_str(x: Fraction, places: int = 6) -> str:
    """Exact decimal rendering of a rational, rounded half-even."""
    x = Fraction(x)
    with localcontext() as ctx:
        ctx.prec = max(places + len(str(abs(x.numerator))) + len(str(x.denominator)), 28)
        d = Decimal(x.numerator) / Decimal(x.denominator)
        return str(d.quantize(Decimal(1).scaleb(-places)))


# ---------------------------------------------------------------------------
# Problem instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CacheInstance:
    """A delivery-load problem: K users, N files, normalized memory vector m.

    ``m[k-1]`` is user k's cache size divided by the library size.  No
    ordering of m is assumed; closed forms sort internally and the LP is
    permutation-covariant.
    """

    K: int
    N: int
    m: tuple[Fraction, ...]


@dataclass(frozen=True)
class CapacityInstance:
    """A completion-time problem: per-user link rates and a cache budget."""

    K: int
    N: int
    C: tuple[Fraction, ...]
    m_tot: Fraction


def cache_instance(K: int, N: int, m: Sequence[Fraction | str | int]) -> CacheInstance:
    inst = CacheInstance(K=K, N=N, m=tuple(parse_rational(x) if isinstance(x, str) else Fraction(x) for x in m))
    return validate_instance(inst)


def capacity_instance(
    K: int, N: int, C: Sequence[Fraction | str | int], m_tot: Fraction | str | int
) -> CapacityInstance:
    inst = CapacityInstance(
        K=K,
        N=N,
        C=tuple(parse_rational(x) if isinstance(x, str) else Fraction(x) for x in C),
        m_tot=parse_rational(m_tot) if isinstance(m_tot, str) else Fraction(m_tot),
    )
    return validate_instance(inst)


def validate_instance(inst: CacheInstance | CapacityInstance):
    """Check every invariant; raise :class:`InstanceError` naming each failure."""
    bad: list[str] = []
    if not isinstance(inst.K, int) or inst.K < 1 or inst.K > HARD_MAX_K:
        bad.append(f"K={inst.K!r} outside the supported range 1..{HARD_MAX_K}")
    if not isinstance(inst.N, int) or inst.N < 1:
        bad.append(f"N={inst.N!r} must be a positive integer")
    elif isinstance(inst.K, int) and inst.N < inst.K:
        bad.append(f"N={inst.N} < K={inst.K}: only the N >= K regime is supported")
    if isinstance(inst, CacheInstance):
        if len(inst.m) != inst.K:
            bad.append(f"m has {len(inst.m)} entries, expected K={inst.K}")
        for k, mk in enumerate(inst.m, start=1):
            if not (0 <= mk <= 1):
                bad.append(f"m_{k}={rational_str(mk)} outside [0,1]")
    else:
        if len(inst.C) != inst.K:
            bad.append(f"C has {len(inst.C)} entries, expected K={inst.K}")
        for k, ck in enumerate(inst.C, start=1):
            if ck <= 0:
                bad.append(f"C_{k}={rational_str(ck)} must be positive")
        if inst.m_tot < 0:
            bad.append(f"m_tot={rational_str(inst.m_tot)} must be nonnegative")
    if bad:
        raise InstanceError(bad)
    if isinstance(inst.K, int) and 1 <= inst.K <= HARD_MAX_K:
        check_user_count(inst.K)
    return inst


# ---------------------------------------------------------------------------
# Instance JSON schema
# ---------------------------------------------------------------------------
#
# {"K": int, "N": int, "m": ["p/q", ...],
#  optional "C": ["p/q", ...], optional "m_tot": "p/q"}

def instance_fields_from_json(data: Mapping) -> dict:
    """Parse the raw instance JSON dict into exact fields.

    Returns a dict with keys K, N and whatever of m / C / m_tot are present,
    rationals parsed.  Command-level code assembles the concrete instance
    type(s) it needs from these fields.
    """
    if "K" not in data or "N" not in data:
        raise InstanceError(["instance JSON must contain integer fields 'K' and 'N'"])
    out: dict = {"K": data["K"], "N": data["N"]}
    if "m" in data:
        out["m"] = [parse_rational(x) for x in data["m"]]
    if "C" in data:
        out["C"] = [parse_rational(x) for x in data["C"]]
    if "m_tot" in data:
        out["m_tot"] = parse_rational(data["m_tot"])
    return out


def cache_instance_to_json(inst: CacheInstance) -> dict:
    return {"K": inst.K, "N": inst.N, "m": [rational_str(x) for x in inst.m]}


def capacity_instance_to_json(inst: CapacityInstance) -> dict:
    return {
        "K": inst.K,
        "N": inst.N,
        "C": [rational_str(x) for x in inst.C],
        "m_tot": rational_str(inst.m_tot),
    }
