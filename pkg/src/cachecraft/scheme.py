"""Packet-level realization of an abstract scheme, plus decode simulation.

A file is split into P packets, P being the least common multiple of every
assignment denominator, so all fractional sizes become exact packet counts.
Subfile classes occupy fixed packet intervals (the same layout in every
file).  Signals are emitted multicast-first (descending signal-set size,
ascending mask within a size); inside a subfile, packets are handed out by a
moving cursor, which makes ranges taken by different signals disjoint by
construction.

Multicast signals XOR one equal-length piece per recipient, each piece
assembled exactly from its assignment variables.  A unicast is a remainder:
it carries the structured pieces first, then any packets its user still
misses, and stops early once nothing is missing, so the measured load can
only fall below the abstract load by the recorded slack (zero at optimal
vertices and for every constructor in this package).

Packet contents are deterministic pseudo-random 64-bit words seeded per
(file, packet index), so decoding is checked on values, not bookkeeping.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Sequence

from .core import (
    CacheInstance,
    b_family,
    enumerate_subsets,
    set_size,
    subset_label,
    user_bit,
    users_of,
    validate_instance,
)
from .model import Scheme


class MaterializeError(ValueError):
    """The abstract scheme cannot be realized (infeasible or bad demand)."""


class ConsistencyError(RuntimeError):
    """Measured packet totals disagree with the abstract scheme."""


def packet_value(file: int, index: int, seed: int = 0) -> int:
    """Deterministic 64-bit content of one packet."""
    digest = hashlib.blake2b(f"{seed}:{file}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class Piece:
    """A run of packets of one file drawn from one subfile class."""

    file: int
    subfile: int  # subset S that exclusively caches this run
    start: int  # absolute packet index within the file
    count: int


@dataclass(frozen=True)
class SignalRecord:
    T: int
    length: int  # packets
    pieces: dict[int, tuple[Piece, ...]]  # recipient -> its piece runs
    payload: tuple[int, ...]


@dataclass(frozen=True)
class MaterializedScheme:
    K: int
    N: int
    P: int
    demand: tuple[int, ...]
    subfile_offset: dict[int, int]
    subfile_len: dict[int, int]
    signals: tuple[SignalRecord, ...]
    abstract: Scheme
    unicast_slack: dict[int, int]  # user -> packets withheld from its unicast
    seed: int

    def packets_sent(self) -> int:
        return sum(sig.length for sig in self.signals)

    def to_json(self) -> dict:
        return {
            "P": self.P,
            "demand": list(self.demand),
            "signals": [
                {
                    "T": subset_label(sig.T),
                    "length": sig.length,
                    "pieces": {
                        str(j): [
                            {"file": p.file, "S": subset_label(p.subfile), "start": p.start, "count": p.count}
                            for p in runs
                        ]
                        for j, runs in sig.pieces.items()
                    },
                }
                for sig in self.signals
            ],
        }


@dataclass
class UserReport:
    user: int
    file: int
    cached: int
    decoded: int
    missing: int
    missing_ranges: list[tuple[int, int]]  # half-open packet intervals
    ok: bool
    failures: list[str] = field(default_factory=list)


@dataclass
class SimulationReport:
    users: list[UserReport]
    packets_sent: int
    load: Fraction
    dct: Fraction | None
    ok: bool

    def failures(self) -> list[str]:
        out = []
        for u in self.users:
            out.extend(u.failures)
        return out


# ---------------------------------------------------------------------------
# Materialization
# ---------------------------------------------------------------------------

def materialize(
    scheme: Scheme,
    inst: CacheInstance,
    demand: Sequence[int] | None = None,
    seed: int = 0,
) -> MaterializedScheme:
    """Realize ``scheme`` for a distinct-demand vector at packet granularity."""
    validate_instance(inst)
    K, N = inst.K, inst.N
    if demand is None:
        demand = tuple(range(1, K + 1))
    demand = tuple(int(d) for d in demand)
    if len(demand) != K or len(set(demand)) != K or any(not 1 <= d <= N for d in demand):
        raise MaterializeError(f"demand must be K distinct files in 1..{N}, got {demand}")

    for k in range(1, K + 1):
        if scheme.placement.cached_fraction(k) > inst.m[k - 1]:
            raise MaterializeError(f"placement overflows the cache of user {k}")

    if scheme.placement.total() != 1:
        raise MaterializeError("placement fractions must sum to 1")
    values = (
        list(scheme.placement.a.values())
        + list(scheme.delivery.v.values())
        + list(scheme.delivery.u.values())
    )
    P = lcm(*(x.denominator for x in values)) if values else 1

    subfile_len: dict[int, int] = {}
    subfile_offset: dict[int, int] = {}
    offset = 0
    for S in enumerate_subsets(K):
        n = scheme.placement.value(S) * P
        assert n.denominator == 1
        subfile_offset[S] = offset
        subfile_len[S] = int(n)
        offset += int(n)
    assert offset == P

    def as_packets(x: Fraction) -> int:
        n = x * P
        assert n.denominator == 1
        return int(n)

    cursor: dict[tuple[int, int], int] = {}  # (file, S) -> packets consumed

    def carve(file: int, S: int, count: int) -> Piece:
        used = cursor.get((file, S), 0)
        if used + count > subfile_len[S]:
            raise MaterializeError(
                f"subfile {subset_label(S)} of file {file} overflows: "
                f"{used}+{count} > {subfile_len[S]}"
            )
        cursor[(file, S)] = used + count
        return Piece(file, S, subfile_offset[S] + used, count)

    order = sorted(
        (T for T in scheme.delivery.v if scheme.delivery.v[T] > 0),
        key=lambda T: (-set_size(T), T),
    )
    signals: list[SignalRecord] = []
    slack: dict[int, int] = {}
    for T in order:
        length = as_packets(scheme.delivery.v_of(T))
        members = users_of(T)
        if len(members) >= 2:
            pieces: dict[int, tuple[Piece, ...]] = {}
            for j in members:
                runs = []
                total = 0
                for S in b_family(T, j, K):
                    n = as_packets(scheme.delivery.u_of(T, S))
                    if n:
                        runs.append(carve(demand[j - 1], S, n))
                        total += n
                if total != length:
                    raise MaterializeError(
                        f"signal {subset_label(T)}: piece for user {j} has {total} packets, "
                        f"expected {length}"
                    )
                pieces[j] = tuple(runs)
            payload = [0] * length
            for j in members:
                i = 0
                for run in pieces[j]:
                    for p in range(run.start, run.start + run.count):
                        payload[i] ^= packet_value(run.file, p, seed)
                        i += 1
            signals.append(SignalRecord(T, length, pieces, tuple(payload)))
        else:
            j = members[0]
            file = demand[j - 1]
            jb = user_bit(j)
            runs: list[Piece] = []
            taken = 0
            for S in b_family(T, j, K):
                want = as_packets(scheme.delivery.u_of(T, S))
                room = subfile_len[S] - cursor.get((file, S), 0)
                n = min(want, room, length - taken)
                if n > 0:
                    runs.append(carve(file, S, n))
                    taken += n
            for S in enumerate_subsets(K, lambda s: not s & jb):
                if taken >= length:
                    break
                room = subfile_len[S] - cursor.get((file, S), 0)
                n = min(room, length - taken)
                if n > 0:
                    runs.append(carve(file, S, n))
                    taken += n
            if length - taken:
                slack[j] = slack.get(j, 0) + (length - taken)
            if taken == 0:
                continue
            payload = []
            for run in runs:
                payload.extend(packet_value(run.file, p, seed) for p in range(run.start, run.start + run.count))
            signals.append(SignalRecord(T, taken, {j: tuple(runs)}, tuple(payload)))

    return MaterializedScheme(
        K=K,
        N=N,
        P=P,
        demand=demand,
        subfile_offset=subfile_offset,
        subfile_len=subfile_len,
        signals=tuple(signals),
        abstract=scheme,
        unicast_slack=slack,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Simulation / decoding
# ---------------------------------------------------------------------------

def simulate_and_decode(ms: MaterializedScheme) -> SimulationReport:
    """Replay delivery: every user cancels, decodes, and must finish its file.

    Cancellation uses only packets the user actually caches; recovered
    pieces are compared word-for-word against the true file contents.
    """
    reports: list[UserReport] = []
    for k in range(1, ms.K + 1):
        kb = user_bit(k)
        file = ms.demand[k - 1]
        covered: set[int] = set()
        for S, n in ms.subfile_len.items():
            if S & kb and n:
                covered.update(range(ms.subfile_offset[S], ms.subfile_offset[S] + n))
        cached = len(covered)
        failures: list[str] = []
        for sig in ms.signals:
            if not sig.T & kb:
                continue
            if set_size(sig.T) == 1:
                base = 0
                for run in sig.pieces[k]:
                    for idx in range(run.count):
                        expect = packet_value(run.file, run.start + idx, ms.seed)
                        if sig.payload[base + idx] != expect:
                            failures.append(
                                f"unicast {subset_label(sig.T)}: payload mismatch at packet {run.start + idx}"
                            )
                            break
                    else:
                        covered.update(range(run.start, run.start + run.count))
                    base += run.count
                continue
            other = [0] * sig.length
            structural = False
            for j in users_of(sig.T):
                if j == k:
                    continue
                i = 0
                for run in sig.pieces[j]:
                    if not run.subfile & kb:
                        failures.append(
                            f"signal {subset_label(sig.T)}: cannot cancel piece for user {j} "
                            f"from subfile {subset_label(run.subfile)} (not cached by user {k})"
                        )
                        structural = True
                        i += run.count
                        continue
                    for p in range(run.start, run.start + run.count):
                        other[i] ^= packet_value(run.file, p, ms.seed)
                        i += 1
            if structural:
                continue
            i = 0
            bad = False
            for run in sig.pieces[k]:
                for p in range(run.start, run.start + run.count):
                    if sig.payload[i] ^ other[i] != packet_value(run.file, p, ms.seed):
                        failures.append(
                            f"signal {subset_label(sig.T)}: recovered packet {p} of file {run.file} is wrong"
                        )
                        bad = True
                        break
                    i += 1
                if bad:
                    break
            if not bad:
                for run in sig.pieces[k]:
                    covered.update(range(run.start, run.start + run.count))
        missing = ms.P - len(covered)
        gaps = _missing_ranges(covered, ms.P) if missing else []
        if missing:
            failures.append(
                f"user {k} is missing {missing} packets of file {file}: "
                + ", ".join(f"[{a},{b})" for a, b in gaps[:4])
            )
        reports.append(
            UserReport(
                user=k,
                file=file,
                cached=cached,
                decoded=len(covered),
                missing=missing,
                missing_ranges=gaps,
                ok=missing == 0 and not failures,
                failures=failures,
            )
        )
    sent = ms.packets_sent()
    return SimulationReport(
        users=reports,
        packets_sent=sent,
        load=Fraction(sent, ms.P),
        dct=None,
        ok=all(r.ok for r in reports),
    )


def _missing_ranges(covered: set[int], total: int) -> list[tuple[int, int]]:
    gaps = []
    start = None
    for p in range(total):
        if p not in covered:
            if start is None:
                start = p
        elif start is not None:
            gaps.append((start, p))
            start = None
    if start is not None:
        gaps.append((start, total))
    return gaps


def measure(
    ms: MaterializedScheme, C: Sequence[Fraction] | None = None
) -> tuple[Fraction, Fraction | None]:
    """Load (and completion time, when rates are given) from actual packets.

    The actual totals must equal the abstract scheme's values minus the
    recorded unicast slack; anything else is an internal bug.
    """
    load = Fraction(ms.packets_sent(), ms.P)
    slack = Fraction(sum(ms.unicast_slack.values()), ms.P)
    if load + slack != ms.abstract.load:
        raise ConsistencyError(
            f"measured load {load} + slack {slack} != abstract {ms.abstract.load}"
        )
    dct = None
    if C is not None:
        dct = Fraction(0)
        for sig in ms.signals:
            rate = min(C[k - 1] for k in users_of(sig.T))
            dct += Fraction(sig.length, ms.P) / rate
    return load, dct
