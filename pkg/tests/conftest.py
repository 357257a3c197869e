"""Shared fixtures: published plans, seeded fuzz corpora, a process pool helper."""

from __future__ import annotations

import os
import random
from fractions import Fraction
from multiprocessing import Pool

import pytest

from cachecraft import cache_instance, capacity_instance, make_scheme
from cachecraft.core import mask_of


def F(x) -> Fraction:
    return Fraction(x)


def msk(*users: int) -> int:
    return mask_of(users)


def pmap(fn, items, jobs: int | None = None):
    """Order-preserving parallel map over picklable top-level functions."""
    items = list(items)
    if not items:
        return []
    jobs = jobs or min(os.cpu_count() or 1, len(items), 8)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with Pool(jobs) as pool:
        return pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs)))


def rand_fraction(rng: random.Random, max_den: int = 10) -> Fraction:
    den = rng.randint(1, max_den)
    return Fraction(rng.randint(0, den), den)


def rand_cache_instance(rng: random.Random, K: int):
    m = [rand_fraction(rng) for _ in range(K)]
    return cache_instance(K, K, m)


def rand_capacity_instance(rng: random.Random, K: int, m_tot=None):
    C = [Fraction(rng.randint(1, 10), 10) for _ in range(K)]
    if m_tot is None:
        m_tot = Fraction(rng.randint(0, 10 * K), 10)
    return capacity_instance(K, K, C, m_tot)


# The published optimal plan for K=N=3, m=[2/5, 1/2, 3/5]: six subfile
# classes, four multicast signals, load 22/30, subpacketization 30.
@pytest.fixture(scope="session")
def example1_instance():
    return cache_instance(3, 3, ["2/5", "1/2", "3/5"])


@pytest.fixture(scope="session")
def example1_scheme():
    return published_example1_scheme()


def published_example1_scheme():
    a = {
        msk(1): F("7/30"), msk(2): F("4/30"), msk(3): F("4/30"),
        msk(1, 2): F("1/30"), msk(1, 3): F("4/30"), msk(2, 3): F("10/30"),
    }
    v = {
        msk(1, 2): F("10/30"), msk(1, 3): F("7/30"),
        msk(2, 3): F("4/30"), msk(1, 2, 3): F("1/30"),
    }
    u = {
        (msk(1, 2), msk(2)): F("4/30"), (msk(1, 2), msk(2, 3)): F("6/30"),
        (msk(1, 2), msk(1)): F("7/30"), (msk(1, 2), msk(1, 3)): F("3/30"),
        (msk(1, 3), msk(3)): F("4/30"), (msk(1, 3), msk(2, 3)): F("3/30"),
        (msk(1, 3), msk(1)): F("7/30"),
        (msk(2, 3), msk(3)): F("4/30"), (msk(2, 3), msk(2)): F("4/30"),
        (msk(1, 2, 3), msk(2, 3)): F("1/30"), (msk(1, 2, 3), msk(1, 3)): F("1/30"),
        (msk(1, 2, 3), msk(1, 2)): F("1/30"),
    }
    return make_scheme(3, a, v, u)
