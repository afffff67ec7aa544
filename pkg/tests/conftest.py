import random

import pytest

from fedq.scalars import Ring
from fedq.weyl import WeylSeries


def random_element(rng, ring, terms=3, deg=2, p=True):
    n = ring.n
    out = ring.zero()
    for _ in range(terms):
        m = ring.const(rng.randint(-4, 4))
        for _ in range(rng.randint(0, deg)):
            idx = rng.randint(1, 2 * n if p else n)
            m = m * ring.var(idx)
        out = out + m
    return out


def random_series(rng, ring, cap=5, terms=4, forms=(0, 1), coeff_deg=1):
    """Random series with degree <= cap and form degree drawn from ``forms``."""
    n2 = 2 * ring.n
    out = WeylSeries(ring, cap)
    for _ in range(terms):
        k = rng.randint(0, cap // 2)
        left = cap - 2 * k
        j = [0] * n2
        for _ in range(rng.randint(0, left)):
            j[rng.randrange(n2)] += 1
        m = rng.choice(forms)
        form = tuple(sorted(rng.sample(range(1, n2 + 1), m)))
        c = random_element(rng, ring, terms=2, deg=coeff_deg)
        out = out + WeylSeries.monomial(ring, cap, j, form, k, c)
    return out


@pytest.fixture
def ring2():
    return Ring(2, name="t2")


@pytest.fixture
def rng():
    return random.Random(20240611)
