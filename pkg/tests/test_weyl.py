import random
from math import comb, factorial

import pytest
from gmpy2 import mpq
from hypothesis import given, settings, strategies as st

from fedq.fedosov import gamma_one_form
from fedq.presets import poly2
from fedq.scalars import GaussianRational, Ring
from fedq.weyl import (HbarError, KERNEL_SIGN, WeylSeries, circ, circ_closed_form, commutator,
                       commutator_by_definition, covariant_d, degree_decompose, delta, delta_inv,
                       div_hbar, exterior_d, i_over_hbar, recompose)

from conftest import random_series

I = GaussianRational(0, 1)
seeds = st.integers(min_value=0, max_value=10**6)


def mono(R, j, cap=8, form=(), k=0, c=1):
    return WeylSeries.monomial(R, cap, j, form, k, c)


def moyal_n1(a, b):
    """Independent n=1 oracle: sum_t (-i h/2)^t/t! (d1 x d2 - d2 x d1)^t on dict polynomials.

    Polynomials are {(e1, e2): GaussianRational}; the result is keyed (t, e1, e2).
    """
    def deriv(e, c, u, v):
        if e[0] < u or e[1] < v:
            return None
        f = factorial(e[0]) // factorial(e[0] - u) * factorial(e[1]) // factorial(e[1] - v)
        return (e[0] - u, e[1] - v), c * f

    out = {}
    unit = GaussianRational(0, -KERNEL_SIGN) * mpq(1, 2)
    for ea, ca in a.items():
        for eb, cb in b.items():
            for t in range(0, sum(ea) + 1):
                w = unit ** t * mpq(1, factorial(t))
                for u in range(t + 1):
                    da = deriv(ea, ca, u, t - u)
                    db = deriv(eb, cb, t - u, u)
                    if da is None or db is None:
                        continue
                    key = (t, da[0][0] + db[0][0], da[0][1] + db[0][1])
                    val = da[1] * db[1] * w * (comb(t, u) * (-1) ** (t - u))
                    out[key] = out.get(key, GaussianRational(0)) + val
    return {k: v for k, v in out.items() if v}


def as_dict(s):
    return {(k, j[0], j[1]): c.constant_value() for (k, j, f), c in s.terms.items()}


def test_unit_and_basic_product():
    R = Ring(1)
    a = mono(R, (2, 1)) + mono(R, (0, 3), c=5)
    one = WeylSeries.scalar(R.one(), 8)
    assert circ(a, one) == a and circ(one, a) == a
    # y1 o y2 = y1 y2 - i h/2 with the calibrated kernel
    got = circ(mono(R, (1, 0)), mono(R, (0, 1)))
    assert got == mono(R, (1, 1)) + mono(R, (0, 0), k=1, c=GaussianRational(0, mpq(-1, 2)))


def test_product_against_independent_expansion():
    R = Ring(1)
    for r, j, s, k in [(2, 1, 1, 1), (3, 2, 2, 1), (1, 3, 3, 2)]:
        got = as_dict(circ(mono(R, (r, j), 12), mono(R, (s, k), 12)))
        want = moyal_n1({(r, j): GaussianRational(1)}, {(s, k): GaussianRational(1)})
        assert got == want
    # t runs over 0..min(r,k)+min(j,s) for (y1)^2 y2 o y1 y2
    ts = {t for t, _, _ in as_dict(circ(mono(R, (2, 1)), mono(R, (1, 1))))}
    assert ts == {0, 1, 2}


def test_closed_form_small_cases():
    R = Ring(1)
    assert circ_closed_form(0, 0, 0, 0, 1, R) == WeylSeries.scalar(R.one(), 0)
    cf = circ_closed_form(1, 0, 0, 1, 1, R)
    assert cf.terms[(1, (0, 0), ())] == R.const(GaussianRational(0, mpq(-1, 2)))


def test_closed_form_matches_circ():
    rng = random.Random(7)
    R = Ring(2)
    for _ in range(25):
        r, j, s, k = (rng.randint(0, 4) for _ in range(4))
        i = rng.randint(1, 2)
        ja = [0] * 4
        jb = [0] * 4
        ja[i - 1], ja[i + 1] = r, j
        jb[i - 1], jb[i + 1] = s, k
        cap = r + j + s + k
        assert circ_closed_form(r, j, s, k, i, R) == circ(mono(R, ja, cap), mono(R, jb, cap))


def test_commutator_examples():
    R = Ring(2)
    y1 = mono(R, (1, 0, 0, 0))
    assert commutator(y1, y1).is_zero()
    f = WeylSeries.scalar(R.q(1) * R.p(2), 8)
    assert commutator(y1, f).is_zero()
    # [omega_ij y^i dx^j, a] = -i h delta(a) on fibre polynomials
    w = WeylSeries(R, 8)
    for a in (1, 2):
        w = w + mono(R, [int(x == a) for x in range(1, 5)], form=(a + 2,))
        w = w - mono(R, [int(x == a + 2) for x in range(1, 5)], form=(a,))
    for j in [(1, 0, 0, 0), (0, 0, 0, 1), (1, 1, 0, 0), (0, 1, 1, 0), (2, 0, 0, 0)]:
        a = mono(R, j)
        want = WeylSeries(R, 8, {(1,) + key[1:]: c.scale(-I) for key, c in delta(a).terms.items()})
        assert commutator(w, a) == want


def test_delta_examples():
    R = Ring(2)
    assert delta(mono(R, (1, 1, 0, 0))) == mono(R, (0, 1, 0, 0), form=(1,)) + mono(R, (1, 0, 0, 0), form=(2,))
    assert delta(WeylSeries.scalar(R.q(1), 4)).is_zero()
    assert delta_inv(mono(R, (0, 0, 0, 0), form=(1,))) == mono(R, (1, 0, 0, 0), cap=9)
    back = delta_inv(mono(R, (0, 1, 0, 0), form=(1,)) + mono(R, (1, 0, 0, 0), form=(2,)))
    assert back == mono(R, (1, 1, 0, 0), cap=9)
    assert delta_inv(WeylSeries.scalar(R.const(3), 4)).is_zero()


def test_exterior_d_examples():
    R = Ring(2)
    a = WeylSeries.monomial(R, 4, (0, 1, 0, 0), coeff=R.q(1))
    assert exterior_d(a) == mono(R, (0, 1, 0, 0), cap=4, form=(1,))
    assert exterior_d(WeylSeries.scalar(R.p(1), 4)) == mono(R, (0, 0, 0, 0), cap=4, form=(3,))


def test_covariant_d_trivial_cases():
    P = poly2()
    R = P.ring
    g = gamma_one_form(P.gamma)
    a = WeylSeries.monomial(R, 4, (1, 0, 1, 0), coeff=R.q(2) * R.p(1))
    assert covariant_d(a, WeylSeries(R, 6)) == exterior_d(a)
    assert covariant_d(WeylSeries.scalar(R.const(5), 4), g).is_zero()


def test_div_hbar_refuses_negative_exponent():
    R = Ring(1)
    with pytest.raises(HbarError):
        div_hbar(mono(R, (1, 1)))
    assert i_over_hbar(mono(R, (1, 1), k=1)) == mono(R, (1, 1), cap=6, c=I)


def test_decompose_example():
    R = Ring(2)
    a = mono(R, (1, 0, 0, 0), k=1) + mono(R, (0, 3, 0, 0))
    parts = degree_decompose(a)
    assert [(k, l) for k, l, _ in parts] == [(1, 1), (0, 3)]
    assert [2 * k + l for k, l, _ in parts] == [3, 3]


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_delta_squares_vanish(seed):
    rng = random.Random(seed)
    R = Ring(2)
    a = random_series(rng, R, cap=5, forms=(0, 1, 2))
    assert delta(delta(a)).is_zero()
    assert delta_inv(delta_inv(a)).is_zero()
    assert exterior_d(exterior_d(a)).is_zero()


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_hodge_decomposition(seed):
    rng = random.Random(seed)
    R = Ring(2)
    a = random_series(rng, R, cap=5, forms=(0, 1, 2))
    zero_part = WeylSeries(R, a.cap + 1, {k: c for k, c in a.terms.items() if not sum(k[1]) and not k[2]})
    lhs = delta(delta_inv(a)) + delta_inv(delta(a)).with_cap(a.cap + 1)
    assert lhs + zero_part == a.with_cap(a.cap + 1)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_circ_associative_and_flip(seed):
    rng = random.Random(seed)
    R = Ring(2)
    a, b, c = (random_series(rng, R, cap=5, terms=3, forms=(0,)) for _ in range(3))
    assert circ(circ(a, b), c) == circ(a, circ(b, c))
    assert circ(a, b, sign=-KERNEL_SIGN) == circ(b, a)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_commutator_matches_definition(seed):
    rng = random.Random(seed)
    R = Ring(2)
    a = random_series(rng, R, cap=5, forms=(0, 1, 2))
    b = random_series(rng, R, cap=5, forms=(0, 1))
    assert commutator(a, b) == commutator_by_definition(a, b)
    s = WeylSeries.scalar(R.q(1) + R.const(3), 5)
    assert commutator(s, a).is_zero()


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_covariant_leibniz(seed):
    rng = random.Random(seed)
    P = poly2()
    R = P.ring
    g = gamma_one_form(P.gamma)
    cap = 4
    a = random_series(rng, R, cap=cap, terms=3, forms=(0, 1))
    b = random_series(rng, R, cap=cap, terms=3, forms=(0,))
    lhs = covariant_d(circ(a, b), g, cap)
    a0 = WeylSeries(R, cap, {k: v for k, v in a.terms.items() if not k[2]})
    a1 = a - a0
    rhs = circ(covariant_d(a, g, cap), b) + circ(a0, covariant_d(b, g, cap)) - circ(a1, covariant_d(b, g, cap))
    assert lhs == rhs


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_recompose_round_trip(seed):
    rng = random.Random(seed)
    R = Ring(2)
    a = random_series(rng, R, cap=5, forms=(0, 1))
    assert recompose(degree_decompose(a), R, a.cap) == a
    for k, l, comp in degree_decompose(a):
        assert comp.degrees() == {2 * k + l}
