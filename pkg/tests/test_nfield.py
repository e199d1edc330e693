import random
from fractions import Fraction

import pytest
import sympy
from mpmath import mp, mpf

from heightgap.nfield import (
    InfiniteValuationError,
    NumberField,
    ReducibleError,
    UnsupportedPrimeError,
    kronecker,
    make_field,
    zeta2,
)

FIELDS = {
    "Q": [0, 1],
    "Q(i)": [1, 0, 1],
    "Q(sqrt-3)": [1, -1, 1],
    "Q(sqrt5)": [-1, -1, 1],
}


def dirichlet_L2(chi, q):
    """L(2, chi) from Hurwitz zeta values; independent of the Euler product."""
    return sum(chi(a) * mp.zeta(2, mpf(a) / q) for a in range(1, q + 1)) / q**2


def test_gaussian_field_data():
    K = make_field([1, 0, 1])
    assert (K.degree, K.r1, K.r2, K.disc) == (2, 0, 1, -4)
    assert K.disc_exact and K.flags == []


def test_rationals_and_golden_field():
    Q = make_field([-1, 1])
    assert (Q.degree, Q.r1, Q.disc) == (1, 1, 1)
    K = make_field([-1, -1, 1])
    assert (K.r1, K.r2, K.disc) == (2, 0, 5)


def test_cubic_disc_is_flagged():
    K = NumberField([-2, 0, 0, 1])
    assert K.r1 + 2 * K.r2 == 3
    assert K.disc == 108 and not K.disc_exact
    assert K.flags


def test_reducible_rejected_with_witness():
    with pytest.raises(ReducibleError) as exc:
        NumberField([-1, 0, 1])
    assert exc.value.witness in ((-1, 1), (1, 1))


@pytest.mark.parametrize("mp_, p, norms", [
    ([1, 0, 1], 5, [5, 5]),
    ([1, 0, 1], 3, [9]),
    ([0, 1], 7, [7]),
    ([1, 0, 1], 2, [2]),
])
def test_places_above(mp_, p, norms):
    K = NumberField(mp_)
    assert sorted(P.norm for P in K.places_above(p)) == norms


@pytest.mark.parametrize("mp_", [[1, 0, 1], [1, -1, 1], [-1, -1, 1], [-2, 0, 0, 1], [1, 3, 0, 1]])
def test_ef_sum_matches_degree_against_modular_factorization(mp_):
    K = NumberField(mp_)
    x = sympy.Symbol("x")
    for p in [2, 3, 5, 7, 11, 13]:
        try:
            places = K.places_above(p)
        except UnsupportedPrimeError:
            continue
        assert sum(P.e * P.f for P in places) == K.degree
        if K.degree > 2:
            f = sympy.Poly(sum(c * x**k for k, c in enumerate(mp_)), x, modulus=p)
            oracle = sorted(sympy.degree(g, x) for g, _ in f.factor_list()[1])
            assert sorted(P.f for P in places) == oracle


def test_valuation_examples():
    Q = NumberField([0, 1])
    assert Q.valuation(Q(2), Q.places_above(2)[0]) == 1
    K = NumberField([1, 0, 1])
    i = K.gen
    P2 = K.places_above(2)[0]
    assert K.valuation(1 + i, P2) == 1
    assert K.valuation(K(2), P2) == 2
    for p in (2, 3, 5):
        for P in K.places_above(p):
            assert K.valuation(i, P) == 0
    with pytest.raises(InfiniteValuationError):
        K.valuation(K.zero, P2)


def test_kronecker_against_sympy():
    for D in (-4, -3, 5, -7, 8, 12):
        for p in (3, 5, 7, 11, 13, 17, 19):
            if D % p:
                assert kronecker(D, p) == sympy.jacobi_symbol(D % p, p)


def test_field_arithmetic_roundtrip():
    K = NumberField([-2, 0, 0, 1])
    rng = random.Random(3)
    for _ in range(20):
        x = K.random_element(rng)
        if x.is_zero():
            continue
        assert x * x.inverse() == K.one
        y = K.random_element(rng)
        assert (x + y) - y == x
        assert x.norm() == (x * K.one).norm()


@pytest.mark.parametrize("name", list(FIELDS))
def test_product_formula(name):
    K = NumberField(FIELDS[name])
    rng = random.Random(11)
    for _ in range(40):
        x = K.random_element(rng)
        if x.is_zero():
            continue
        with mp.workprec(K.precision_bits):
            s = sum(K.log_abs(x, v) for v in K.infinite_places)
            s += sum(K.log_abs(x, v) for v in K.finite_support(x))
        assert abs(s) < 1e-9


def test_norm_matches_embeddings():
    K = NumberField([1, 3, 0, 1])
    rng = random.Random(5)
    for _ in range(10):
        x = K.random_element(rng)
        if x.is_zero():
            continue
        prod = mpf(1)
        for v in K.infinite_places:
            prod *= abs(x.embed(v)) ** v.n_v
        N = x.norm()
        assert abs(prod - abs(mpf(N.numerator) / N.denominator)) < 1e-9 * prod


def test_zeta_rationals_basel():
    z = zeta2(NumberField([0, 1]), 10**6)
    lo, hi = z.interval
    assert lo <= mp.pi**2 / 6 <= hi


def test_zeta_gaussian_against_hurwitz_oracle():
    z = zeta2(NumberField([1, 0, 1]), 10**6)
    chi = lambda a: [0, 1, 0, -1][a % 4]
    oracle = mp.zeta(2) * dirichlet_L2(chi, 4)
    assert z.value <= oracle <= z.upper
    assert abs(oracle - mpf("1.50670300992")) < 1e-10


def test_zeta_golden_against_hurwitz_oracle():
    z = zeta2(NumberField([-1, -1, 1]), 10**6)
    chi = lambda a: int(sympy.jacobi_symbol(a, 5)) if a % 5 else 0
    oracle = mp.zeta(2) * dirichlet_L2(chi, 5)
    assert z.value <= oracle <= z.upper


def test_zeta_refinement_stays_inside():
    K = NumberField([1, -1, 1])
    coarse = zeta2(K, 10**4)
    fine = zeta2(K, 10**5)
    assert coarse.value <= fine.value and fine.upper <= coarse.upper


def test_zeta_bad_bound():
    with pytest.raises(ValueError):
        zeta2(NumberField([0, 1]), 1)
