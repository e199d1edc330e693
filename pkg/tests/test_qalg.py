from fractions import Fraction

import pytest
import sympy
from mpmath import mp, mpf

from heightgap.gaplab import bianchi_field
from heightgap.nfield import NumberField
from heightgap.qalg import (
    AlgebraError,
    floor_log2,
    index_bounds_from_generic,
    index_multiplier,
    make_algebra,
    make_lattice,
    max_lattice_covolume,
    min_covolume,
)

Q = NumberField([0, 1])
GI = NumberField([1, 0, 1])
EIS = NumberField([1, -1, 1])


def L2(chi, q):
    return sum(chi(a) * mp.zeta(2, mpf(a) / q) for a in range(1, q + 1)) / q**2


def test_make_algebra_examples():
    A = make_algebra(GI)
    assert (A.signature.a, A.signature.b) == (0, 1)
    B = make_algebra(Q, [2, 3], [0])
    assert (B.signature.a, B.signature.b) == (1, 0)
    with pytest.raises(AlgebraError, match="odd size 1"):
        make_algebra(Q, [2], [0])
    with pytest.raises(AlgebraError):
        make_algebra(Q, [2, 2, 3, 5], [0])


def test_gaussian_covolume_two_oracles():
    rep = min_covolume(make_algebra(GI))
    oracle = 2 * 8 * mp.zeta(2) * L2(lambda a: [0, 1, 0, -1][a % 4], 4) / (8 * mp.pi**2)
    assert rep.lower <= oracle <= rep.upper
    assert abs(rep.value - oracle) / oracle < 1e-6
    assert abs(oracle - mpf("0.30532")) < 1e-5


def test_eisenstein_covolume_two_oracles():
    rep = min_covolume(make_algebra(EIS))
    chi = lambda a: [0, 1, -1][a % 3]
    oracle = 2 * mpf(3) ** 1.5 * mp.zeta(2) * L2(chi, 3) / (8 * mp.pi**2)
    assert abs(rep.value - oracle) / oracle < 1e-6
    assert rep.lower <= oracle <= rep.upper


def test_rational_split_at_infinity_ramified_at_2_3():
    rep = min_covolume(make_algebra(Q, [2, 3], [0]))
    assert abs(rep.value - 2 * mp.pi / 3) < 1e-6


def test_ramifying_at_an_extra_pair_multiplies_by_q_minus_one():
    base = min_covolume(make_algebra(Q, [2, 3], [0]))
    more = min_covolume(make_algebra(Q, [2, 3, 5, 7], [0]))
    assert abs(more.value / base.value - 4 * 6) < 1e-9


@pytest.mark.parametrize("S, lo, hi", [
    ([], 1, 1),
    ([(5, 0)], 3, 6),
    ([(5, 0), (13, 0)], 21, 84),
    ([(5, 0), (5, 1)], 9, 36),
])
def test_index_multiplier_exact(S, lo, hi):
    rep = max_lattice_covolume(make_algebra(GI), S)
    assert (rep.multiplier_lo, rep.multiplier_hi) == (Fraction(lo), Fraction(hi))
    base = min_covolume(make_algebra(GI))
    assert abs(rep.upper - base.upper * hi) < 1e-12
    assert abs(rep.lower - base.lower * lo) < 1e-12


def test_S_disjoint_from_ramification():
    A = make_algebra(Q, [2, 3], [0])
    with pytest.raises(AlgebraError):
        make_lattice(A, [2], [[[1, 1], [0, 1]]])


def test_bianchi_covolume_window():
    # log covol - 3/2 log|D_k| lies between log(2/(8 pi^2)) and log(2 zeta(2)^2/(8 pi^2))
    lo = mp.log(2 / (8 * mp.pi**2))
    hi = mp.log(2 * mp.zeta(2) ** 2 / (8 * mp.pi**2))
    for D in range(1, 101):
        if sympy.ntheory.factor_.core(D) != D:
            continue
        K = bianchi_field(D)
        rep = min_covolume(make_algebra(K), 10**4)
        val = mp.log(rep.value) - mpf(3) / 2 * mp.log(abs(K.disc))
        assert lo < val < hi


def test_index_bounds_gaussian_spot_case():
    A = make_algebra(GI)
    i = GI.gen
    W = A.ambient.element([[1 + i, 1], [i, 1]])
    ib = index_bounds_from_generic(W, A)
    assert ib.beta == i
    assert ib.norm_beta == 1 and ib.S_bound == 0 and ib.product_bound == 1
    assert ib.candidate_places == []


def test_index_bounds_rational_cases():
    A = make_algebra(Q, [], [0])
    ib = index_bounds_from_generic(A.ambient.element([[3, 1], [2, 1]]), A)
    assert ib.beta == Q(2) and ib.norm_beta == 2
    assert ib.S_bound == 1 and ib.product_bound == 4
    ib = index_bounds_from_generic(A.ambient.element([[2, 1], [1, 1]]), A)
    assert ib.norm_beta == 1 and ib.candidate_places == []


def test_index_bounds_respect_the_inequalities():
    A = make_algebra(GI)
    i = GI.gen
    g = A.ambient.element([[1, i], [0, 1]]) * A.ambient.element([[0, -1], [1, 0]])
    for k in range(1, 6):
        W = g ** (2 * k)
        ib = index_bounds_from_generic(W, A)
        assert ib.S_bound == floor_log2(abs(ib.norm_beta))
        assert len(ib.candidate_places) <= ib.S_bound
        assert ib.candidate_product <= ib.norm_beta**2


def test_unipotent_rejected():
    A = make_algebra(GI)
    with pytest.raises(AlgebraError, match="trace 2"):
        index_bounds_from_generic(A.ambient.element([[1, 1], [0, 1]]), A, check_generic=False)
