import random
from fractions import Fraction

import pytest
from mpmath import mp, mpc, mpf

from heightgap.mobius import (
    Ambient,
    BasePoint,
    DegenerateEigenvalueError,
    GroupSignature,
    classify,
    displacement,
    eigenvalue,
    is_generic,
    lorentz_residual,
    phi_embed,
    trace_field_degree,
    translation_length,
)
from heightgap.nfield import NumberField

Q = NumberField([0, 1])
GI = NumberField([1, 0, 1])
i = GI.gen
H2 = Ambient(Q, [0])
H3 = Ambient(GI)
QS5 = NumberField([-5, 0, 1])
H2xH2 = Ambient(QS5, [0, 1])


def test_signatures():
    assert H2.signature == GroupSignature(1, 0)
    assert H3.signature == GroupSignature(0, 1)
    assert H2xH2.signature.dim == 6
    with pytest.raises(ValueError):
        GroupSignature(0, 0)


def test_classify_examples():
    assert classify(H3.identity(), 0) == "identity"
    assert classify(H3.element([[1, 1], [0, 1]]), 0) == "parabolic"
    g = H3.element([[1 + i, 1], [i, 1]])
    assert g.trace() == 2 + i
    assert classify(g, 0) == "loxodromic"
    assert classify(H3.element([[0, -1], [1, 0]]), 0) == "elliptic"
    assert classify(H2.element([[2, 0], [0, Fraction(1, 2)]]), 0) == "hyperbolic"
    assert classify(H2.element([[1, 1], [-1, 0]]), 0) == "elliptic"


def test_real_factor_of_negative_determinant():
    assert classify(H2.element([[1, 0], [0, -1]]), 0) == "elliptic"
    assert classify(H2.element([[2, 0], [0, -1]]), 0) == "hyperbolic"


def test_eigenvalue_examples():
    a = eigenvalue(H2.element([[2, 0], [0, Fraction(1, 2)]]))
    assert a.minpoly == (-2, 1)
    F = H2.element([[1, 1], [1, 0]])
    assert eigenvalue(F * F).minpoly == (1, -3, 1)
    g = H3.element([[1 + i, 1], [i, 1]])
    al = eigenvalue(g)
    assert al.degree == 4
    assert al.minpoly == (1, -4, 7, -4, 1)
    with mp.workprec(192):
        s = al.value + 1 / al.value
        assert abs(s - mpc(2, 1)) < 1e-40
        assert abs(al.value) >= 1 and al.value.real >= 0
    with pytest.raises(DegenerateEigenvalueError):
        eigenvalue(H3.element([[1, 1], [0, 1]]))


def test_phi_examples():
    I = phi_embed(H2xH2.identity())
    assert I.rows == 6 and all(abs(I[r, c] - (r == c)) < 1e-30 for r in range(6) for c in range(6))
    P = phi_embed(H2.element([[2, 0], [0, Fraction(1, 2)]]))
    ev = sorted(float(abs(x)) for x in mp.eig(P)[0])
    assert ev == pytest.approx([0.25, 1, 4])
    U = phi_embed(H3.element([[1, 1], [0, 1]]))
    # Jordan blocks make eigenvalue solvers inaccurate; test unipotence directly
    N = U - mp.eye(4)
    assert mp.mnorm(N, 1) > 0.5
    assert mp.mnorm(N * N * N, 1) < 1e-30
    assert abs(mp.det(U) - 1) < 1e-20


def _random_elements(amb, rng, n):
    K = amb.field
    out = []
    while len(out) < n:
        rows = [[K([rng.randint(-3, 3) for _ in range(K.degree)]) for _ in range(2)] for _ in range(2)]
        if (rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]).is_zero():
            continue
        out.append(amb.element(rows))
    return out


def test_phi_is_a_homomorphism_preserving_the_form():
    rng = random.Random(4)
    for amb in (H3, H2xH2):
        els = _random_elements(amb, rng, 40)
        for g, h in zip(els[::2], els[1::2]):
            gp = g * g  # orientation preserving
            hp = h * h
            lhs = phi_embed(gp * hp)
            rhs = phi_embed(gp) * phi_embed(hp)
            assert mp.mnorm(lhs - rhs, 1) < 1e-9 * (1 + mp.mnorm(lhs, 1))
            assert lorentz_residual(gp) < 1e-10 * (1 + mp.mnorm(lhs, 1))


def test_genericity_examples():
    assert is_generic(H3.element([[1, 1], [0, 1]])).generic is False
    assert is_generic(H3.element([[0, -1], [1, 0]])).generic is False
    g = H3.element([[1 + i, 1], [i, 1]])
    sq = g * g
    assert sq.trace() == 1 + 4 * i
    v = is_generic(sq)
    assert v.generic is True and v.agree
    assert trace_field_degree(sq) == 2


def test_rational_trace_over_gaussian_field_is_not_generic():
    v = is_generic(H3.element([[2, 1], [1, 1]]))
    assert v.generic is False and v.agree


def test_generic_routes_agree_on_corpus():
    rng = random.Random(9)
    for g in _random_elements(H3, rng, 30):
        v = is_generic(g * g)
        assert v.agree


def test_translation_length_examples():
    d = H2.element([[2, 0], [0, Fraction(1, 2)]])
    tl = translation_length(d)
    assert abs(tl.total - 2 * mp.log(2)) < 1e-12
    assert translation_length(H3.identity()).total == 0
    r = H3.element([[2 * i, 0], [0, 1 / (2 * i)]])
    assert abs(translation_length(r).per_factor[0] - 2 * mp.log(2)) < 1e-12
    p = translation_length(H3.element([[1, 1], [0, 1]]))
    assert p.total == 0 and any("parabolic" in f for f in p.flags)


def test_displacement_examples():
    d = H2.element([[2, 0], [0, Fraction(1, 2)]])
    x = BasePoint.center(H2.signature)
    assert abs(displacement(d, x) - mp.log(4)) < 1e-12
    assert displacement(H3.identity(), BasePoint.center(H3.signature)) == 0
    T = H3.element([[1, 1], [0, 1]])
    prev = None
    for t in (1, 2, 4, 8, 16):
        dt = displacement(T, BasePoint((), ((mpc(0), mpf(t)),)))
        if t == 1:
            assert abs(dt - mp.acosh(1.5)) < 1e-12
        if prev is not None:
            assert dt < prev
        prev = dt


def test_displacement_dominates_translation_length():
    rng = random.Random(12)
    for amb in (H3, H2xH2):
        x = BasePoint.center(amb.signature)
        for g in _random_elements(amb, rng, 25):
            if g.tau() == 4 or g.is_identity():
                continue
            tl = translation_length(g)
            assert displacement(g, x) >= tl.total - 1e-9
            assert tl.total >= tl.cs_lower - 1e-12
