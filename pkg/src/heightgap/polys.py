"""Integer polynomial utilities: certified root balls and exact invariants.

Coefficient lists are always low-to-high (``[c0, c1, ..., cn]``).
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import gcd
from typing import Sequence

import sympy
from mpmath import iv, mp, mpc, mpf

_X = sympy.Symbol("x")


class RootIsolationError(ArithmeticError):
    """Root balls could not be separated at the requested precision."""


@contextmanager
def ivprec(bits: int):
    old = iv.prec
    iv.prec = bits
    try:
        yield
    finally:
        iv.prec = old


def to_iv(x) -> "iv.mpf":
    """Enclose an int, Fraction or mpf in an interval."""
    if isinstance(x, Fraction):
        return iv.mpf(x.numerator) / iv.mpf(x.denominator)
    if isinstance(x, int):
        return iv.mpf(x)
    return iv.mpf(x)


class CInterval:
    """Rectangular complex interval built from two real ``iv.mpf`` intervals."""

    __slots__ = ("re", "im")

    def __init__(self, re, im=0):
        self.re = re if isinstance(re, type(iv.mpf(0))) else to_iv(re)
        self.im = im if isinstance(im, type(iv.mpf(0))) else to_iv(im)

    def __add__(self, o):
        o = _cI(o)
        return CInterval(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, o):
        o = _cI(o)
        return CInterval(self.re - o.re, self.im - o.im)

    def __rsub__(self, o):
        return _cI(o) - self

    def __neg__(self):
        return CInterval(-self.re, -self.im)

    def __mul__(self, o):
        o = _cI(o)
        return CInterval(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def abs2(self):
        return self.re ** 2 + self.im ** 2

    def conj(self):
        return CInterval(self.re, -self.im)

    def __truediv__(self, o):
        o = _cI(o)
        n = o.abs2()
        p = self * o.conj()
        return CInterval(p.re / n, p.im / n)

    def contains_zero(self) -> bool:
        return 0 in self.re and 0 in self.im

    def __repr__(self):
        return f"CInterval({self.re}, {self.im})"


def _cI(o) -> CInterval:
    return o if isinstance(o, CInterval) else CInterval(o, 0)


@dataclass(frozen=True)
class RootBall:
    """A disc ``|z - center| <= radius`` holding exactly one root."""

    center: mpc
    radius: mpf
    is_real: bool

    def contains(self, z, slack=0) -> bool:
        return abs(mpc(z) - self.center) <= self.radius + slack

    def box(self) -> CInterval:
        r = iv.mpf([-self.radius, self.radius])
        re = iv.mpf(self.center.real) + r
        im = iv.mpf(0) if self.is_real else iv.mpf(self.center.imag) + r
        return CInterval(re, im)


def horner_iv(coeffs: Sequence, z: CInterval) -> CInterval:
    acc = CInterval(0, 0)
    for c in reversed(coeffs):
        acc = acc * z + CInterval(to_iv(c), 0)
    return acc


def _weierstrass_radius(coeffs, approx, i, n):
    zi = CInterval(approx[i].real, approx[i].imag)
    num = horner_iv(coeffs, zi)
    den = CInterval(to_iv(coeffs[-1]), 0)
    for j, zj in enumerate(approx):
        if j != i:
            den = den * (zi - CInterval(zj.real, zj.imag))
    if den.contains_zero():
        raise RootIsolationError("coincident root approximations")
    w = num / den
    return (n * iv.sqrt(w.abs2())).b


def isolate_roots(coeffs: Sequence[int], prec: int = 192) -> list[RootBall]:
    """Certified isolating discs for a squarefree polynomial with rational coefficients.

    Uses the Weierstrass inclusion theorem: if the discs of radius
    ``n*|W_i|`` around the approximations are pairwise disjoint, each holds
    exactly one root. All radii are computed in interval arithmetic.
    """
    coeffs = [Fraction(c) for c in coeffs]
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    n = len(coeffs) - 1
    if n < 1:
        return []
    work = prec + 32
    if n == 1:
        with mp.workprec(work):
            r = Fraction(-coeffs[0], coeffs[1])
            c = mpf(r.numerator) / r.denominator
            rad = abs(c) * mpf(2) ** (-work + 2) + mpf(2) ** (-work)
            return [RootBall(mpc(c), rad, True)]
    with mp.workprec(work):
        hi = [mpf(c.numerator) / c.denominator for c in reversed(coeffs)]
        try:
            raw = mp.polyroots(hi, maxsteps=400, extraprec=2 * work)
        except mp.NoConvergence as exc:
            raise RootIsolationError(str(exc)) from exc
        snap = mpf(2) ** (-(prec // 2))
        uppers, reals = [], []
        for z in raw:
            z = mpc(z)
            if abs(z.imag) <= snap * max(1, abs(z)):
                reals.append(mpc(z.real, 0))
            elif z.imag > 0:
                uppers.append(z)
        if 2 * len(uppers) + len(reals) != n:
            raise RootIsolationError("conjugate pairing failed")
        reals.sort(key=lambda z: z.real)
        uppers.sort(key=lambda z: (z.real, z.imag))
        approx = reals + uppers + [u.conjugate() for u in uppers]
        with ivprec(work):
            radii = [_weierstrass_radius(coeffs, approx, i, n) for i in range(n)]
        radii = [mpf(r) for r in radii]
        for i in range(n):
            for j in range(i + 1, n):
                if abs(approx[i] - approx[j]) <= radii[i] + radii[j]:
                    raise RootIsolationError(f"root discs overlap at {prec} bits")
        balls = [
            RootBall(approx[i], radii[i], i < len(reals)) for i in range(n)
        ]
    return balls


def identify(balls: Sequence[RootBall], z, err=0) -> int | None:
    """Index of the unique ball that can contain ``z`` (known to ``err``)."""
    hits = [i for i, b in enumerate(balls) if b.contains(z, err)]
    return hits[0] if len(hits) == 1 else None


def primitive(coeffs: Sequence) -> tuple[int, ...]:
    """Primitive integer multiple with positive leading coefficient."""
    fr = [Fraction(c) for c in coeffs]
    den = 1
    for c in fr:
        den = den * c.denominator // gcd(den, c.denominator)
    ints = [int(c * den) for c in fr]
    g = 0
    for c in ints:
        g = gcd(g, c)
    if g == 0:
        raise ValueError("zero polynomial")
    ints = [c // g for c in ints]
    while ints and ints[-1] == 0:
        ints.pop()
    if ints[-1] < 0:
        ints = [-c for c in ints]
    return tuple(ints)


def to_sympy(coeffs: Sequence) -> sympy.Poly:
    return sympy.Poly([sympy.Rational(Fraction(c).numerator, Fraction(c).denominator)
                       for c in reversed(coeffs)], _X)


def from_sympy(p: sympy.Poly) -> tuple:
    return tuple(reversed([Fraction(int(sympy.fraction(c)[0]), int(sympy.fraction(c)[1]))
                           for c in p.all_coeffs()]))


@lru_cache(maxsize=4096)
def factor_integer(coeffs: tuple[int, ...]) -> tuple[tuple[tuple[int, ...], int], ...]:
    """Irreducible factors over Z (primitive, positive leading) with multiplicities."""
    _, facs = sympy.factor_list(to_sympy(coeffs))
    out = []
    for f, m in facs:
        cs = primitive(from_sympy(f))
        if len(cs) > 1:
            out.append((cs, m))
    return tuple(out)


def discriminant(coeffs: Sequence[int]) -> int:
    return int(sympy.discriminant(to_sympy(coeffs)))


def is_reciprocal(coeffs: Sequence[int]) -> bool:
    """True when ``x^d p(1/x) = +-p(x)``."""
    rev = list(reversed(coeffs))
    return list(coeffs) == rev or list(coeffs) == [-c for c in rev]


def compose_square(coeffs: Sequence) -> tuple:
    """Coefficients of ``p(x^2)``."""
    out = [0] * (2 * len(coeffs) - 1)
    for k, c in enumerate(coeffs):
        out[2 * k] = c
    return tuple(out)


def reciprocal_lift(coeffs: Sequence, shift: int = 0) -> tuple:
    """Coefficients of ``x^D * p(x + 1/x + shift)`` with ``D = deg p``.

    With ``shift=0`` the roots are the ``a`` with ``a + 1/a`` a root of ``p``.
    """
    D = len(coeffs) - 1
    x = sympy.Symbol("x")
    expr = sum(sympy.Rational(Fraction(c).numerator, Fraction(c).denominator)
               * (x * x + 1 + shift * x) ** k * x ** (D - k)
               for k, c in enumerate(coeffs))
    return from_sympy(sympy.Poly(sympy.expand(expr), x))


def select_factor(coeffs: Sequence, z, prec: int = 192, err=None):
    """Irreducible factor of ``coeffs`` having the root nearest to ``z``.

    Returns ``(factor, balls, index)`` where ``balls`` isolate the factor's
    roots and ``balls[index]`` is the nearest one. The choice must be
    unambiguous: the runner-up has to be farther away by more than ``err``
    plus both radii (``err`` defaults to ``2^(-prec/2)``).
    """
    if err is None:
        err = mpf(2) ** (-(prec // 2))
    z = mpc(z)
    cands = []
    for fac, _ in factor_integer(primitive(coeffs)):
        balls = isolate_roots(fac, prec)
        for i, b in enumerate(balls):
            cands.append((abs(b.center - z), b.radius, fac, balls, i))
    if not cands:
        raise RootIsolationError("polynomial has no roots")
    cands.sort(key=lambda t: t[0])
    best = cands[0]
    if len(cands) > 1:
        second = cands[1]
        if second[0] - best[0] <= 2 * err + best[1] + second[1]:
            raise RootIsolationError("could not single out the root nearest to the point")
    return best[2], best[3], best[4]
