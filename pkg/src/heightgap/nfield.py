"""Number fields K = Q[x]/(f) with exact arithmetic, places, valuations and zeta_K(2)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np
import sympy
from mpmath import mp, mpc, mpf
from sympy.polys.domains import ZZ
from sympy.polys import galoistools as gf

from .polys import (
    CInterval,
    RootBall,
    RootIsolationError,
    factor_integer,
    isolate_roots,
    ivprec,
    primitive,
    to_iv,
    to_sympy,
)


class ReducibleError(ValueError):
    """Raised when the defining polynomial factors; ``witness`` is a proper factor."""

    def __init__(self, poly, witness):
        super().__init__(f"polynomial {list(poly)} is reducible: factor {list(witness)}")
        self.witness = tuple(witness)


class PrecisionError(ArithmeticError):
    pass


class UnsupportedPrimeError(ValueError):
    pass


class InfiniteValuationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Place:
    kind: str  # "real", "complex" or "finite"
    index: int
    n_v: int
    p: int = 0
    f: int = 0
    e: int = 0
    factor: tuple = ()  # monic lift of the residue factor of the order generator

    @property
    def norm(self) -> int:
        return self.p ** self.f if self.kind == "finite" else 0

    @property
    def is_archimedean(self) -> bool:
        return self.kind != "finite"

    @property
    def id(self) -> str:
        if self.kind == "real":
            return f"real{self.index}"
        if self.kind == "complex":
            return f"complex{self.index}"
        return f"p{self.p}.{self.index}"


def _squarefree_part(n: int) -> tuple[int, int]:
    """Write ``n = s^2 * n0`` with ``n0`` squarefree; returns ``(n0, s)``."""
    sign = -1 if n < 0 else 1
    n0, s = 1, 1
    for q, k in sympy.factorint(abs(n)).items():
        s *= q ** (k // 2)
        if k % 2:
            n0 *= q
    return sign * n0, s


def _mod_list(coeffs_low: Sequence[int], p: int) -> list:
    hi = [c % p for c in reversed(coeffs_low)]
    return gf.gf_strip(hi)


def _lift(hi: list) -> tuple[int, ...]:
    return tuple(int(c) for c in reversed(hi))


class NumberField:
    """K = Q(theta) with theta a root of the monic integer polynomial ``minpoly``.

    >>> K = NumberField([1, 0, 1])
    >>> K.degree, K.r1, K.r2, K.disc
    (2, 0, 1, -4)
    """

    def __init__(self, minpoly: Sequence[int], precision_bits: int = 192):
        mp_ = tuple(int(c) for c in minpoly)
        if any(Fraction(c) != int(c) for c in minpoly):
            raise ValueError("minpoly must have integer coefficients")
        while len(mp_) > 1 and mp_[-1] == 0:
            mp_ = mp_[:-1]
        if len(mp_) < 2:
            raise ValueError("minpoly must have degree >= 1")
        if mp_[-1] != 1:
            raise ValueError("minpoly must be monic")
        self.minpoly = mp_
        self.degree = len(mp_) - 1
        self.precision_bits = int(precision_bits)
        if self.degree > 1:
            facs = factor_integer(mp_)
            if len(facs) != 1 or facs[0][1] != 1:
                raise ReducibleError(mp_, facs[0][0])
        try:
            balls = isolate_roots(mp_, self.precision_bits)
        except RootIsolationError as exc:
            raise PrecisionError(str(exc)) from exc
        self.real_roots = [b for b in balls if b.is_real]
        self.complex_roots = [b for b in balls if not b.is_real and b.center.imag > 0]
        self.r1 = len(self.real_roots)
        self.r2 = len(self.complex_roots)
        assert self.r1 + 2 * self.r2 == self.degree
        self._setup_discriminant()
        # theta^k reduced, k < 2d - 1, as integer coordinate vectors
        d = self.degree
        table = []
        for k in range(2 * d - 1):
            if k < d:
                v = [0] * d
                v[k] = 1
            else:
                prev = table[-1]
                top = prev[-1]
                v = [0] + prev[:-1]
                for i in range(d):
                    v[i] -= top * mp_[i]
            table.append(v)
        self._powers = table

    def _setup_discriminant(self):
        d = self.degree
        if d == 1:
            self.disc, self.disc_exact = 1, True
            self._omega = None
            self._omega_poly = (-self.minpoly[0], 1)
            return
        if d == 2:
            c0, c1 = self.minpoly[0], self.minpoly[1]
            D = c1 * c1 - 4 * c0
            D0, s = _squarefree_part(D)
            if D0 % 4 == 1:
                self.disc = D0
                # omega = (1 + sqrt(D0))/2 with sqrt(D0) = (2 theta + c1)/s
                self._omega = (Fraction(1, 2) + Fraction(c1, 2 * s), Fraction(1, s))
                self._omega_poly = ((1 - D0) // 4, -1, 1)
            else:
                self.disc = 4 * D0
                self._omega = (Fraction(c1, s), Fraction(2, s))
                self._omega_poly = (-D0, 0, 1)
            self.disc_exact = True
            self.squarefree_d = D0
            return
        self.disc = abs(int(sympy.discriminant(to_sympy(self.minpoly))))
        self.disc_exact = False
        self._omega = None
        self._omega_poly = self.minpoly

    @property
    def flags(self) -> list[str]:
        return [] if self.disc_exact else ["order-discriminant, may exceed field discriminant"]

    def __reduce__(self):
        return (NumberField, (self.minpoly, self.precision_bits))

    def __eq__(self, other):
        return isinstance(other, NumberField) and other.minpoly == self.minpoly

    def __hash__(self):
        return hash(self.minpoly)

    def __repr__(self):
        return f"NumberField({list(self.minpoly)})"

    # elements -----------------------------------------------------------
    def __call__(self, value) -> "FieldElement":
        if isinstance(value, FieldElement):
            if value.field != self:
                raise ValueError("element belongs to another field")
            return value
        if isinstance(value, (int, Fraction)):
            fr = Fraction(value)
            return FieldElement._make(self, (fr.numerator,) + (0,) * (self.degree - 1), fr.denominator)
        if isinstance(value, str):
            fr = Fraction(value)
            return self(fr)
        coeffs = [Fraction(c) for c in value]
        if len(coeffs) > self.degree:
            return self.from_poly(coeffs)
        coeffs += [Fraction(0)] * (self.degree - len(coeffs))
        return FieldElement.from_fractions(self, coeffs)

    def from_poly(self, coeffs: Sequence) -> "FieldElement":
        """Element ``sum c_k theta^k`` for an arbitrary-length coefficient list."""
        acc = self.zero
        t = self.one
        th = self.gen
        for c in coeffs:
            if c:
                acc = acc + t * self(Fraction(c))
            t = t * th
        return acc

    @cached_property
    def gen(self) -> "FieldElement":
        if self.degree == 1:
            return self(-self.minpoly[0])
        return self([0, 1])

    @cached_property
    def zero(self) -> "FieldElement":
        return self(0)

    @cached_property
    def one(self) -> "FieldElement":
        return self(1)

    @cached_property
    def omega(self) -> "FieldElement":
        """Generator of the order used for finite-place computations."""
        if self.degree == 2:
            return self(list(self._omega))
        return self.gen

    def _omega_coords(self, x: "FieldElement") -> list[Fraction]:
        c = x.coeffs()
        if self.degree != 2:
            return c
        r0, r1 = self._omega
        # x = a + b theta, theta = (omega - r0)/r1
        a, b = c
        return [a - b * r0 / r1, b / r1]

    # archimedean data -----------------------------------------------------
    @cached_property
    def infinite_places(self) -> list[Place]:
        out = [Place("real", i, 1) for i in range(self.r1)]
        out += [Place("complex", i, 2) for i in range(self.r2)]
        return out

    def root_ball(self, place: Place) -> RootBall:
        if place.kind == "real":
            return self.real_roots[place.index]
        if place.kind == "complex":
            return self.complex_roots[place.index]
        raise ValueError("finite place has no root ball")

    # finite places --------------------------------------------------------
    @lru_cache(maxsize=None)
    def places_above(self, p: int) -> tuple[Place, ...]:
        p = int(p)
        if p < 2 or not sympy.isprime(p):
            raise ValueError(f"{p} is not a rational prime")
        if self.degree == 1:
            return (Place("finite", 0, 1, p, 1, 1, (0, 1)),)
        f = self._omega_poly
        fl = _mod_list(f, p)
        _, facs = gf.gf_factor(fl, p, ZZ)
        if self.degree > 2:
            self._check_dedekind(f, facs, p)
        out = []
        for i, (g, e) in enumerate(sorted(facs, key=lambda t: (len(t[0]), t[0]))):
            deg = len(g) - 1
            out.append(Place("finite", i, e * deg, p, deg, e, _lift(g)))
        assert sum(pl.e * pl.f for pl in out) == self.degree
        return tuple(out)

    def _check_dedekind(self, f, facs, p):
        disc = int(sympy.discriminant(to_sympy(f)))
        if disc % (p * p):
            return
        g = [1]
        h = [1]
        for gi, e in facs:
            g = gf.gf_mul(g, gi, p, ZZ)
            for _ in range(e - 1):
                h = gf.gf_mul(h, gi, p, ZZ)
        gz = sympy.Poly(list(g), sympy.Symbol("x"))
        hz = sympy.Poly(list(h), sympy.Symbol("x"))
        fz = sympy.Poly(list(reversed(f)), sympy.Symbol("x"))
        F = (fz - gz * hz)
        Fc = [int(c) // p for c in F.all_coeffs()]
        Fm = gf.gf_strip([c % p for c in Fc])
        common = gf.gf_gcd(gf.gf_gcd(Fm, g, p, ZZ), h, p, ZZ)
        if len(common) > 1:
            raise UnsupportedPrimeError(
                f"Z[theta] is not {p}-maximal for {list(self.minpoly)}; prime unsupported"
            )

    @lru_cache(maxsize=None)
    def _uniformizer_cofactor(self, place: Place) -> "FieldElement":
        """Element b with v_P(b) = e - 1 and v_Q(b) >= e_Q for the other Q above p."""
        p = place.p
        fl = _mod_list(self._omega_poly, p)
        g = [c % p for c in reversed(place.factor)]
        q, r = gf.gf_div(fl, g, p, ZZ)
        assert not gf.gf_strip(r)
        coeffs = _lift(q)
        w = self.omega
        acc = self.zero
        t = self.one
        for c in coeffs:
            if c:
                acc = acc + t * self(c)
            t = t * w
        return acc

    def valuation(self, x: "FieldElement", place: Place) -> int:
        """Exact P-adic valuation."""
        if place.kind != "finite":
            raise ValueError("valuation needs a finite place")
        x = self(x)
        if x.is_zero():
            raise InfiniteValuationError("valuation of zero is infinite")
        p = place.p
        if self.degree == 1:
            fr = x.coeffs()[0]
            return _vp(fr.numerator, p) - _vp(fr.denominator, p)
        self.places_above(p)  # validates support at p
        oc = self._omega_coords(x)
        m = 1
        for c in oc:
            m = m * c.denominator // math.gcd(m, c.denominator)
        a = x * self(m)
        beta = self._uniformizer_cofactor(place)
        v = 0
        bound = sum(_vp(c.numerator, p) for c in self._omega_coords(a) if c) + 64
        while True:
            t = a * beta
            tc = self._omega_coords(t)
            if all(c.denominator == 1 and c.numerator % p == 0 for c in tc):
                a = t * self(Fraction(1, p))
                v += 1
                if v > bound * self.degree + 64:
                    raise ArithmeticError("valuation loop did not terminate")
            else:
                break
        return v - place.e * _vp(m, p)

    def finite_support(self, x: "FieldElement") -> list[Place]:
        """Finite places where ``x`` has nonzero valuation."""
        if x.is_zero():
            raise InfiniteValuationError("zero has infinite support")
        primes = set()
        den = x.den
        for q in sympy.primefactors(den):
            primes.add(q)
        n = x.norm()
        for q in sympy.primefactors(n.numerator):
            primes.add(q)
        for q in sympy.primefactors(n.denominator):
            primes.add(q)
        out = []
        for q in sorted(primes):
            for pl in self.places_above(q):
                if self.valuation(x, pl) != 0:
                    out.append(pl)
        return out

    def log_abs(self, x: "FieldElement", place: Place) -> mpf:
        """``n_v * log|x|_v``, normalized so the product formula holds."""
        if place.kind == "finite":
            v = self.valuation(x, place)
            return -v * place.f * mp.log(place.p)
        z = x.embed(place)
        return place.n_v * mp.log(abs(z))

    def random_element(self, rng, height: int = 20, den: int = 10) -> "FieldElement":
        while True:
            cs = [Fraction(rng.randint(-height, height), rng.randint(1, den)) for _ in range(self.degree)]
            x = FieldElement.from_fractions(self, cs)
            if not x.is_zero():
                return x

    def to_json(self) -> dict:
        return {"minpoly": list(self.minpoly), "precision_bits": self.precision_bits}


def _vp(n: int, p: int) -> int:
    n = abs(int(n))
    if n == 0:
        raise InfiniteValuationError("valuation of zero")
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


class FieldElement:
    """Element of K stored as ``(num_0 + num_1 theta + ...)/den`` with integers."""

    __slots__ = ("field", "num", "den", "_hash")

    @classmethod
    def _make(cls, field: NumberField, num: Sequence[int], den: int) -> "FieldElement":
        if den == 0:
            raise ZeroDivisionError("zero denominator")
        if den < 0:
            num = [-c for c in num]
            den = -den
        g = den
        for c in num:
            g = math.gcd(g, c)
        if g > 1:
            num = [c // g for c in num]
            den //= g
        obj = object.__new__(cls)
        obj.field = field
        obj.num = tuple(num)
        obj.den = den
        obj._hash = None
        return obj

    @classmethod
    def from_fractions(cls, field: NumberField, coeffs: Sequence[Fraction]) -> "FieldElement":
        den = 1
        for c in coeffs:
            den = den * c.denominator // math.gcd(den, c.denominator)
        return cls._make(field, [int(c * den) for c in coeffs], den)

    def coeffs(self) -> list[Fraction]:
        return [Fraction(c, self.den) for c in self.num]

    def is_zero(self) -> bool:
        return not any(self.num)

    def is_rational(self) -> bool:
        return not any(self.num[1:])

    def _coerce(self, o) -> "FieldElement":
        if isinstance(o, FieldElement):
            if o.field is not self.field and o.field != self.field:
                raise ValueError("mixed fields")
            return o
        return self.field(o)

    def __add__(self, o):
        try:
            o = self._coerce(o)
        except (TypeError, ValueError):
            return NotImplemented
        num = [a * o.den + b * self.den for a, b in zip(self.num, o.num)]
        return FieldElement._make(self.field, num, self.den * o.den)

    __radd__ = __add__

    def __neg__(self):
        return FieldElement._make(self.field, [-c for c in self.num], self.den)

    def __sub__(self, o):
        try:
            o = self._coerce(o)
        except (TypeError, ValueError):
            return NotImplemented
        return self + (-o)

    def __rsub__(self, o):
        return self._coerce(o) - self

    def __mul__(self, o):
        try:
            o = self._coerce(o)
        except (TypeError, ValueError):
            return NotImplemented
        d = self.field.degree
        if d == 1:
            return FieldElement._make(self.field, [self.num[0] * o.num[0]], self.den * o.den)
        prod = [0] * (2 * d - 1)
        for i, a in enumerate(self.num):
            if a:
                for j, b in enumerate(o.num):
                    if b:
                        prod[i + j] += a * b
        out = prod[:d]
        table = self.field._powers
        for k in range(d, 2 * d - 1):
            c = prod[k]
            if c:
                row = table[k]
                for i in range(d):
                    out[i] += c * row[i]
        return FieldElement._make(self.field, out, self.den * o.den)

    __rmul__ = __mul__

    def inverse(self) -> "FieldElement":
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero")
        K = self.field
        if K.degree == 1:
            return K(Fraction(self.den, self.num[0]))
        if K.degree == 2:
            a, b = self.coeffs()
            c1 = K.minpoly[1]
            conj = FieldElement.from_fractions(K, [a - b * c1, -b])
            return conj * K(Fraction(1) / self.norm())
        x = sympy.Symbol("x")
        g = sympy.Poly(list(reversed([sympy.Rational(c.numerator, c.denominator) for c in self.coeffs()])), x)
        inv = sympy.invert(g, to_sympy(K.minpoly), domain=sympy.QQ)
        inv = sympy.Poly(inv, x)
        cs = [Fraction(int(sympy.fraction(c)[0]), int(sympy.fraction(c)[1])) for c in reversed(inv.all_coeffs())]
        return K.from_poly(cs)

    def __truediv__(self, o):
        try:
            o = self._coerce(o)
        except (TypeError, ValueError):
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, o):
        return self._coerce(o) * self.inverse()

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        acc = self.field.one
        base = self
        while n:
            if n & 1:
                acc = acc * base
            base = base * base
            n >>= 1
        return acc

    def __eq__(self, o):
        if isinstance(o, (int, Fraction)):
            o = self.field(o)
        if not isinstance(o, FieldElement):
            return NotImplemented
        return self.field == o.field and self.num == o.num and self.den == o.den

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.field.minpoly, self.num, self.den))
        return self._hash

    def __repr__(self):
        cs = self.coeffs()
        if self.field.degree == 1 or self.is_rational():
            return str(cs[0])
        return "(" + " + ".join(f"{c}*t^{i}" if i else str(c) for i, c in enumerate(cs) if c) + ")"

    # invariants -----------------------------------------------------------
    def norm(self) -> Fraction:
        K = self.field
        cs = self.coeffs()
        if K.degree == 1:
            return cs[0]
        if K.degree == 2:
            a, b = cs
            c0, c1 = K.minpoly[0], K.minpoly[1]
            return a * a - c1 * a * b + c0 * b * b
        return _sym_to_frac(sympy.resultant(to_sympy(K.minpoly), _poly_of(cs)))

    def trace(self) -> Fraction:
        K = self.field
        cs = self.coeffs()
        if K.degree == 1:
            return cs[0]
        if K.degree == 2:
            a, b = cs
            return 2 * a - K.minpoly[1] * b
        cp = self.charpoly()
        return -cp[-2]

    def charpoly(self) -> tuple[Fraction, ...]:
        """Characteristic polynomial over Q (low-to-high, monic)."""
        K = self.field
        cs = self.coeffs()
        if K.degree == 1:
            return (-cs[0], Fraction(1))
        if K.degree == 2:
            return (self.norm(), -self.trace(), Fraction(1))
        y, z = sympy.symbols("y z")
        f = sympy.Poly(list(reversed(K.minpoly)), y)
        g = sum(sympy.Rational(c.numerator, c.denominator) * y ** i for i, c in enumerate(cs))
        r = sympy.Poly(sympy.resultant(f.as_expr(), z - g, y), z)
        out = [_sym_to_frac(c) for c in reversed(r.all_coeffs())]
        lead = out[-1]
        return tuple(c / lead for c in out)

    def minpoly(self) -> tuple[int, ...]:
        """Primitive integer minimal polynomial over Q (low-to-high)."""
        cp = primitive(self.charpoly())
        facs = factor_integer(cp)
        assert len(facs) == 1
        return facs[0][0]

    def degree(self) -> int:
        return len(self.minpoly()) - 1

    def embed(self, place: Place) -> mpc:
        """Image under the embedding attached to an archimedean place."""
        z = self.field.root_ball(place).center
        acc = mpc(0)
        for c in reversed(self.num):
            acc = acc * z + c
        return acc / self.den

    def embed_iv(self, place: Place) -> CInterval:
        box = self.field.root_ball(place).box()
        acc = CInterval(0, 0)
        with ivprec(self.field.precision_bits + 32):
            for c in reversed(self.num):
                acc = acc * box + CInterval(to_iv(c), 0)
            return acc / CInterval(to_iv(self.den), 0)

    def conj_embed(self, z) -> mpc:
        acc = mpc(0)
        for c in reversed(self.num):
            acc = acc * z + c
        return acc / self.den

    def to_json(self) -> list[str]:
        return [str(c) for c in self.coeffs()]


def _poly_of(cs):
    x = sympy.Symbol("x")
    return sympy.Poly(list(reversed([sympy.Rational(c.numerator, c.denominator) for c in cs])), x)


def _sym_to_frac(c) -> Fraction:
    r = sympy.Rational(c)
    return Fraction(int(r.p), int(r.q))


def make_field(minpoly: Sequence[int], precision: int = 192) -> NumberField:
    return NumberField(minpoly, precision)


def kronecker(D: int, p: int) -> int:
    """Kronecker symbol (D/p) for a prime p."""
    if p == 2:
        return 0 if D % 2 == 0 else (1 if D % 8 in (1, 7) else -1)
    r = pow(D % p, (p - 1) // 2, p)
    return -1 if r == p - 1 else r


@dataclass(frozen=True)
class ZetaValue:
    value: mpf  # truncated Euler product, a lower bound
    upper: mpf  # value times the rigorous tail bound
    prime_bound: int

    @property
    def interval(self) -> tuple[mpf, mpf]:
        return (self.value, self.upper)

    @property
    def error(self) -> mpf:
        return self.upper - self.value


def zeta_tail_log_bound(bound: int, degree: int) -> mpf:
    """Upper bound for log of the Euler-product tail over primes > bound."""
    B = mpf(bound)
    telescoped = mp.log((B + 1) / B)
    if bound >= 2:
        # pi(x) < 1.25506 x / log x (Rosser-Schoenfeld) gives sum_{p>B} p^-2 < 2.51012/(B log B)
        chebyshev = mpf("2.51012") / (B * mp.log(B)) / (1 - 1 / (B * B))
        telescoped = min(telescoped, chebyshev)
    return degree * telescoped


def primes_upto(n: int) -> np.ndarray:
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    for q in range(2, math.isqrt(n) + 1):
        if sieve[q]:
            sieve[q * q :: q] = False
    return np.nonzero(sieve)[0]


def _local_norms(field: NumberField, p: int) -> list[int]:
    if field.degree == 1:
        return [p]
    if field.degree == 2:
        chi = kronecker(field.disc, p)
        return [p, p] if chi == 1 else ([p * p] if chi == -1 else [p])
    return [pl.norm for pl in field.places_above(p)]


def zeta2(field: NumberField, prime_bound: int) -> ZetaValue:
    """Dedekind zeta value zeta_K(2) as a truncated Euler product with a rigorous tail.

    The log of the truncated product is summed in double precision; the
    reported interval is widened by a bound on the accumulated rounding.
    """
    if prime_bound < 2:
        raise ValueError("prime_bound must be at least 2")
    terms = []
    for p in primes_upto(int(prime_bound)).tolist():
        for q in _local_norms(field, p):
            terms.append(-math.log1p(-1.0 / (float(q) * q)))
    logsum = math.fsum(terms)
    with mp.workprec(field.precision_bits + 32):
        rounding = mpf(len(terms) + 16) * mpf(2) ** -52 * max(logsum, 1e-300) + mpf(2) ** -60
        tail = zeta_tail_log_bound(prime_bound, field.degree)
        value = mp.exp(mpf(logsum) - rounding)
        upper = mp.exp(mpf(logsum) + rounding + tail)
    return ZetaValue(+value, +upper, prime_bound)
