"""Local norms, Weil heights of algebraic numbers and 2x2 matrices, and bounds on the normalized height."""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Iterable, Sequence

import sympy
from mpmath import mp, mpc, mpf

from .nfield import FieldElement, NumberField, Place
from .polys import RootBall, factor_integer, identify, isolate_roots, primitive, select_factor


def log_plus(x) -> mpf:
    return max(mpf(0), mp.log(x)) if x > 0 else mpf(0)


class MatrixOverK:
    """2x2 matrix ``[[a, b], [c, d]]`` with entries in a number field."""

    __slots__ = ("field", "a", "b", "c", "d", "_key")

    def __init__(self, field: NumberField, entries):
        (a, b), (c, d) = entries
        self.field = field
        self.a, self.b, self.c, self.d = field(a), field(b), field(c), field(d)
        self._key = None

    @classmethod
    def identity(cls, field: NumberField) -> "MatrixOverK":
        return cls(field, [[1, 0], [0, 1]])

    @property
    def entries(self) -> tuple[FieldElement, ...]:
        return (self.a, self.b, self.c, self.d)

    def rows(self):
        return [[self.a, self.b], [self.c, self.d]]

    def det(self) -> FieldElement:
        return self.a * self.d - self.b * self.c

    def trace(self) -> FieldElement:
        return self.a + self.d

    def __mul__(self, o: "MatrixOverK") -> "MatrixOverK":
        if not isinstance(o, MatrixOverK):
            o = self.field(o)
            return MatrixOverK(self.field, [[self.a * o, self.b * o], [self.c * o, self.d * o]])
        return MatrixOverK(
            self.field,
            [
                [self.a * o.a + self.b * o.c, self.a * o.b + self.b * o.d],
                [self.c * o.a + self.d * o.c, self.c * o.b + self.d * o.d],
            ],
        )

    def adj(self) -> "MatrixOverK":
        """Adjugate, equal to ``det * inverse``; projectively the inverse."""
        return MatrixOverK(self.field, [[self.d, -self.b], [-self.c, self.a]])

    def inverse(self) -> "MatrixOverK":
        dt = self.det()
        if dt.is_zero():
            raise ZeroDivisionError("singular matrix")
        return self.adj() * dt.inverse()

    def scale(self, s) -> "MatrixOverK":
        return self * self.field(s)

    def is_scalar(self) -> bool:
        return self.b.is_zero() and self.c.is_zero() and self.a == self.d

    def __eq__(self, o):
        return isinstance(o, MatrixOverK) and self.entries == o.entries

    def __hash__(self):
        return hash(self.entries)

    def sign_key(self):
        """Hashable key identifying the matrix up to sign."""
        if self._key is None:
            e = self.entries
            first = next(x for x in e if not x.is_zero())
            sgn = -1 if next(c for c in first.num if c) < 0 else 1
            self._key = e if sgn > 0 else tuple(-x for x in e)
        return self._key

    def projective_key(self):
        """Key identifying the matrix up to a nonzero scalar of K."""
        e = self.entries
        first = next(x for x in e if not x.is_zero())
        inv = first.inverse()
        return tuple(x * inv for x in e)

    def embed(self, place: Place) -> list[list[mpc]]:
        return [[x.embed(place) for x in r] for r in self.rows()]

    def __repr__(self):
        return f"[[{self.a}, {self.b}], [{self.c}, {self.d}]]"

    def to_json(self):
        return [[x.to_json() for x in r] for r in self.rows()]


def local_norm(A: MatrixOverK, v: Place) -> mpf:
    """Operator norm of A at the place v.

    Archimedean places use the Euclidean vector norm (largest singular value);
    finite places use the sup norm, whose operator norm is the largest entry.
    """
    K = A.field
    if v.kind == "finite":
        best = mpf(0)
        for x in A.entries:
            if x.is_zero():
                continue
            val = K.valuation(x, v)
            best = max(best, mp.exp(-val * v.f * mp.log(v.p) / v.n_v))
        return best
    return sigma_max(A.embed(v))


def sigma_max(M) -> mpf:
    (a, b), (c, d) = M
    fro = abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2
    det = abs(a * d - b * c)
    disc = max(mpf(0), fro * fro - 4 * det * det)
    return mp.sqrt((fro + mp.sqrt(disc)) / 2)


def _log_local_norm(A: MatrixOverK, v: Place) -> mpf:
    """``log ||A||_v`` without exponentiating finite contributions."""
    if v.kind == "finite":
        vals = [A.field.valuation(x, v) for x in A.entries if not x.is_zero()]
        return -min(vals) * v.f * mp.log(v.p) / v.n_v
    return mp.log(sigma_max(A.embed(v)))


def candidate_finite_places(elements: Iterable[FieldElement]) -> list[Place]:
    """Finite places where some element can have absolute value > 1.

    An element with coordinate denominator ``m`` lies in ``(1/m) Z[theta]``,
    so only primes dividing ``m`` can give negative valuations.
    """
    primes = set()
    K = None
    for x in elements:
        K = x.field
        if x.den > 1:
            primes.update(sympy.primefactors(x.den))
    if K is None:
        return []
    out = []
    for p in sorted(primes):
        out.extend(K.places_above(p))
    return out


@dataclass(frozen=True)
class HeightRow:
    place: str
    n_v: int
    log_plus: mpf


@dataclass(frozen=True)
class HeightReport:
    rows: tuple[HeightRow, ...]
    total: mpf
    degree: int

    def reconstruct(self) -> mpf:
        return sum((r.n_v * r.log_plus for r in self.rows), mpf(0)) / self.degree

    def to_json(self) -> dict:
        return {
            "total": float(self.total),
            "degree": self.degree,
            "rows": [
                {"place": r.place, "n_v": r.n_v, "log_plus_norm": float(r.log_plus)} for r in self.rows
            ],
        }


def height_matrix(A: MatrixOverK) -> HeightReport:
    K = A.field
    if A.det().is_zero():
        raise ValueError("height_matrix needs an invertible matrix")
    with mp.workprec(K.precision_bits):
        rows = []
        for v in K.infinite_places:
            rows.append(HeightRow(v.id, v.n_v, max(mpf(0), _log_local_norm(A, v))))
        for v in candidate_finite_places(A.entries):
            lp = max(mpf(0), _log_local_norm(A, v))
            if lp > 0:
                rows.append(HeightRow(v.id, v.n_v, lp))
        total = sum((r.n_v * r.log_plus for r in rows), mpf(0)) / K.degree
    return HeightReport(tuple(rows), total, K.degree)


def height_set(F: Sequence[MatrixOverK]) -> mpf:
    if not F:
        raise ValueError("height_set of an empty set")
    return max(height_matrix(A).total for A in F)


def height_element(x: FieldElement) -> mpf:
    """Weil height of an element of K computed from its places."""
    K = x.field
    if x.is_zero():
        return mpf(0)
    with mp.workprec(K.precision_bits):
        s = mpf(0)
        for v in K.infinite_places:
            s += v.n_v * log_plus(abs(x.embed(v)))
        for v in candidate_finite_places([x]):
            val = K.valuation(x, v)
            if val < 0:
                s += -val * v.f * mp.log(v.p)
        return s / K.degree


class AlgebraicNumber:
    """A root of an irreducible integer polynomial, pinned by a certified disc."""

    def __init__(self, minpoly: Sequence[int], root_index: int, prec: int = 192):
        self.minpoly = primitive(minpoly)
        facs = factor_integer(self.minpoly)
        if len(facs) != 1 or facs[0][1] != 1:
            raise ValueError(f"{list(minpoly)} is not irreducible over Q")
        self.prec = prec
        self.balls: list[RootBall] = isolate_roots(self.minpoly, prec)
        if not 0 <= root_index < len(self.balls):
            raise IndexError("root index out of range")
        self.root_index = root_index

    @classmethod
    def from_minpoly(cls, coeffs: Sequence, approx, prec: int = 192) -> "AlgebraicNumber":
        """The root of ``coeffs`` (possibly reducible) closest to ``approx``."""
        fac, balls, idx = select_factor(coeffs, mpc(approx), prec)
        return cls(fac, idx, prec)

    @classmethod
    def from_element(cls, x: FieldElement, place: Place | None = None) -> "AlgebraicNumber":
        K = x.field
        place = place or K.infinite_places[0]
        with mp.workprec(K.precision_bits + 32):
            z = x.embed(place)
            return cls.from_minpoly(x.minpoly(), z, K.precision_bits)

    @property
    def degree(self) -> int:
        return len(self.minpoly) - 1

    @property
    def value(self) -> mpc:
        return self.balls[self.root_index].center

    @property
    def conjugates(self) -> list[mpc]:
        return [b.center for b in self.balls]

    def inverse(self) -> "AlgebraicNumber":
        if self.minpoly[0] == 0:
            raise ZeroDivisionError("inverse of zero")
        with mp.workprec(self.prec + 32):
            return AlgebraicNumber.from_minpoly(tuple(reversed(self.minpoly)), 1 / self.value, self.prec)

    def power(self, m: int) -> "AlgebraicNumber":
        if m < 0:
            return self.inverse().power(-m)
        if m == 0:
            return AlgebraicNumber((-1, 1), 0, self.prec)
        x, y = sympy.symbols("x y")
        f = sum(c * y ** i for i, c in enumerate(self.minpoly))
        r = sympy.Poly(sympy.resultant(f, x - y ** m, y), x)
        coeffs = [int(c) for c in reversed(r.all_coeffs())]
        with mp.workprec(self.prec + 32):
            return AlgebraicNumber.from_minpoly(coeffs, self.value ** m, self.prec)

    def __repr__(self):
        return f"AlgebraicNumber({list(self.minpoly)}, ~{mp.nstr(self.value, 12)})"


def mahler_log(coeffs: Sequence[int], prec: int = 192) -> mpf:
    """log of the Mahler measure of an integer polynomial."""
    coeffs = primitive(coeffs)
    with mp.workprec(prec):
        s = mp.log(abs(coeffs[-1]))
        for b in isolate_roots(coeffs, prec):
            s += log_plus(abs(b.center))
        return s


def height_algebraic(alpha: AlgebraicNumber) -> mpf:
    """Weil height via the Mahler measure of the minimal polynomial."""
    if alpha.minpoly == (0, 1):
        raise ValueError("height of zero is undefined here")
    with mp.workprec(alpha.prec):
        return mahler_log(alpha.minpoly, alpha.prec) / alpha.degree


# normalized height ----------------------------------------------------------

def eigen_height_avg(W: MatrixOverK) -> mpf:
    """Average Weil height of the two eigenvalues of W.

    Archimedean places contribute ``log+|r1| + log+|r2|`` from the roots of
    the characteristic polynomial; at a finite place the same sum is the log
    of the Gauss norm of ``x^2 - t x + delta``.
    """
    K = W.field
    t, dl = W.trace(), W.det()
    s = mpf(0)
    for v in K.infinite_places:
        tv, dv = t.embed(v), dl.embed(v)
        sq = mp.sqrt(tv * tv - 4 * dv)
        r1, r2 = (tv + sq) / 2, (tv - sq) / 2
        s += v.n_v * (log_plus(abs(r1)) + log_plus(abs(r2)))
    for v in candidate_finite_places([t, dl]):
        worst = 0
        for x in (t, dl):
            if not x.is_zero():
                worst = max(worst, -K.valuation(x, v))
        s += worst * v.f * mp.log(v.p)
    return s / (2 * K.degree)


def _rational_sqrt(q: Fraction) -> Fraction | None:
    if q < 0:
        return None
    a, b = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if a * a == q.numerator and b * b == q.denominator:
        return Fraction(a, b)
    return None


@lru_cache(maxsize=32)
def _sympy_field(minpoly: tuple):
    x = sympy.Symbol("x")
    r = sympy.CRootOf(sum(c * x**i for i, c in enumerate(minpoly)), 0)
    return r, sympy.QQ.algebraic_field(r)


def _anp_to_field(K, a) -> FieldElement:
    cs = a.to_list() if hasattr(a, "to_list") else [a]
    return K([Fraction(int(q.numerator), int(q.denominator)) for q in reversed(cs)] or [0])


def split_eigenvalues(W: MatrixOverK):
    """Both eigenvalues as elements of K, or None when they generate a quadratic extension."""
    K = W.field
    if W.c.is_zero() or W.b.is_zero():
        return W.a, W.d
    t, dl = W.trace(), W.det()
    disc = t * t - 4 * dl
    half = K(Fraction(1, 2))
    if disc.is_zero():
        return t * half, t * half
    if _rational_sqrt(Fraction(disc.norm())) is None:
        return None
    if K.degree == 1:
        s = _rational_sqrt(Fraction(disc.coeffs()[0]))
        if s is None:
            return None
        return (t + K(s)) * half, (t - K(s)) * half
    r, AF = _sympy_field(tuple(K.minpoly))
    y = sympy.Symbol("y")
    expr = lambda e: sum(sympy.Rational(c.numerator, c.denominator) * r**i for i, c in enumerate(e.coeffs()))
    P = sympy.Poly(y**2 - expr(t) * y + expr(dl), y, domain=AF)
    roots = []
    for f, mult in P.factor_list()[1]:
        if f.degree() != 1:
            return None
        lead, c0 = f.rep.to_list()
        lead, c0 = _anp_to_field(K, lead), _anp_to_field(K, c0)
        roots += [-c0 / lead] * mult
    return roots[0], roots[1]


def eigen_height(W: MatrixOverK) -> mpf:
    """Largest Weil height of an eigenvalue of W.

    When the eigenvalues are conjugate over K their heights agree and equal
    the average; otherwise they are computed separately in K.
    """
    sp = split_eigenvalues(W)
    if sp is None:
        return eigen_height_avg(W)
    return max(height_element(x) for x in sp)


@dataclass
class NHeightLevel:
    n: int
    size: int
    complete: bool
    h_set: mpf | None  # h(F^n) when the level is complete
    best_eigen: mpf  # max over the level of eigenvalue height / n

    def to_json(self):
        return {
            "n": self.n,
            "size": self.size,
            "complete": self.complete,
            "h_Fn": None if self.h_set is None else float(self.h_set),
            "h_Fn_over_n": None if self.h_set is None else float(self.h_set / self.n),
            "eigen_lower": float(self.best_eigen),
        }


@dataclass
class NHeightBounds:
    upper: mpf
    lower: mpf
    table: list[NHeightLevel]
    truncated: bool = False
    flags: list[str] = dc_field(default_factory=list)

    def to_json(self):
        return {
            "upper": float(self.upper),
            "lower": float(self.lower),
            "truncated": self.truncated,
            "flags": self.flags,
            "table": [lv.to_json() for lv in self.table],
        }


def power_levels(F: Sequence[MatrixOverK], n_max: int, budget: int):
    """Yield ``(n, words, complete)`` for the sets F^n, deduplicated up to sign."""
    level = {}
    for A in F:
        level.setdefault(A.sign_key(), A)
    words = list(level.values())
    yield 1, words, True
    spent = len(words)
    for n in range(2, n_max + 1):
        nxt = {}
        complete = True
        for W in words:
            for A in F:
                if spent >= budget:
                    complete = False
                    break
                P = W * A
                k = P.sign_key()
                if k not in nxt:
                    nxt[k] = P
                    spent += 1
            if not complete:
                break
        words = list(nxt.values())
        yield n, words, complete
        if not complete:
            return


def nheight_bounds(F: Sequence[MatrixOverK], n_max: int = 8, eig_words: int = 20000) -> NHeightBounds:
    """Rigorous bracket ``lower <= hhat(F) <= upper``.

    ``upper`` is the least ``h(F^n)/n`` over fully enumerated levels (valid
    by subadditivity); ``lower`` is the best eigenvalue height ``h(lambda(W))/n``
    over all enumerated words.
    """
    if not F:
        raise ValueError("F must be nonempty")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    for A in F:
        if A.det().is_zero():
            raise ValueError("F must consist of invertible matrices")
    K = F[0].field
    table = []
    upper = None
    lower = mpf(0)
    truncated = False
    with mp.workprec(K.precision_bits):
        for n, words, complete in power_levels(F, n_max, eig_words):
            hs = None
            if complete:
                hs = max(height_matrix(W).total for W in words)
                cand = hs / n
                upper = cand if upper is None else min(upper, cand)
            best = max((eigen_height(W) for W in words), default=mpf(0)) / n
            lower = max(lower, best)
            table.append(NHeightLevel(n, len(words), complete, hs, best))
            if not complete:
                truncated = True
    flags = ["budget-truncated"] if truncated else []
    return NHeightBounds(upper, lower, table, truncated, flags)
