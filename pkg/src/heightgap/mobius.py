"""Elements of PGL2(R)^a x PGL2(C)^b given by matrices over a number field k.

The real factors are the designated split real places of k, the complex
factors are all complex places. Classification, eigenvalues, the Lorentz
embeddings, genericity, translation lengths and displacements live here.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import lru_cache
from math import isqrt
from typing import Sequence

from mpmath import iv, mp, mpc, mpf

from .heights import AlgebraicNumber, MatrixOverK
from .nfield import FieldElement, NumberField, Place
from .polys import (
    CInterval,
    RootIsolationError,
    compose_square,
    factor_integer,
    identify,
    isolate_roots,
    ivprec,
    primitive,
    select_factor,
    to_iv,
)

MAX_BITS = 4096

ELLIPTIC, PARABOLIC, HYPERBOLIC, LOXODROMIC, IDENTITY = (
    "elliptic",
    "parabolic",
    "hyperbolic",
    "loxodromic",
    "identity",
)
INDETERMINATE = "indeterminate"


class DegenerateEigenvalueError(ValueError):
    pass


@dataclass(frozen=True)
class GroupSignature:
    a: int
    b: int

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.a + self.b < 1:
            raise ValueError("need a + b >= 1")

    @property
    def dim(self) -> int:
        return 3 * self.a + 4 * self.b


class Ambient:
    """The product group attached to a field and a choice of split real places."""

    def __init__(self, field: NumberField, split_real_places: Sequence[int] = ()):
        idx = sorted(set(int(i) for i in split_real_places))
        if len(idx) != len(list(split_real_places)):
            raise ValueError("split real place listed twice")
        for i in idx:
            if not 0 <= i < field.r1:
                raise ValueError(f"real place {i} does not exist (r1 = {field.r1})")
        self.field = field
        self.split_real_places = tuple(idx)
        self.factors: list[Place] = [field.infinite_places[i] for i in idx] + [
            p for p in field.infinite_places if p.kind == "complex"
        ]
        self.signature = GroupSignature(len(idx), field.r2)

    def __eq__(self, o):
        return isinstance(o, Ambient) and o.field == self.field and o.split_real_places == self.split_real_places

    def __hash__(self):
        return hash((self.field, self.split_real_places))

    def element(self, rows) -> "GElement":
        return GElement(self, MatrixOverK(self.field, rows) if not isinstance(rows, MatrixOverK) else rows)

    def identity(self) -> "GElement":
        return self.element([[1, 0], [0, 1]])


def _rational_sqrt(q: Fraction) -> Fraction | None:
    if q <= 0:
        return None
    n, d = q.numerator, q.denominator
    rn, rd = isqrt(n), isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


class GElement:
    """A projective class represented by a matrix over k."""

    __slots__ = ("ambient", "matrix", "normalized")

    def __init__(self, ambient: Ambient, matrix: MatrixOverK):
        if matrix.det().is_zero():
            raise ValueError("singular matrix")
        self.ambient = ambient
        dt = matrix.det()
        self.normalized = False
        if dt.is_rational():
            r = _rational_sqrt(abs(dt.coeffs()[0]))
            if r is not None:
                if r != 1:
                    matrix = matrix.scale(1 / r)
                self.normalized = True
        self.matrix = matrix

    @property
    def field(self) -> NumberField:
        return self.ambient.field

    def __mul__(self, o: "GElement") -> "GElement":
        return GElement(self.ambient, self.matrix * o.matrix)

    def inverse(self) -> "GElement":
        return GElement(self.ambient, self.matrix.adj())

    def __pow__(self, n: int) -> "GElement":
        base = self if n >= 0 else self.inverse()
        acc = self.ambient.identity()
        for _ in range(abs(n)):
            acc = acc * base
        return acc

    def det(self) -> FieldElement:
        return self.matrix.det()

    def trace(self) -> FieldElement:
        return self.matrix.trace()

    def tau(self) -> FieldElement:
        """Projective invariant ``tr^2/det``."""
        t = self.trace()
        return t * t / self.det()

    def is_identity(self) -> bool:
        return self.matrix.is_scalar()

    def proj_equal(self, o: "GElement") -> bool:
        return self.matrix.projective_key() == o.matrix.projective_key()

    def images(self) -> list[list[list[mpc]]]:
        """Archimedean images, one 2x2 matrix per factor."""
        return [self.matrix.embed(v) for v in self.ambient.factors]

    def __repr__(self):
        return f"GElement({self.matrix!r})"

    def to_json(self):
        return {"matrix": self.matrix.to_json(), "field": list(self.field.minpoly)}


@lru_cache(maxsize=64)
def _field_at(minpoly: tuple, bits: int) -> NumberField:
    return NumberField(minpoly, bits)


def _transfer(x: FieldElement, K2: NumberField) -> FieldElement:
    return type(x)._make(K2, x.num, x.den)


def _interval_at(x: FieldElement, place: Place, bits: int) -> CInterval:
    K = x.field if bits == x.field.precision_bits else _field_at(x.field.minpoly, bits)
    y = x if K is x.field else _transfer(x, K)
    return y.embed_iv(K.infinite_places[K.infinite_places.index(place)])


def _lo(I):
    return I.a

def _hi(I):
    return I.b


def classify(g: GElement, factor: int) -> str:
    """Type of the image of g in the given factor.

    Decisions are exact where they reduce to equalities in k and certified
    by interval arithmetic otherwise; working precision is doubled until the
    answer is certain, and ``"indeterminate"`` is returned past MAX_BITS.
    Orientation-reversing images at a real factor (negative determinant)
    are called hyperbolic when the trace is nonzero (glide reflections) and
    elliptic otherwise (reflections).
    """
    v = g.ambient.factors[factor]
    if g.is_identity():
        return IDENTITY
    tau = g.tau()
    if tau == 4:
        return PARABOLIC
    bits = g.field.precision_bits
    while bits <= MAX_BITS:
        with ivprec(bits + 32):
            res = _classify_at(g, tau, v, bits)
        if res is not None:
            return res
        bits *= 2
    return INDETERMINATE


def _classify_at(g, tau, v, bits):
    if v.kind == "real":
        dI = _interval_at(g.det(), v, bits).re
        if 0 in dI:
            return None
        if _hi(dI) < 0:
            return ELLIPTIC if g.trace().is_zero() else HYPERBOLIC
        if tau.is_zero():
            return ELLIPTIC
        tI = _interval_at(tau, v, bits).re
        if _lo(tI) > 4:
            return HYPERBOLIC
        if _hi(tI) < 4:
            return ELLIPTIC
        return None
    tI = _interval_at(tau, v, bits)
    if 0 not in tI.im:
        return LOXODROMIC
    if tau.is_zero():
        return ELLIPTIC
    # the imaginary part may vanish: locate tau_v among the roots of its minpoly
    mpol = tau.minpoly()
    try:
        balls = isolate_roots(mpol, bits)
    except RootIsolationError:
        return None
    with mp.workprec(bits + 32):
        center = mpc(mp.mpf(tI.re.mid), mp.mpf(tI.im.mid))
        err = max(mpf(tI.re.delta), mpf(tI.im.delta))
        idx = identify(balls, center, err)
        if idx is None:
            return None
        b = balls[idx]
        if not b.is_real:
            return LOXODROMIC
        re, r = b.center.real, b.radius
        if re + r < 0:
            return LOXODROMIC
        if re - r > 4:
            return HYPERBOLIC
        if re - r > 0 and re + r < 4:
            return ELLIPTIC
    return None


def classify_all(g: GElement) -> list[str]:
    return [classify(g, i) for i in range(len(g.ambient.factors))]


def _normalized_trace_at(g: GElement, v: Place) -> mpc:
    """``s_v = tr_v / sqrt(det_v)`` with the principal square root."""
    t = g.trace().embed(v)
    d = g.det().embed(v)
    return t / mp.sqrt(d)


def _alpha_from_s(s: mpc) -> mpc:
    disc = mp.sqrt(s * s - 4)
    a = (s + disc) / 2
    if abs(a) < 1:
        a = (s - disc) / 2
    if abs(abs(a) - 1) < mpf(2) ** (-mp.prec // 2):
        # both roots on the unit circle: pick the one with larger imaginary part
        a1, a2 = (s + disc) / 2, (s - disc) / 2
        a = a1 if a1.imag >= a2.imag else a2
    if a.real < 0 or (a.real == 0 and a.imag < 0):
        a = -a
    return a


def _m_tau(g: GElement) -> tuple[int, ...]:
    return g.tau().minpoly()


def eigenvalue(g: GElement, factor: int = 0) -> AlgebraicNumber:
    """Eigenvalue alpha of the determinant-one lift, ``|alpha| >= 1``, ``Re(alpha) >= 0``.

    The value is taken at the given factor; its minimal polynomial over Q is
    the factor of ``x^(2D) m((x + 1/x)^2)`` vanishing there, where ``m`` is the
    minimal polynomial of ``tr^2/det`` and ``D`` its degree.
    """
    if g.is_identity() or g.tau() == 4:
        raise DegenerateEigenvalueError("parabolic or identity element has no eigenvalue off the unit circle")
    K = g.field
    v = g.ambient.factors[factor] if g.ambient.factors else K.infinite_places[0]
    m = _m_tau(g)
    D = len(m) - 1
    lifted = _reciprocal_square_lift(m)
    with mp.workprec(K.precision_bits + 64):
        alpha = _alpha_from_s(_normalized_trace_at(g, v))
        return AlgebraicNumber.from_minpoly(lifted, alpha, K.precision_bits)


@lru_cache(maxsize=1024)
def _reciprocal_square_lift(m: tuple) -> tuple:
    """Coefficients of ``sum_k m_k (x^2+1)^(2k) x^(2D-2k)``."""
    D = len(m) - 1
    size = 4 * D + 1
    out = [0] * size
    binom = [1]
    for k, c in enumerate(m):
        # (x^2+1)^(2k) = sum_j C(2k, j) x^(2j)
        row = [1]
        for _ in range(2 * k):
            row = [a + b for a, b in zip(row + [0], [0] + row)]
        shift = 2 * D - 2 * k
        for j, bc in enumerate(row):
            out[shift + 2 * j] += c * bc
    return primitive(out)


def trace_field_degree(g: GElement) -> int:
    """``[Q(alpha + 1/alpha) : Q]`` for the determinant-one lift."""
    K = g.field
    m = _m_tau(g)
    sq = compose_square(m)
    v = g.ambient.factors[0] if g.ambient.factors else K.infinite_places[0]
    with mp.workprec(K.precision_bits + 64):
        s = _normalized_trace_at(g, v)
        fac, _, _ = select_factor(sq, s, K.precision_bits)
    return len(fac) - 1


# Lorentz embeddings ----------------------------------------------------------

def _sym_basis():
    return [
        [[1, 0], [0, 1]],
        [[1, 0], [0, -1]],
        [[0, 1], [1, 0]],
    ]


def _herm_basis():
    j = mpc(0, 1)
    return [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -j], [j, 0]],
        [[1, 0], [0, -1]],
    ]


def _mm(A, B):
    return [
        [A[0][0] * B[0][0] + A[0][1] * B[1][0], A[0][0] * B[0][1] + A[0][1] * B[1][1]],
        [A[1][0] * B[0][0] + A[1][1] * B[1][0], A[1][0] * B[0][1] + A[1][1] * B[1][1]],
    ]


def _star(A):
    return [[_conj(A[0][0]), _conj(A[1][0])], [_conj(A[0][1]), _conj(A[1][1])]]


def _conj(z):
    if isinstance(z, CInterval):
        return z.conj()
    return mp.conj(z) if isinstance(z, mpc) else z


def _re(z):
    if isinstance(z, CInterval):
        return z.re
    return z.real if isinstance(z, mpc) else z


def _abs_det(M):
    d = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    if isinstance(d, CInterval):
        return iv.sqrt(d.abs2())
    return abs(d)


def phi_block(M, real_factor: bool):
    """Lorentz image of one 2x2 factor: ``X -> M X M* / |det M|``.

    Works for mpmath numbers and for CInterval entries.
    """
    basis = _sym_basis() if real_factor else _herm_basis()
    if isinstance(M[0][0], CInterval):
        basis = [[[_to_ci(x) for x in r] for r in e] for e in basis]
    Ms = _star(M)
    ad = _abs_det(M)
    n = len(basis)
    out = [[None] * n for _ in range(n)]
    for b, eb in enumerate(basis):
        img = _mm(_mm(M, eb), Ms)
        for a, ea in enumerate(basis):
            p = _mm(ea, img)
            tr = p[0][0] + p[1][1]
            out[a][b] = _re(tr) / (2 * ad)
    return out


def _to_ci(x):
    if isinstance(x, mpc):
        return CInterval(x.real, x.imag)
    return CInterval(x, 0)


def lorentz_form(real_factor: bool):
    n = 3 if real_factor else 4
    return mp.diag([-1] + [1] * (n - 1))


def phi_embed(g: GElement) -> mp.matrix:
    """Block-diagonal image in (SO+(2,1))^a x (SO+(3,1))^b."""
    K = g.field
    blocks = []
    with mp.workprec(K.precision_bits):
        for v, M in zip(g.ambient.factors, g.images()):
            blocks.append(phi_block(M, v.kind == "real"))
        n = sum(len(b) for b in blocks)
        out = mp.zeros(n, n)
        off = 0
        for b in blocks:
            for i, row in enumerate(b):
                for j, x in enumerate(row):
                    out[off + i, off + j] = x
            off += len(b)
    return out


def lorentz_residual(g: GElement) -> mpf:
    """max |Phi^T J Phi - J| over all blocks."""
    K = g.field
    worst = mpf(0)
    with mp.workprec(K.precision_bits):
        for v, M in zip(g.ambient.factors, g.images()):
            B = mp.matrix(phi_block(M, v.kind == "real"))
            J = lorentz_form(v.kind == "real")
            R = B.T * J * B - J
            worst = max(worst, max(abs(R[i, j]) for i in range(R.rows) for j in range(R.cols)))
    return worst


def _iv_det(A):
    n = len(A)
    if n == 1:
        return A[0][0]
    total = None
    for j in range(n):
        minor = [row[:j] + row[j + 1 :] for row in A[1:]]
        term = A[0][j] * _iv_det(minor)
        if j % 2:
            term = -term
        total = term if total is None else total + term
    return total


@dataclass(frozen=True)
class PhiCheck:
    factor: int
    status: str  # "nonzero", "zero" or "indeterminate"
    criterion: str  # which test was used
    says_good: bool | None  # True when the factor passes its genericity test


def phi_check(g: GElement, factor: int) -> PhiCheck:
    """Genericity test for one factor through the Lorentz embedding.

    Complex factors: ``det(Phi - Id) != 0`` certified by interval arithmetic.
    Real factors (where 1 is always an eigenvalue): the fixed vector of the
    SO(2,1) block must be spacelike, i.e. the eigenvalue-one eigenvector is
    not the negative (timelike) or null one.
    """
    v = g.ambient.factors[factor]
    K = g.field
    bits = K.precision_bits
    if v.kind == "complex":
        while bits <= MAX_BITS:
            with ivprec(bits + 32):
                M = [[_interval_at(x, v, bits) for x in r] for r in g.matrix.rows()]
                B = phi_block(M, False)
                A = [[B[i][j] - (1 if i == j else 0) for j in range(4)] for i in range(4)]
                d = _iv_det(A)
            if 0 not in d:
                return PhiCheck(factor, "nonzero", "det(Phi-Id)", True)
            if mpf(d.delta) < mpf(2) ** (-(bits // 2)):
                return PhiCheck(factor, "zero", "det(Phi-Id)", False)
            bits *= 2
        return PhiCheck(factor, INDETERMINATE, "det(Phi-Id)", None)
    with mp.workprec(bits):
        M = g.matrix.embed(v)
        B = mp.matrix(phi_block(M, True)) - mp.eye(3)
        U, S, V = mp.svd_r(B)
        vec = [V[2, j] for j in range(3)]
        q = -vec[0] ** 2 + vec[1] ** 2 + vec[2] ** 2
        tol = mpf(2) ** (-(bits // 3))
    if q > tol:
        return PhiCheck(factor, "spacelike", "fixed-vector", True)
    if q < -tol:
        return PhiCheck(factor, "timelike", "fixed-vector", False)
    return PhiCheck(factor, "null", "fixed-vector", False)


@dataclass
class GenericityVerdict:
    generic: bool | None
    types: list[str]
    phi: list[PhiCheck]
    agree: bool
    orientation_preserving: bool
    trace_degree: int | None
    field_degree: int
    reasons: list[str] = dc_field(default_factory=list)

    def to_json(self):
        return {
            "generic": self.generic,
            "types": self.types,
            "phi": [{"factor": p.factor, "status": p.status, "test": p.criterion} for p in self.phi],
            "agree": self.agree,
            "orientation_preserving": self.orientation_preserving,
            "trace_degree": self.trace_degree,
            "field_degree": self.field_degree,
            "reasons": self.reasons,
        }


def _good_type(v: Place, t: str) -> bool:
    return t == (HYPERBOLIC if v.kind == "real" else LOXODROMIC)


def orientation_preserving(g: GElement) -> bool:
    for v in g.ambient.factors:
        if v.kind == "real":
            d = g.det().embed(v).real
            if d < 0:
                return False
    return True


def types_pass(g: GElement) -> tuple[bool | None, list[str]]:
    types = classify_all(g)
    if INDETERMINATE in types:
        return None, types
    ok = all(_good_type(v, t) for v, t in zip(g.ambient.factors, types))
    return ok, types


def is_generic(g: GElement, check_phi: bool = True) -> GenericityVerdict:
    """Trace-based and Lorentz-based genericity tests plus the trace-field degree check."""
    K = g.field
    reasons = []
    ok_types, types = types_pass(g)
    phis = [phi_check(g, i) for i in range(len(types))] if check_phi else []
    agree = True
    for v, t, p in zip(g.ambient.factors, types, phis):
        if p.says_good is None or t == INDETERMINATE:
            continue
        if p.says_good != _good_type(v, t):
            agree = False
            reasons.append(f"trace and Lorentz tests disagree at factor {p.factor}")
    orient = orientation_preserving(g)
    if not orient:
        reasons.append("orientation-reversing at a real factor")
    tdeg = None
    if ok_types is None:
        generic = None
        reasons.append("indeterminate classification")
    elif not ok_types:
        generic = False
        bad = [f"{i}:{t}" for i, (v, t) in enumerate(zip(g.ambient.factors, types)) if not _good_type(v, t)]
        reasons.append("factor types " + ", ".join(bad))
    else:
        tdeg = trace_field_degree(g)
        generic = tdeg == K.degree and orient
        if tdeg != K.degree:
            reasons.append(f"trace field degree {tdeg} != {K.degree}")
    if not agree:
        generic = None
    return GenericityVerdict(generic, types, phis, agree, orient, tdeg, K.degree, reasons)


# translation lengths and displacement ---------------------------------------

@dataclass
class TranslationLength:
    per_factor: list[mpf]
    total: mpf
    cs_lower: mpf
    flags: list[str]

    def to_json(self):
        return {
            "per_factor": [float(x) for x in self.per_factor],
            "total": float(self.total),
            "cauchy_schwarz_lower": float(self.cs_lower),
            "flags": self.flags,
        }


def translation_length(g: GElement) -> TranslationLength:
    """``l_v = 2 log+|lambda_v| + 2 log+|1/lambda_v|`` and ``l = sqrt(sum l_v^2)``."""
    K = g.field
    per, flags = [], []
    with mp.workprec(K.precision_bits):
        for i, v in enumerate(g.ambient.factors):
            if g.is_identity():
                per.append(mpf(0))
                continue
            if g.tau() == 4:
                per.append(mpf(0))
                flags.append(f"factor {i} parabolic: not achieved")
                continue
            s = _normalized_trace_at(g, v)
            disc = mp.sqrt(s * s - 4)
            lam = (s + disc) / 2
            lv = 2 * max(mpf(0), mp.log(abs(lam))) + 2 * max(mpf(0), -mp.log(abs(lam)))
            per.append(lv)
        total = mp.sqrt(sum((x * x for x in per), mpf(0)))
        n = len(per)
        cs = sum(per, mpf(0)) / mp.sqrt(n) if n else mpf(0)
    return TranslationLength(per, total, cs, flags)


@dataclass(frozen=True)
class BasePoint:
    """Points ``x + iy`` in H^2 for real factors and ``(z, t)`` in H^3 for complex ones."""

    real_points: tuple = ()
    complex_points: tuple = ()

    def __post_init__(self):
        for z in self.real_points:
            if mpc(z).imag <= 0:
                raise ValueError("upper half-plane points need y > 0")
        for z, t in self.complex_points:
            if mpf(t) <= 0:
                raise ValueError("upper half-space points need t > 0")

    @classmethod
    def center(cls, sig: GroupSignature) -> "BasePoint":
        return cls(tuple(mpc(0, 1) for _ in range(sig.a)), tuple((mpc(0), mpf(1)) for _ in range(sig.b)))

    def to_json(self):
        return {
            "H2": [[float(mpc(z).real), float(mpc(z).imag)] for z in self.real_points],
            "H3": [[float(mpc(z).real), float(mpc(z).imag), float(t)] for z, t in self.complex_points],
        }


def act_h2(M, z, orientation_reversing=False):
    (a, b), (c, d) = [[mpc(x).real for x in r] for r in M]
    w = mp.conj(z) if orientation_reversing else z
    return (a * w + b) / (c * w + d)


def act_h3(M, z, t):
    (a, b), (c, d) = M
    den = abs(c * z + d) ** 2 + abs(c) ** 2 * t * t
    det = abs(a * d - b * c)
    z2 = ((a * z + b) * mp.conj(c * z + d) + a * mp.conj(c) * t * t) / den
    t2 = det * t / den
    return z2, t2


def dist_h2(z, w) -> mpf:
    return 2 * mp.asinh(abs(z - w) / (2 * mp.sqrt(z.imag * w.imag)))


def dist_h3(p, q) -> mpf:
    (z, t), (w, s) = p, q
    chord = mp.sqrt(abs(z - w) ** 2 + (t - s) ** 2)
    return 2 * mp.asinh(chord / (2 * mp.sqrt(t * s)))


def factor_displacements(g: GElement, x: BasePoint) -> list[mpf]:
    K = g.field
    out = []
    ri = ci = 0
    with mp.workprec(K.precision_bits):
        for v, M in zip(g.ambient.factors, g.images()):
            if v.kind == "real":
                z = mpc(x.real_points[ri])
                ri += 1
                det = (M[0][0] * M[1][1] - M[0][1] * M[1][0]).real
                w = act_h2(M, z, det < 0)
                out.append(dist_h2(z, w))
            else:
                z, t = x.complex_points[ci]
                ci += 1
                out.append(dist_h3((mpc(z), mpf(t)), act_h3(M, mpc(z), mpf(t))))
    return out


def displacement(g: GElement, x: BasePoint) -> mpf:
    ds = factor_displacements(g, x)
    with mp.workprec(g.field.precision_bits):
        return mp.sqrt(sum((d * d for d in ds), mpf(0)))
