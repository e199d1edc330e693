"""Quaternion algebra data, Borel covolumes of minimal and maximal lattices, and congruence bounds."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Sequence

from mpmath import mp, mpf

from .mobius import Ambient, GElement, GroupSignature, eigenvalue, is_generic
from .nfield import NumberField, Place, ZetaValue, zeta2


class AlgebraError(ValueError):
    pass


def _finite_place(field: NumberField, spec) -> Place:
    """Accept a Place, a rational prime (single place above it) or ``(p, index)``."""
    if isinstance(spec, Place):
        if spec.kind != "finite":
            raise AlgebraError("finite place expected")
        return spec
    if isinstance(spec, int):
        pls = field.places_above(spec)
        if len(pls) != 1:
            raise AlgebraError(f"{len(pls)} places lie above {spec}; give (p, index)")
        return pls[0]
    p, idx = spec
    pls = field.places_above(int(p))
    if not 0 <= int(idx) < len(pls):
        raise AlgebraError(f"no place with index {idx} above {p}")
    return pls[int(idx)]


def _place_list(field, specs) -> tuple[Place, ...]:
    out = [_finite_place(field, s) for s in specs]
    if len(set(out)) != len(out):
        raise AlgebraError("place listed twice")
    return tuple(sorted(out, key=lambda p: (p.p, p.index)))


@dataclass(frozen=True)
class QuaternionAlgebraData:
    field: NumberField
    ram_f: tuple[Place, ...]
    split_real_places: tuple[int, ...]

    @property
    def signature(self) -> GroupSignature:
        return GroupSignature(len(self.split_real_places), self.field.r2)

    @property
    def ambient(self) -> Ambient:
        return Ambient(self.field, self.split_real_places)

    @property
    def ramified_real(self) -> int:
        return self.field.r1 - len(self.split_real_places)

    @property
    def discriminant_norm(self) -> int:
        out = 1
        for P in self.ram_f:
            out *= P.norm
        return out

    def to_json(self):
        return {
            "field": self.field.to_json(),
            "ram_f": [[P.p, P.index] for P in self.ram_f],
            "split_real_places": list(self.split_real_places),
            "signature": [self.signature.a, self.signature.b],
        }


def make_algebra(field: NumberField, ram_f: Sequence = (), split_real_places: Sequence[int] = ()) -> QuaternionAlgebraData:
    """Validated commensurability data; the total ramification must be even."""
    ram = _place_list(field, ram_f)
    split = tuple(split_real_places)
    if len(set(split)) != len(split):
        raise AlgebraError("split real place listed twice")
    for i in split:
        if not 0 <= i < field.r1:
            raise AlgebraError(f"real place {i} does not exist")
    total = (field.r1 - len(split)) + len(ram)
    if total % 2:
        raise AlgebraError(f"ramification set has odd size {total}")
    if field.r2 == 0 and not split:
        raise AlgebraError("no split archimedean place: the lattice would be finite")
    return QuaternionAlgebraData(field, ram, tuple(sorted(split)))


@dataclass(frozen=True)
class LatticeSpec:
    algebra: QuaternionAlgebraData
    S: tuple[Place, ...]
    generators: tuple[GElement, ...]
    index_hint: Fraction | None = None
    name: str = ""

    def __post_init__(self):
        if set(self.S) & set(self.algebra.ram_f):
            raise AlgebraError("S must be disjoint from the ramification set")
        if not self.generators:
            raise AlgebraError("a lattice spec needs generators")
        if self.index_hint is not None and self.index_hint < 1:
            raise AlgebraError("index_hint must be >= 1")


def make_lattice(algebra, S=(), generators=(), index_hint=None, name="") -> LatticeSpec:
    amb = algebra.ambient
    gens = tuple(g if isinstance(g, GElement) else amb.element(g) for g in generators)
    hint = None if index_hint is None else Fraction(index_hint)
    return LatticeSpec(algebra, _place_list(algebra.field, S), gens, hint, name)


@dataclass
class CovolumeReport:
    delta_k: int
    delta_k_exact: bool
    delta_pow: mpf  # Delta_k^(3/2)
    zeta: ZetaValue
    ram_product: int  # prod (N(P) - 1) over ram_f
    two_exponent: int
    pi_exponent: int
    index_hint: Fraction | None
    multiplier_lo: Fraction = Fraction(1)
    multiplier_hi: Fraction = Fraction(1)
    s_product: int = 1  # prod (N(P) + 1) over S
    S_size: int = 0
    flags: list[str] = dc_field(default_factory=list)

    def _base(self, zeta_value) -> mpf:
        idx = self.index_hint or Fraction(1)
        return (
            2 * self.delta_pow * zeta_value * self.ram_product
            / (mpf(2) ** self.two_exponent * mp.pi ** self.pi_exponent)
            * idx.denominator / idx.numerator
        )

    @property
    def base_value(self) -> mpf:
        """Minimal covolume at the lower zeta endpoint (the truncated product)."""
        return self._base(self.zeta.value)

    @property
    def lower(self) -> mpf:
        return self._base(self.zeta.value) * self.multiplier_lo.numerator / self.multiplier_lo.denominator

    @property
    def upper(self) -> mpf:
        return self._base(self.zeta.upper) * self.multiplier_hi.numerator / self.multiplier_hi.denominator

    @property
    def value(self) -> mpf:
        """Point value of the minimal covolume times the lower multiplier."""
        return self.lower

    def to_json(self):
        return {
            "delta_k": self.delta_k,
            "delta_k_exact": self.delta_k_exact,
            "delta_k_pow_3_2": mp.nstr(self.delta_pow, 20),
            "zeta_k_2": [mp.nstr(self.zeta.value, 15), mp.nstr(self.zeta.upper, 15)],
            "zeta_prime_bound": self.zeta.prime_bound,
            "ram_product": self.ram_product,
            "two_exponent": self.two_exponent,
            "pi_exponent": self.pi_exponent,
            "index_hint": None if self.index_hint is None else str(self.index_hint),
            "S_size": self.S_size,
            "s_product": self.s_product,
            "multiplier": [str(self.multiplier_lo), str(self.multiplier_hi)],
            "covolume_interval": [mp.nstr(self.lower, 15), mp.nstr(self.upper, 15)],
            "flags": self.flags,
        }


def min_covolume(algebra: QuaternionAlgebraData, zeta_prime_bound: int = 10**6, index_hint=None) -> CovolumeReport:
    """Covolume of the minimal lattice of the class via Borel's formula."""
    K = algebra.field
    a = algebra.signature.a
    with mp.workprec(K.precision_bits):
        dk = abs(K.disc)
        z = zeta2(K, zeta_prime_bound)
        ram = 1
        for P in algebra.ram_f:
            ram *= P.norm - 1
        flags = []
        if index_hint is None:
            flags.append("index [Gamma_D : Gamma_D^1] taken as 1: value is an upper bound")
        if not K.disc_exact:
            flags.append("order discriminant used: may exceed the field discriminant")
        return CovolumeReport(
            delta_k=dk,
            delta_k_exact=K.disc_exact,
            delta_pow=mpf(dk) ** mpf(1.5),
            zeta=z,
            ram_product=ram,
            two_exponent=2 * K.r1 + 3 * K.r2 - 2 * a,
            pi_exponent=2 * K.r1 + 2 * K.r2 - a,
            index_hint=None if index_hint is None else Fraction(index_hint),
            flags=flags,
        )


def index_multiplier(S: Sequence[Place]) -> tuple[Fraction, Fraction, int]:
    """``[2^-|S| prod(N+1), prod(N+1)]`` as exact rationals."""
    prod = 1
    for P in S:
        prod *= P.norm + 1
    return Fraction(prod, 2 ** len(S)), Fraction(prod), prod


def max_lattice_covolume(algebra, S=(), zeta_prime_bound: int = 10**6, index_hint=None) -> CovolumeReport:
    S = _place_list(algebra.field, S)
    if set(S) & set(algebra.ram_f):
        raise AlgebraError("S intersects the ramification set")
    rep = min_covolume(algebra, zeta_prime_bound, index_hint)
    lo, hi, prod = index_multiplier(S)
    rep.multiplier_lo, rep.multiplier_hi = lo, hi
    rep.s_product, rep.S_size = prod, len(S)
    return rep


@dataclass
class IndexBounds:
    beta: object
    norm_beta: int
    S_bound: int
    product_bound: int
    candidate_places: list[Place]
    candidate_product: int
    alpha_abs: mpf
    ell_over_k: int
    c_measured_k: mpf
    c_measured_ell: mpf
    congruence_exponent: int
    congruence_ratio: mpf
    congruence_pinned: bool
    flags: list[str] = dc_field(default_factory=list)

    def to_json(self):
        return {
            "beta": self.beta.to_json(),
            "norm_beta": self.norm_beta,
            "S_bound": self.S_bound,
            "product_bound": self.product_bound,
            "candidate_places": [[P.p, P.index, P.norm] for P in self.candidate_places],
            "candidate_product": self.candidate_product,
            "alpha_abs": float(self.alpha_abs),
            "ell_over_k_degree": self.ell_over_k,
            "c_measured_k": float(self.c_measured_k),
            "c_measured_ell": float(self.c_measured_ell),
            "congruence_exponent": self.congruence_exponent,
            "congruence_ratio": float(self.congruence_ratio),
            "congruence_constant_pinned": self.congruence_pinned,
            "flags": self.flags,
        }


def floor_log2(n: int) -> int:
    n = abs(int(n))
    if n < 1:
        raise ValueError("need |n| >= 1")
    return n.bit_length() - 1


def signed_trace(W: GElement):
    """``alpha + 1/alpha`` for the determinant-one lift with ``Re(alpha) >= 0``."""
    if W.det() != 1:
        raise AlgebraError("a determinant-one representative is required")
    t = W.trace()
    v = W.ambient.factors[0]
    with mp.workprec(W.field.precision_bits):
        z = t.embed(v)
        if z.real < 0 or (z.real == 0 and z.imag < 0):
            t = -t
    return t


def index_bounds_from_generic(W: GElement, algebra: QuaternionAlgebraData, check_generic: bool = True) -> IndexBounds:
    """Bounds on the places where ``tr(W) = 2 mod P`` can hold."""
    K = algebra.field
    flags = []
    if check_generic:
        verdict = is_generic(W)
        if not verdict.generic:
            flags.append("W not verified generic: " + "; ".join(verdict.reasons))
    s = signed_trace(W)
    beta = s - 2
    if beta.is_zero():
        raise AlgebraError("trace 2: unipotent-like, not generic")
    nb = beta.norm()
    if nb.denominator != 1:
        raise AlgebraError("trace is not an algebraic integer")
    nb = int(nb)
    cands = []
    for P in K.finite_support(beta):
        if K.valuation(beta, P) > 0:
            cands.append(P)
    cprod = 1
    for P in cands:
        cprod *= P.norm + 1
    sig = algebra.signature
    with mp.workprec(K.precision_bits):
        alpha_abs = mpf(1)
        for v in W.ambient.factors:
            sv = s.embed(v)
            disc = mp.sqrt(sv * sv - 4)
            alpha_abs = max(alpha_abs, abs((sv + disc) / 2), abs((sv - disc) / 2))
        try:
            alpha = eigenvalue(W)
            ell_deg = alpha.degree
        except ValueError:
            ell_deg = 2 * K.degree
        ell_over_k = max(1, ell_deg // K.degree)
        e = sig.a + 2 * sig.b
        c_k = abs(nb) / alpha_abs ** e
        c_ell = mpf(abs(nb)) ** ell_over_k / alpha_abs ** e
        cexp = 3 * e
        ratio = mpf(abs(nb)) ** 3 / alpha_abs ** cexp
    pinned = (sig.a, sig.b) == (0, 1)
    if not pinned:
        flags.append("constant not pinned")
    return IndexBounds(
        beta=beta,
        norm_beta=nb,
        S_bound=floor_log2(nb),
        product_bound=nb * nb,
        candidate_places=cands,
        candidate_product=cprod,
        alpha_abs=alpha_abs,
        ell_over_k=ell_over_k,
        c_measured_k=c_k,
        c_measured_ell=c_ell,
        congruence_exponent=cexp,
        congruence_ratio=ratio,
        congruence_pinned=pinned,
        flags=flags,
    )
