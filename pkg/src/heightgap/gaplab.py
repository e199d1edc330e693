"""Height-gap checks and Margulis-set scans over explicit lattices."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
import sympy
from mpmath import mp, mpf

from .generic import LETTERS, SearchResult, _key, search_generic, splitting_degree
from .heights import AlgebraicNumber, height_algebraic, nheight_bounds
from .mobius import (
    INDETERMINATE,
    LOXODROMIC,
    Ambient,
    BasePoint,
    GElement,
    classify,
    displacement,
    eigenvalue,
    translation_length,
)
from .nfield import NumberField
from .polys import RootIsolationError, discriminant
from .qalg import (
    AlgebraError,
    LatticeSpec,
    index_bounds_from_generic,
    make_algebra,
    make_lattice,
    max_lattice_covolume,
    min_covolume,
)

CLASS_ORDER = ["trivial", "finite-evidence", "virtually-abelian-evidence", "real-trace", "dense-evidence"]
EPS_GRID = [round(0.05 * k, 2) for k in range(1, 21)]


def _num(x, digits: int = 12):
    """Stable float rendering for reports."""
    if x is None:
        return None
    return float(f"{float(x):.{digits}g}")


# catalog ---------------------------------------------------------------------

def bianchi_field(D: int) -> NumberField:
    if D < 1 or not sympy.ntheory.factor_.core(D) == D:
        raise ValueError(f"D = {D} must be a positive squarefree integer")
    if (-D) % 4 == 1:
        return NumberField([(1 + D) // 4, -1, 1])
    return NumberField([D, 0, 1])


def bianchi_catalog(D_list: Sequence[int]) -> list[LatticeSpec]:
    """``PSL2(O_D)`` with the generators T, T_omega and S for each D."""
    out = []
    for D in D_list:
        K = bianchi_field(int(D))
        w = K.gen
        alg = make_algebra(K)
        gens = [[[1, 1], [0, 1]], [[1, w], [0, 1]], [[0, -1], [1, 0]]]
        out.append(make_lattice(alg, (), gens, None, f"bianchi-{D}"))
    return out


# structural certificates -------------------------------------------------------

def _tr_comm_is_two(A: GElement, B: GElement) -> bool:
    """``tr[A, B] = 2`` for the projective classes (exact)."""
    MA, MB = A.matrix, B.matrix
    C = MA * MB * MA.adj() * MB.adj()
    return C.trace() == 2 * MA.det() * MB.det()


def _real_trace_at(g: GElement, factor: int) -> bool | None:
    """Whether the determinant-normalized trace is real at a complex factor.

    That happens exactly when tau lies in ``[0, oo)``, i.e. when the image
    is not loxodromic.
    """
    t = classify(g, factor)
    if t == INDETERMINATE:
        return None
    return t != LOXODROMIC


def _quad_poly(g: GElement):
    """Fixed-point polynomial ``c z^2 + (d - a) z - b`` as coefficients low-to-high."""
    M = g.matrix
    return [-M.b, M.d - M.a, M.c]


def _poly_strip(p):
    while p and p[-1].is_zero():
        p = p[:-1]
    return p


def _poly_mod(a, b):
    a = list(a)
    while len(a) >= len(b) and a:
        q = a[-1] / b[-1]
        shift = len(a) - len(b)
        for i, c in enumerate(b):
            a[shift + i] = a[shift + i] - q * c
        a = _poly_strip(a[:-1])
    return a


def _poly_gcd(a, b):
    a, b = _poly_strip(a), _poly_strip(b)
    while b:
        a, b = b, _poly_mod(a, b)
    return a


def common_fixed_point(elements: Sequence[GElement]) -> str | None:
    """Describe a boundary point fixed by every element, or None."""
    movers = [g for g in elements if not g.is_identity()]
    if not movers:
        return "everything"
    if all(g.matrix.c.is_zero() for g in movers):
        return "infinity"
    g = None
    for h in movers:
        p = _poly_strip(_quad_poly(h))
        if len(p) < 2:
            # constant nonzero polynomial: no finite fixed point
            return None
        g = p if g is None else _poly_gcd(g, p)
        if len(g) < 2:
            return None
    return "root of " + ", ".join(str(c) for c in g)


def finite_closure(gens: Sequence[GElement], cap: int = 512) -> int | None:
    """Order of the group generated (projectively), or None past ``cap``."""
    if not gens:
        return 1
    amb = gens[0].ambient
    letters = list(gens) + [g.inverse() for g in gens]
    e = amb.identity()
    seen = {_key(e)}
    frontier = [e]
    while frontier:
        nxt = []
        for h in frontier:
            for g in letters:
                p = h * g
                k = _key(p)
                if k not in seen:
                    seen.add(k)
                    nxt.append(p)
                    if len(seen) > cap:
                        return None
        frontier = nxt
    return len(seen)


@dataclass
class StructureVerdict:
    label: str
    certificate: dict

    @property
    def rank(self) -> int:
        return CLASS_ORDER.index(self.label)


def _find_nonelementary_pair(cands: Sequence[tuple[str, GElement]]):
    lox = []
    for name, g in cands:
        if all(classify(g, i) == LOXODROMIC or (g.ambient.factors[i].kind == "real" and classify(g, i) == "hyperbolic")
               for i in range(len(g.ambient.factors))):
            lox.append((name, g))
    for j in range(len(lox)):
        for i in range(j):
            if not _tr_comm_is_two(lox[i][1], lox[j][1]):
                return lox[i][0], lox[j][0]
    return None


def _nonreal_witness(named, cplx, product_cap):
    for name, g in named:
        if any(_real_trace_at(g, i) is False for i in cplx):
            return name
    # real traces on generators do not force real traces on products
    pool = named[:product_cap]
    for j, (n1, g1) in enumerate(pool):
        for n2, g2 in pool[j + 1:]:
            if any(_real_trace_at(g1 * g2, i) is False for i in cplx):
                return f"{n1}*{n2}"
    return None


def classify_group(named: Sequence[tuple[str, GElement]], closure_cap: int = 512, product_cap: int = 200) -> StructureVerdict:
    """Evidence about the subgroup generated by the named elements.

    Checked in order: trivial, finite (closure terminates), common boundary
    fixed point, real traces at every complex factor, and a pair of
    loxodromics without common fixed point (non-elementary).
    """
    elems = [g for _, g in named]
    if all(g.is_identity() for g in elems):
        return StructureVerdict("trivial", {"kind": "all-identity"})
    movers = [g for g in elems if not g.is_identity()]
    order = finite_closure(movers, closure_cap)
    if order is not None:
        return StructureVerdict("finite-evidence", {"kind": "closure", "order": order})
    fp = common_fixed_point(movers)
    if fp is not None:
        return StructureVerdict("virtually-abelian-evidence", {"kind": "common-fixed-point", "point": fp})
    amb = movers[0].ambient
    cplx = [i for i, v in enumerate(amb.factors) if v.kind == "complex"]
    nonreal = None
    if cplx:
        nonreal = _nonreal_witness(named, cplx, product_cap)
        if nonreal is None:
            return StructureVerdict("real-trace", {"kind": "real-traces", "checked": len(named)})
    pair = _find_nonelementary_pair(named)
    if pair is None and len(named) <= product_cap:
        prods = [(f"{n1}*{n2}", g1 * g2) for n1, g1 in named for n2, g2 in named]
        pair = _find_nonelementary_pair(list(named) + prods)
    if pair is not None:
        cert = {"kind": "non-elementary-pair", "pair": list(pair)}
        if cplx:
            cert["nonreal_trace"] = nonreal
        return StructureVerdict("dense-evidence", cert)
    return StructureVerdict("virtually-abelian-evidence", {"kind": "none-found"})


# gap check -----------------------------------------------------------------------

@dataclass
class GapReport:
    lattice: str
    degree: int
    hhat_lower: mpf
    hhat_upper: mpf | None
    hhat_truncated: bool
    covol_lower: mpf | None
    covol_upper: mpf | None
    ratio: mpf | None
    ratio_bounded_degree: mpf | None
    witness: dict | None
    index_bounds: dict | None
    certificates: dict
    verdict: str
    notes: list[str] = dc_field(default_factory=list)

    def to_json(self):
        return {
            "lattice": self.lattice,
            "degree": self.degree,
            "hhat": [_num(self.hhat_lower), _num(self.hhat_upper)],
            "hhat_truncated": self.hhat_truncated,
            "covolume": [_num(self.covol_lower), _num(self.covol_upper)],
            "ratio": _num(self.ratio),
            "ratio_bounded_degree": _num(self.ratio_bounded_degree),
            "witness": self.witness,
            "index_bounds": self.index_bounds,
            "certificates": self.certificates,
            "verdict": self.verdict,
            "notes": self.notes,
        }

    def csv_row(self):
        return [
            self.lattice,
            self.degree,
            _num(self.hhat_lower),
            _num(self.hhat_upper),
            _num(self.covol_lower),
            _num(self.covol_upper),
            _num(self.ratio),
            (self.witness or {}).get("word"),
            self.verdict,
        ]


CSV_HEADER = ["lattice", "degree", "hhat_lower", "hhat_upper", "covol_lower", "covol_upper", "ratio", "witness", "verdict"]


def _tower_check(alpha: AlgebraicNumber, K: NumberField) -> dict:
    """``Delta_k^2`` divides the discriminant of ``Z[alpha]`` whenever ``[Q(alpha):k] = 2``."""
    disc = abs(discriminant(alpha.minpoly))
    dk2 = K.disc * K.disc
    rel = alpha.degree // K.degree if alpha.degree % K.degree == 0 else None
    out = {"disc_Z_alpha": disc, "delta_k_squared": dk2, "ell_over_k": rel}
    if rel == 2:
        out["divisible"] = disc % dk2 == 0
        out["inequality"] = disc >= dk2
    return out


def gap_check(spec: LatticeSpec, n_max: int = 8, zeta_bound: int = 10**6, eig_words: int = 20000,
              search_budget: int | None = 200000, workers: int = 1) -> GapReport:
    """Search for a generic element, bracket hhat(F), and compare with the covolume of Gamma_1."""
    K = spec.algebra.field
    gens = list(spec.generators)
    notes = []
    hb = nheight_bounds([g.matrix for g in gens], n_max, eig_words)
    if hb.truncated:
        notes.append("hhat bracket budget-truncated")
    res: SearchResult = search_generic(gens, n_max, mode="direct", workers=workers, budget=search_budget)
    certs: dict = {}
    if res.found:
        W = res.W
        alpha = eigenvalue(W)
        witness = {
            "word": res.word_str,
            "length": res.length,
            "matrix": W.matrix.to_json(),
            "trace": W.trace().to_json(),
            "eigenvalue_minpoly": list(alpha.minpoly),
            "height_eigenvalue": _num(height_algebraic(alpha)),
            "splitting_degree": splitting_degree(W),
            "tower": _tower_check(alpha, K),
            "verdict": res.verdict.to_json(),
        }
        try:
            ib = index_bounds_from_generic(W, spec.algebra)
            ibj = ib.to_json()
            S = [P for P in ib.candidate_places if P not in spec.algebra.ram_f]
        except AlgebraError as exc:
            ibj = {"error": str(exc)}
            S = list(spec.S)
        cov = max_lattice_covolume(spec.algebra, S, zeta_bound, spec.index_hint)
        with mp.workprec(K.precision_bits):
            denom = max(mp.log(cov.upper), mpf(1))
            ratio = hb.lower * K.degree ** 2 / denom
            ratio_b = hb.lower / denom
        named = [(LETTERS[i], g) for i, g in enumerate(gens)]
        conj = [(f"{LETTERS[i]}W{LETTERS[i].upper()}", g * W * g.inverse()) for i, g in enumerate(gens)]
        pair = None
        for name, B in conj:
            if not _tr_comm_is_two(W, B):
                pair = ["W", name]
                break
        certs["non_elementary_pair"] = pair
        amb = spec.algebra.ambient
        cplx = [i for i, v in enumerate(amb.factors) if v.kind == "complex"]
        nonreal = None
        if cplx:
            nonreal = _nonreal_witness([("W", W)] + named + conj, cplx, 50)
            certs["nonreal_trace"] = nonreal
        dense = pair is not None and (not cplx or nonreal is not None)
        verdict = "dense-evidence" if dense else "inconclusive"
        if not dense:
            notes.append("generic witness found but density certificates incomplete")
        notes.append("a generic witness is evidence of density, not a proof")
        return GapReport(spec.name, K.degree, hb.lower, hb.upper, hb.truncated, cov.lower, cov.upper,
                         ratio, ratio_b, witness, ibj, certs, verdict, notes)
    if res.truncated:
        return GapReport(spec.name, K.degree, hb.lower, hb.upper, hb.truncated, None, None, None, None,
                         None, None, certs, "inconclusive", notes + ["search budget-truncated"])
    named = [(LETTERS[i], g) for i, g in enumerate(gens)]
    sv = classify_group(named)
    certs["structure"] = {"label": sv.label, **sv.certificate}
    strong = sv.label in ("trivial", "finite-evidence", "real-trace") or (
        sv.label == "virtually-abelian-evidence" and sv.certificate.get("kind") == "common-fixed-point"
    )
    notes.append(f"search exhausted at n_max = {n_max}; exhaustion does not prove non-density")
    verdict = "non-dense-evidence" if strong else "inconclusive"
    cov = max_lattice_covolume(spec.algebra, spec.S, zeta_bound, spec.index_hint)
    return GapReport(spec.name, K.degree, hb.lower, hb.upper, hb.truncated, cov.lower, cov.upper, None, None,
                     None, None, certs, verdict, notes)


# Margulis scan --------------------------------------------------------------------

@dataclass
class Ball:
    """Projectively distinct words up to a radius, with displacements at a base point."""

    words: list[str]
    elements: list[GElement]
    disp: list[mpf]
    radius: int
    closed: bool  # True when the last level produced nothing new


def _alphabet(n: int) -> str:
    return LETTERS[:n]


def word_ball(gens: Sequence[GElement], radius: int, x: BasePoint) -> Ball:
    amb = gens[0].ambient
    names = _alphabet(len(gens))
    letters = [(names[i], g) for i, g in enumerate(gens)] + [(names[i].upper(), g.inverse()) for i, g in enumerate(gens)]
    e = amb.identity()
    seen = {_key(e)}
    words, elems = [""], [e]
    frontier = [("", e)]
    closed = False
    for _ in range(radius):
        nxt = []
        for w, h in frontier:
            for name, g in letters:
                if w and w[-1] == name.swapcase():
                    continue
                p = h * g
                k = _key(p)
                if k in seen:
                    continue
                seen.add(k)
                nxt.append((w + name, p))
        if not nxt:
            closed = True
            break
        for w, p in nxt:
            words.append(w)
            elems.append(p)
        frontier = nxt
    with mp.workprec(amb.field.precision_bits):
        disp = [displacement(g, x) for g in elems]
    return Ball(words, elems, disp, radius, closed)


@dataclass
class MargulisReport:
    lattice: str
    epsilon: float
    base_point: BasePoint
    covol_lower: mpf
    R: mpf
    members: list[tuple[str, mpf]]
    label: str
    certificate: dict
    flags: list[str]
    max_displacement: mpf
    height_check: dict

    def to_json(self):
        return {
            "lattice": self.lattice,
            "epsilon": self.epsilon,
            "base_point": self.base_point.to_json(),
            "covol_lower": _num(self.covol_lower),
            "R": _num(self.R),
            "size": len(self.members),
            "members": [[w, _num(d)] for w, d in self.members],
            "classification": self.label,
            "certificate": self.certificate,
            "flags": self.flags,
            "height_check": self.height_check,
        }


def margulis_radius(covol_lower, epsilon) -> mpf:
    """``epsilon * sqrt(max(log covol, 1))``."""
    return mpf(epsilon) * mp.sqrt(max(mp.log(covol_lower), mpf(1)))


def _height_chain(members, K, nfac, R, cap=200):
    """For loxodromic members: ``l(g) <= d(x, gx) <= R`` and ``h(lambda) <= sqrt(|V|) R / [k:Q]``."""
    checked = 0
    worst = mpf(0)
    ok = True
    for g, d in members:
        if checked >= cap:
            break
        if g.is_identity() or g.tau() == 4:
            continue
        tl = translation_length(g)
        if tl.total == 0:
            continue
        checked += 1
        if tl.total > d + mpf(10) ** -9:
            ok = False
        try:
            h = height_algebraic(eigenvalue(g))
        except (ValueError, RootIsolationError):
            continue
        bound = mp.sqrt(nfac) * R / K.degree
        worst = max(worst, h - bound)
        if h > bound + mpf(10) ** -9:
            ok = False
    return {"checked": checked, "holds": ok, "max_excess": _num(worst)}


def margulis_from_ball(spec: LatticeSpec, ball: Ball, x: BasePoint, epsilon: float, covol_lower) -> MargulisReport:
    K = spec.algebra.field
    with mp.workprec(K.precision_bits):
        R = margulis_radius(covol_lower, epsilon)
        idx = [i for i, d in enumerate(ball.disp) if d <= R]
    members = [(ball.words[i], ball.elements[i]) for i in idx]
    sv = classify_group(members)
    flags = [] if ball.closed else ["within radius only"]
    nfac = len(spec.algebra.ambient.factors)
    hc = _height_chain([(ball.elements[i], ball.disp[i]) for i in idx], K, nfac, R)
    return MargulisReport(
        spec.name, epsilon, x, covol_lower, R,
        [(ball.words[i], ball.disp[i]) for i in idx],
        sv.label, sv.certificate, flags,
        max((ball.disp[i] for i in idx), default=mpf(0)), hc,
    )


def margulis_scan(spec: LatticeSpec, x: BasePoint | None = None, epsilon: float = 0.2, word_radius: int = 8,
                  zeta_bound: int = 10**6) -> MargulisReport:
    amb = spec.algebra.ambient
    x = x or BasePoint.center(amb.signature)
    cov = max_lattice_covolume(spec.algebra, spec.S, zeta_bound, spec.index_hint)
    ball = word_ball(list(spec.generators), word_radius, x)
    return margulis_from_ball(spec, ball, x, epsilon, cov.lower)


def margulis_grid(spec: LatticeSpec, eps_list: Sequence[float] = EPS_GRID, x: BasePoint | None = None,
                  word_radius: int = 8, zeta_bound: int = 10**6) -> list[MargulisReport]:
    """Margulis reports over an epsilon grid sharing one enumerated ball."""
    amb = spec.algebra.ambient
    x = x or BasePoint.center(amb.signature)
    cov = max_lattice_covolume(spec.algebra, spec.S, zeta_bound, spec.index_hint)
    ball = word_ball(list(spec.generators), word_radius, x)
    return [margulis_from_ball(spec, ball, x, e, cov.lower) for e in sorted(eps_list)]


def is_monotone(reports: Sequence[MargulisReport]) -> bool:
    ranks = [CLASS_ORDER.index(r.label) for r in reports]
    sizes = [len(r.members) for r in reports]
    return all(a <= b for a, b in zip(ranks, ranks[1:])) and all(a <= b for a, b in zip(sizes, sizes[1:]))


# scan -------------------------------------------------------------------------------

def _gap_row(args):
    D, n_max, zeta_bound = args
    spec = bianchi_catalog([D])[0]
    try:
        return gap_check(spec, n_max, zeta_bound).to_json()
    except Exception as exc:  # isolate per-row failures
        return {"lattice": f"bianchi-{D}", "verdict": "error", "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class GapScan:
    rows: list[dict]
    summary: dict

    def to_json(self):
        return {"rows": self.rows, "summary": self.summary}

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        for r in self.rows:
            if r.get("verdict") == "error":
                wr.writerow([r["lattice"], "", "", "", "", "", "", "", "error"])
                continue
            wr.writerow([
                r["lattice"], r["degree"], r["hhat"][0], r["hhat"][1], r["covolume"][0], r["covolume"][1],
                r["ratio"], (r["witness"] or {}).get("word"), r["verdict"],
            ])
        return buf.getvalue()


def gap_scan(D_list: Sequence[int], n_max: int = 8, zeta_bound: int = 10**6, workers: int = 1) -> GapScan:
    jobs = [(int(D), n_max, zeta_bound) for D in D_list]
    for D, _, _ in jobs:
        bianchi_field(D)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_gap_row, jobs))
    else:
        rows = [_gap_row(j) for j in jobs]
    ratios = [r["ratio"] for r in rows if r.get("ratio") is not None]
    trend = []
    for r in rows:
        if r.get("verdict") in ("dense-evidence", "non-dense-evidence", "inconclusive") and r["covolume"][1]:
            trend.append({
                "lattice": r["lattice"],
                "log_covol_upper": _num(math.log(r["covolume"][1])),
                "hhat_lower_times_degree_sq": _num(r["hhat"][0] * r["degree"] ** 2),
            })
    summary = {
        "rows": len(rows),
        "min_ratio": min(ratios) if ratios else None,
        "undefined": not rows,
        "all_dense": bool(rows) and all(r.get("verdict") == "dense-evidence" for r in rows),
        "trend": trend,
    }
    return GapScan(rows, summary)
