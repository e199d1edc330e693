"""Free-group words, almost-law words, the search for generic elements, and conjugate discriminant sums."""
from __future__ import annotations

import string
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Sequence

import numpy as np
from mpmath import mp, mpf
from scipy.stats import ortho_group

from .heights import AlgebraicNumber
from .mobius import GElement, GroupSignature, eigenvalue, is_generic, types_pass
from .polys import RootIsolationError, discriminant, identify, is_reciprocal, isolate_roots

# words ----------------------------------------------------------------------

class Word:
    """Reduced word in a free group; letter ``k`` is generator ``k`` (1-based), ``-k`` its inverse."""

    __slots__ = ("letters",)

    def __init__(self, letters: Iterable[int] = ()):
        out: list[int] = []
        for c in letters:
            c = int(c)
            if c == 0:
                raise ValueError("letter 0 is not allowed")
            if out and out[-1] == -c:
                out.pop()
            else:
                out.append(c)
        self.letters = tuple(out)

    @classmethod
    def parse(cls, s: str, alphabet: str = "xy") -> "Word":
        letters = []
        for ch in s.replace(" ", ""):
            if ch.lower() not in alphabet:
                raise ValueError(f"unknown letter {ch!r}")
            k = alphabet.index(ch.lower()) + 1
            letters.append(-k if ch.isupper() else k)
        return cls(letters)

    def to_str(self, alphabet: str = "xy") -> str:
        return "".join(alphabet[abs(c) - 1].upper() if c < 0 else alphabet[c - 1] for c in self.letters)

    def __len__(self):
        return len(self.letters)

    def __eq__(self, o):
        return isinstance(o, Word) and o.letters == self.letters

    def __hash__(self):
        return hash(self.letters)

    def __mul__(self, o: "Word") -> "Word":
        return Word(self.letters + o.letters)

    def inverse(self) -> "Word":
        return Word(-c for c in reversed(self.letters))

    def __pow__(self, n: int) -> "Word":
        base = self if n >= 0 else self.inverse()
        return Word(base.letters * abs(n))

    def is_trivial(self) -> bool:
        return not self.letters

    def substitute(self, images: Sequence["Word"]) -> "Word":
        out: list[int] = []
        for c in self.letters:
            img = images[abs(c) - 1]
            out.extend(img.letters if c > 0 else img.inverse().letters)
        return Word(out)

    def __repr__(self):
        alphabet = "xy" if all(abs(c) <= 2 for c in self.letters) else string.ascii_lowercase
        return f"Word({self.to_str(alphabet)!r})"


X, Y = Word([1]), Word([2])


def commutator(u: Word, v: Word) -> Word:
    return u * v * u.inverse() * v.inverse()


def word_eval(w: Word, *gens: GElement) -> GElement:
    """Evaluate a word on group elements; inverses use the adjugate."""
    if not gens:
        raise ValueError("need at least one generator")
    amb = gens[0].ambient
    invs = {}
    acc = amb.identity()
    for c in w.letters:
        k = abs(c) - 1
        if c > 0:
            g = gens[k]
        else:
            if k not in invs:
                invs[k] = gens[k].inverse()
            g = invs[k]
        acc = acc * g
    return acc


def double_commutator_word(w0: Word) -> Word:
    """``w0([A^2, [B^2, A^2]], A^-1 [A^2, [B^2, A^2]] A)`` as a reduced word in x, y."""
    if w0.is_trivial():
        raise ValueError("w0 must be nontrivial")
    c = commutator(X ** 2, commutator(Y ** 2, X ** 2))
    d = X.inverse() * c * X
    return w0.substitute([c, d])


def almost_law_family(m: int) -> Word:
    """``w1 = [x, y]`` and ``w_{m+1} = [w_m(x, y), w_m(y^-1 x y, x^-1 y^-1 x)]``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    w = commutator(X, Y)
    for _ in range(m - 1):
        u = Y.inverse() * X * Y
        v = X.inverse() * Y.inverse() * X
        w = commutator(w, w.substitute([u, v]))
    return w


@dataclass
class AlmostLawReport:
    word: str
    m: int | None
    samples: int
    epsilon: float
    seed: int
    signature: tuple[int, int]

    def to_json(self):
        return {
            "word_length": len(self.word),
            "m": self.m,
            "samples": self.samples,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "signature": list(self.signature),
        }


def _eval_batch(w: Word, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    n = U.shape[-1]
    acc = np.broadcast_to(np.eye(n), U.shape).copy()
    mats = {1: U, -1: np.swapaxes(U, -1, -2), 2: V, -2: np.swapaxes(V, -1, -2)}
    for c in w.letters:
        acc = acc @ mats[c]
    return acc


def measure_epsilon(w: Word, signature: GroupSignature, samples: int, seed: int, m: int | None = None,
                    identity: bool = False) -> AlmostLawReport:
    """Largest operator-norm distance ``||w(U, V) - I||`` over Haar samples of (O3)^a x (O4)^b."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    worst = np.zeros(samples)
    for n, count in ((3, signature.a), (4, signature.b)):
        for _ in range(count):
            if identity:
                U = np.broadcast_to(np.eye(n), (samples, n, n)).copy()
                V = U.copy()
            else:
                U = ortho_group.rvs(n, size=samples, random_state=rng).reshape(samples, n, n)
                V = ortho_group.rvs(n, size=samples, random_state=rng).reshape(samples, n, n)
            R = _eval_batch(w, U, V) - np.eye(n)
            worst = np.maximum(worst, np.linalg.norm(R, ord=2, axis=(1, 2)))
    return AlmostLawReport(w.to_str(), m, samples, float(worst.max()), seed, (signature.a, signature.b))


# search ----------------------------------------------------------------------

LETTERS = string.ascii_lowercase


@dataclass
class SearchResult:
    found: bool
    word: tuple[int, ...] | None
    word_str: str | None
    length: int | None
    W: GElement | None
    verdict: object | None
    explored: int
    exhausted: bool
    truncated: bool
    mode: str
    n_max: int
    pair: tuple[str, str] | None = None

    def to_json(self):
        return {
            "found": self.found,
            "word": self.word_str,
            "length": self.length,
            "pair": list(self.pair) if self.pair else None,
            "W": self.W.matrix.to_json() if self.W is not None else None,
            "verdict": self.verdict.to_json() if self.verdict is not None else None,
            "explored": self.explored,
            "status": "found" if self.found else ("budget-truncated" if self.truncated else f"exhausted({self.n_max})"),
            "mode": self.mode,
            "n_max": self.n_max,
        }


def _key(g: GElement):
    if g.det() == 1:
        return g.matrix.sign_key()
    return g.matrix.projective_key()


def _levels(F: Sequence[GElement], n_max: int, prefix: int | None = None, budget: int | None = None):
    """Length-lex enumeration of positive words with projective dedup.

    Yields ``(letters, element)``; when ``prefix`` is given only words
    starting with that letter index are produced.
    """
    seen = set()
    starts = range(len(F)) if prefix is None else [prefix]
    level = []
    count = 0
    for i in starts:
        g = F[i]
        k = _key(g)
        if k in seen:
            continue
        seen.add(k)
        level.append(((i,), g))
    for n in range(1, n_max + 1):
        for item in level:
            count += 1
            if budget is not None and count > budget:
                return
            yield item
        if n == n_max:
            return
        nxt = []
        for letters, g in level:
            for i, A in enumerate(F):
                h = g * A
                k = _key(h)
                if k in seen:
                    continue
                seen.add(k)
                nxt.append((letters + (i,), h))
        level = nxt
        if not level:
            return


def _candidate(g: GElement, mode: str) -> GElement:
    if mode == "squares":
        return g * g
    return g


def _test(g: GElement):
    ok, _ = types_pass(g)
    if not ok:
        return None
    v = is_generic(g)
    return v if v.generic else None


def _search_block(F, n_max, mode, prefix, budget):
    explored = 0
    truncated = False
    for letters, g in _levels(F, n_max, prefix, budget):
        explored += 1
        W = _candidate(g, mode)
        v = _test(W)
        if v is not None:
            return letters, W, v, explored, False
    if budget is not None and explored >= budget:
        truncated = True
    return None, None, None, explored, truncated


def _word_string(letters, order):
    return "".join(LETTERS[order[i]] for i in letters)


def search_generic(F: Sequence[GElement], n_max: int = 8, order: Sequence[int] | None = None,
                   mode: str = "direct", workers: int = 1, budget: int | None = 200000) -> SearchResult:
    """First generic element among products of F in length-lexicographic order.

    Letters are named ``a, b, c, ...`` after the generators' positions in F;
    ``order`` permutes which generator comes first in the lexicographic order.
    Modes: ``direct`` tests each product W, ``squares`` tests W^2, and
    ``double-commutator`` tests ``w(A, B)`` for the double-commutator word
    over ordered pairs of enumerated products.
    """
    if not F:
        raise ValueError("F must be nonempty")
    if mode not in ("direct", "squares", "double-commutator"):
        raise ValueError(f"unknown mode {mode!r}")
    order = list(range(len(F))) if order is None else list(order)
    if sorted(order) != list(range(len(F))):
        raise ValueError("order must be a permutation of the generator indices")
    Fo = [F[i] for i in order]
    if mode == "double-commutator":
        return _search_pairs(Fo, n_max, order, budget)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_search_block, Fo, n_max, mode, i, budget) for i in range(len(Fo))]
            results = [f.result() for f in futs]
        explored = sum(r[3] for r in results)
        truncated = any(r[4] for r in results)
        hits = [r for r in results if r[0] is not None]
        if hits:
            best = min(hits, key=lambda r: (len(r[0]), r[0]))
            letters, W, v = best[0], best[1], best[2]
            return SearchResult(True, letters, _word_string(letters, order), len(letters), W, v,
                                explored, False, False, mode, n_max)
        return SearchResult(False, None, None, None, None, None, explored, not truncated, truncated, mode, n_max)
    letters, W, v, explored, truncated = _search_block(Fo, n_max, mode, None, budget)
    if letters is not None:
        return SearchResult(True, letters, _word_string(letters, order), len(letters), W, v,
                            explored, False, False, mode, n_max)
    return SearchResult(False, None, None, None, None, None, explored, not truncated, truncated, mode, n_max)


def _search_pairs(Fo, n_max, order, budget):
    w = double_commutator_word(X)
    words = list(_levels(Fo, n_max, None, budget))
    explored = 0
    for j in range(len(words)):
        for i in range(j + 1):
            for (la, A), (lb, B) in (((words[i]), (words[j])), ((words[j]), (words[i]))):
                explored += 1
                if budget is not None and explored > budget:
                    return SearchResult(False, None, None, None, None, None, explored, False, True,
                                        "double-commutator", n_max)
                W = word_eval(w, A, B)
                v = _test(W)
                if v is not None:
                    pa, pb = _word_string(la, order), _word_string(lb, order)
                    return SearchResult(True, la + lb, f"w({pa},{pb})", len(w) * max(len(la), len(lb)), W, v,
                                        explored, False, False, "double-commutator", n_max, (pa, pb))
    return SearchResult(False, None, None, None, None, None, explored, True, False, "double-commutator", n_max)


def splitting_degree(W: GElement) -> int:
    """``[Q(alpha) : k]`` for the eigenvalue of the determinant-one lift."""
    alpha = eigenvalue(W)
    return alpha.degree // W.field.degree if alpha.degree % W.field.degree == 0 else alpha.degree


# discriminant decomposition ---------------------------------------------------

@dataclass
class DiscriminantDecomposition:
    conjugates: list
    moduli: list[str]  # ">1", "<1", "=1" or "unresolved"
    pair_classes: dict
    S1: mpf
    S2: mpf
    Sr: mpf
    log_delta: mpf
    disc_exact: int
    lead: int
    degree: int
    log_alpha: mpf
    disc_ratio: mpf | None
    deg_ratio: mpf | None
    flags: list[str] = dc_field(default_factory=list)

    @property
    def counts(self) -> tuple[int, int, int]:
        c = list(self.pair_classes.values())
        return c.count("S1"), c.count("S2"), c.count("Sr")

    def squared_product(self) -> mpf:
        return mp.exp(2 * self.log_delta)

    def disc_identity_residual(self) -> mpf:
        """Relative gap between the squared product and ``|disc| / lead^(2d-2)``."""
        target = mpf(abs(self.disc_exact)) / mpf(self.lead) ** (2 * self.degree - 2)
        return abs(self.squared_product() - target) / target

    def to_json(self):
        s1, s2, sr = self.counts
        return {
            "degree": self.degree,
            "moduli": self.moduli,
            "pair_counts": {"S1": s1, "S2": s2, "Sr": sr},
            "S1": float(self.S1),
            "S2": float(self.S2),
            "Sr": float(self.Sr),
            "log_delta_product": float(self.log_delta),
            "disc_minpoly": self.disc_exact,
            "disc_residual": float(self.disc_identity_residual()),
            "log_alpha": float(self.log_alpha),
            "disc_ratio": None if self.disc_ratio is None else float(self.disc_ratio),
            "deg_ratio": None if self.deg_ratio is None else float(self.deg_ratio),
            "flags": self.flags,
        }


def _modulus_classes(coeffs, prec, max_prec=2048):
    """Side of the unit circle for every root, decided exactly or by certified discs."""
    recip = is_reciprocal(coeffs)
    while True:
        balls = isolate_roots(coeffs, prec)
        out = []
        undecided = False
        with mp.workprec(prec + 32):
            for i, b in enumerate(balls):
                m, r = abs(b.center), b.radius
                if m - r > 1:
                    out.append(">1")
                    continue
                if m + r < 1:
                    out.append("<1")
                    continue
                if not recip or len(coeffs) - 1 < 2:
                    undecided = True
                    out.append("unresolved")
                    continue
                # |z| = 1 exactly when 1/z and conj(z) are the same root
                inv = 1 / b.center
                err = 4 * r / (m * m) if m > 2 * r else mpf(1)
                j_inv = identify(balls, inv, err)
                j_conj = identify(balls, mp.conj(b.center), r)
                if j_inv is not None and j_inv == j_conj:
                    out.append("=1")
                elif j_inv is not None and j_conj is not None:
                    undecided = True
                    out.append("unresolved")
                else:
                    undecided = True
                    out.append("unresolved")
        if not undecided or prec >= max_prec:
            return balls, out, prec
        prec *= 2


def discriminant_decomposition(alpha: AlgebraicNumber, signature: GroupSignature | None = None,
                               tolerance: float = 1e-9) -> DiscriminantDecomposition:
    """Split ``sum_{i<j} log|alpha_i - alpha_j|`` into the S1, S2, Sr classes."""
    coeffs = alpha.minpoly
    d = len(coeffs) - 1
    balls, moduli, prec = _modulus_classes(coeffs, alpha.prec)
    flags = []
    if "unresolved" in moduli:
        flags.append("boundary-unresolved")
    with mp.workprec(prec + 32):
        S1 = S2 = Sr = mpf(0)
        classes = {}
        for i in range(d):
            for j in range(i + 1, d):
                mi, mj = moduli[i], moduli[j]
                term = mp.log(abs(balls[i].center - balls[j].center))
                if mi == ">1" or mj == ">1":
                    cls = "S1"
                    S1 += term
                elif "unresolved" in (mi, mj):
                    cls = "unresolved"
                    S2 += term
                elif mi == "<1" or mj == "<1":
                    cls = "S2"
                    S2 += term
                else:
                    cls = "Sr"
                    Sr += term
                classes[(i, j)] = cls
        log_delta = S1 + S2 + Sr
        la = mp.log(abs(alpha.value))
        disc_ratio = la / (log_delta / (4 * d)) if log_delta != 0 else None
        deg_ratio = la / (d - 4) if d != 4 else None
    if disc_ratio is not None:
        flags.append("disc-inequality " + ("holds" if la * 4 * d >= log_delta else "fails"))
    if deg_ratio is not None:
        flags.append("deg-ratio " + ("positive" if deg_ratio > 0 else "nonpositive"))
    return DiscriminantDecomposition(
        conjugates=[b.center for b in balls],
        moduli=moduli,
        pair_classes=classes,
        S1=S1,
        S2=S2,
        Sr=Sr,
        log_delta=log_delta,
        disc_exact=discriminant(coeffs),
        lead=coeffs[-1],
        degree=d,
        log_alpha=la,
        disc_ratio=disc_ratio,
        deg_ratio=deg_ratio,
        flags=flags,
    )
