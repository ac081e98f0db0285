"""Spin-graded quadratic and linear bosonic operators and their Lie closure.

An element is a sum of terms c * s_mask * B where s_mask is a product of
sigma_x operators (a bitset over ion labels, bit ``ion - 1``) and B is one of
the boson tags

    ("AA", j, k)   a_j a_k            (j <= k)
    ("DD", j, k)   a_j^dag a_k^dag    (j <= k)
    ("N", j, k)    a_j^dag a_k + delta_jk / 2
    ("A", j)       a_j
    ("D", j)       a_j^dag
    ("1",)         identity

Mode labels are 1-based. All sigma_x factors commute with each other and with
the bosons and square to one, so [s B, s' B'] = (s XOR s') [B, B']. Boson
commutators are computed from first principles by normal ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from squeezegate.errors import InputError

PRUNE = 1e-12
RANK_TOL = 1e-10

# Normal ordering -------------------------------------------------------------
# A word is a tuple of (dagger, mode) letters; a normal-ordered monomial is a
# pair (sorted creation modes, sorted annihilation modes).


@lru_cache(maxsize=None)
def _normal_order(word: tuple) -> tuple:
    """Normal-ordered expansion of a word as ((monomial, coeff), ...)."""
    for i in range(len(word) - 1):
        (d1, m1), (d2, m2) = word[i], word[i + 1]
        if not d1 and d2:  # a_m1 a^dag_m2 = a^dag_m2 a_m1 + delta
            out: dict = {}
            for mono, c in _normal_order(word[:i] + ((d2, m2), (d1, m1)) + word[i + 2:]):
                out[mono] = out.get(mono, 0) + c
            if m1 == m2:
                for mono, c in _normal_order(word[:i] + word[i + 2:]):
                    out[mono] = out.get(mono, 0) + c
            return tuple((k, v) for k, v in out.items() if v != 0)
    creators = tuple(sorted(m for d, m in word if d))
    annihilators = tuple(sorted(m for d, m in word if not d))
    return (((creators, annihilators), 1),)


def _tag_words(tag: tuple) -> list:
    """The tag as a list of (word, coeff)."""
    kind = tag[0]
    if kind == "AA":
        return [(((False, tag[1]), (False, tag[2])), 1.0)]
    if kind == "DD":
        return [(((True, tag[1]), (True, tag[2])), 1.0)]
    if kind == "N":
        out = [(((True, tag[1]), (False, tag[2])), 1.0)]
        if tag[1] == tag[2]:
            out.append(((), 0.5))
        return out
    if kind == "A":
        return [(((False, tag[1]),), 1.0)]
    if kind == "D":
        return [(((True, tag[1]),), 1.0)]
    return [((), 1.0)]


def _monomials_to_tags(monos: dict) -> dict:
    """Rewrite a normal-ordered polynomial (degree <= 2) in tags."""
    out: dict = {}

    def add(tag, c):
        out[tag] = out.get(tag, 0) + c

    for (cr, an), c in monos.items():
        if abs(c) == 0:
            continue
        if len(cr) + len(an) > 2:
            raise ValueError("commutator left the quadratic sector")  # cannot happen
        if not cr and not an:
            add(("1",), c)
        elif len(cr) == 1 and not an:
            add(("D", cr[0]), c)
        elif len(an) == 1 and not cr:
            add(("A", an[0]), c)
        elif len(an) == 2:
            add(("AA",) + an, c)
        elif len(cr) == 2:
            add(("DD",) + cr, c)
        else:
            j, k = cr[0], an[0]
            add(("N", j, k), c)
            if j == k:
                add(("1",), -0.5 * c)
    return out


@lru_cache(maxsize=None)
def boson_commutator(t1: tuple, t2: tuple) -> tuple:
    """[B1, B2] for two tags, as ((tag, coeff), ...)."""
    monos: dict = {}
    for w1, c1 in _tag_words(t1):
        for w2, c2 in _tag_words(t2):
            for sgn, word in ((1, w1 + w2), (-1, w2 + w1)):
                for mono, c in _normal_order(word):
                    monos[mono] = monos.get(mono, 0) + sgn * c1 * c2 * c
    return tuple((k, v) for k, v in _monomials_to_tags(monos).items() if abs(v) > PRUNE)


def _canonical_tag(tag: tuple) -> tuple:
    kind = tag[0]
    if kind in ("AA", "DD"):
        if len(tag) != 3:
            raise InputError(f"malformed tag {tag}")
        j, k = int(tag[1]), int(tag[2])
        return (kind, min(j, k), max(j, k))
    if kind == "N":
        return ("N", int(tag[1]), int(tag[2]))
    if kind in ("A", "D"):
        return (kind, int(tag[1]))
    if kind == "1":
        return ("1",)
    raise InputError(f"unknown boson tag {tag!r}")


def spin_mask(*ions: int) -> int:
    """Bitset for the product sigma_x^(i1) ... (ions are 1-based)."""
    mask = 0
    for i in ions:
        if int(i) < 1:
            raise InputError("ion labels are 1-based")
        mask ^= 1 << (int(i) - 1)
    return mask


def mask_ions(mask: int) -> tuple:
    return tuple(b + 1 for b in range(mask.bit_length()) if mask >> b & 1)


def spin_order(mask: int) -> int:
    return bin(mask).count("1")


# Elements ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    terms: dict = field(default_factory=dict)  # (mask, tag) -> complex

    def __post_init__(self):
        clean: dict = {}
        for (mask, tag), c in self.terms.items():
            key = (int(mask), _canonical_tag(tag))
            clean[key] = clean.get(key, 0) + complex(c)
        object.__setattr__(self, "terms", {k: v for k, v in clean.items() if abs(v) > PRUNE})

    @classmethod
    def term(cls, tag: tuple, ions=(), coeff: complex = 1.0) -> "AlgebraElement":
        return cls({(spin_mask(*ions), tag): coeff})

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return AlgebraElement(out)

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement({k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        return self + (-other)

    def __mul__(self, c) -> "AlgebraElement":
        return AlgebraElement({k: c * v for k, v in self.terms.items()})

    __rmul__ = __mul__

    def with_spins(self, *ions: int) -> "AlgebraElement":
        """Multiply by sigma_x^(i1) sigma_x^(i2) ..."""
        m = spin_mask(*ions)
        return AlgebraElement({(mask ^ m, tag): c for (mask, tag), c in self.terms.items()})

    def is_zero(self) -> bool:
        return not self.terms

    def norm(self) -> float:
        return float(np.sqrt(sum(abs(c) ** 2 for c in self.terms.values())))

    def close_to(self, other: "AlgebraElement", tol: float = 1e-12) -> bool:
        return (self - other).norm() <= tol

    def tags(self) -> set:
        return {tag[0] for _, tag in self.terms}

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (mask, tag), c in sorted(self.terms.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            spins = "".join(f"s{i}" for i in mask_ions(mask))
            parts.append(f"({c:.6g}){spins}{_tag_str(tag)}")
        return " + ".join(parts)


def _tag_str(tag: tuple) -> str:
    kind = tag[0]
    if kind == "AA":
        return f"a{tag[1]}a{tag[2]}"
    if kind == "DD":
        return f"a{tag[1]}+a{tag[2]}+"
    if kind == "N":
        return f"(a{tag[1]}+a{tag[2]}" + ("+1/2)" if tag[1] == tag[2] else ")")
    if kind == "A":
        return f"a{tag[1]}"
    if kind == "D":
        return f"a{tag[1]}+"
    return "1"


def a(j: int, ions=()) -> AlgebraElement:
    return AlgebraElement.term(("A", j), ions)


def ad(j: int, ions=()) -> AlgebraElement:
    return AlgebraElement.term(("D", j), ions)


def aa(j: int, k: int, ions=()) -> AlgebraElement:
    return AlgebraElement.term(("AA", j, k), ions)


def adad(j: int, k: int, ions=()) -> AlgebraElement:
    return AlgebraElement.term(("DD", j, k), ions)


def n_half(j: int, k: int, ions=()) -> AlgebraElement:
    """a_j^dag a_k + delta_jk / 2."""
    return AlgebraElement.term(("N", j, k), ions)


def one(ions=()) -> AlgebraElement:
    return AlgebraElement.term(("1",), ions)


def commutator(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    out: dict = {}
    for (m1, t1), c1 in x.terms.items():
        for (m2, t2), c2 in y.terms.items():
            mask = m1 ^ m2
            for tag, c in boson_commutator(t1, t2):
                key = (mask, tag)
                out[key] = out.get(key, 0) + c1 * c2 * c
    return AlgebraElement(out)


# Generator sets ----------------------------------------------------------------


def squeezing_generators(num_modes: int, spins) -> list:
    """sigma_i (a_j^2 +- a_j^dag^2) and sigma_i (a_j a_k +- a_j^dag a_k^dag), j < k."""
    _check_universe(num_modes, spins)
    out = []
    for i in spins:
        for j in range(1, num_modes + 1):
            for k in range(j, num_modes + 1):
                out.append(aa(j, k, (i,)) + adad(j, k, (i,)))
                out.append(aa(j, k, (i,)) - adad(j, k, (i,)))
    return out


def displacement_generators(num_modes: int, spins) -> list:
    """sigma_i a_j and sigma_i a_j^dag."""
    _check_universe(num_modes, spins)
    return [g for i in spins for j in range(1, num_modes + 1) for g in (a(j, (i,)), ad(j, (i,)))]


def _check_universe(num_modes: int, spins) -> None:
    if int(num_modes) < 1:
        raise InputError("need at least one mode")
    if len(set(spins)) != len(spins) or any(int(i) < 1 for i in spins):
        raise InputError("spin labels must be distinct and 1-based")


# Closure -------------------------------------------------------------------------


class _Span:
    """Incremental orthonormal basis of a complex span over sparse keyed vectors."""

    def __init__(self, tol: float = RANK_TOL):
        self.tol = tol
        self.index: dict = {}
        self.q: list = []

    def _dense(self, el: AlgebraElement) -> np.ndarray:
        for k in el.terms:
            if k not in self.index:
                self.index[k] = len(self.index)
        v = np.zeros(len(self.index), dtype=complex)
        for k, c in el.terms.items():
            v[self.index[k]] = c
        return v

    def try_add(self, el: AlgebraElement) -> bool:
        if el.is_zero():
            return False
        v = self._dense(el)
        scale = np.linalg.norm(v)
        for _ in range(2):  # classical Gram-Schmidt with one reorthogonalization
            for q in self.q:
                qq = q if q.size == v.size else np.pad(q, (0, v.size - q.size))
                v = v - np.vdot(qq, v) * qq
        r = np.linalg.norm(v)
        if r <= self.tol * scale:
            return False
        self.q.append(v / r)
        return True


@dataclass
class GradingReport:
    dimension: int
    spin_orders: dict  # spin order -> sorted tag kinds present
    violations: list  # descriptions of terms breaking the odd/even grading
    has_linear: bool
    has_identity_boson: bool
    pure_spin_masks: list  # masks carrying a motion-independent (tag "1") term
    dimension_by_mask: dict

    def to_text(self) -> str:
        lines = [f"dimension: {self.dimension}"]
        for n in sorted(self.spin_orders):
            lines.append(f"spin order {n}: {', '.join(self.spin_orders[n])}")
        lines.append(f"linear boson terms: {'yes' if self.has_linear else 'no'}")
        lines.append(f"motion-independent terms: {'yes' if self.has_identity_boson else 'no'}")
        if self.pure_spin_masks:
            lines.append("pure spin products: " + ", ".join(
                "".join(f"s{i}" for i in mask_ions(m)) or "1" for m in self.pure_spin_masks))
        lines.append("squeezing grading (odd: AA/DD, even: N): "
                     + ("holds" if not self.violations else f"{len(self.violations)} violations"))
        lines.extend(f"  {v}" for v in self.violations[:20])
        return "\n".join(lines) + "\n"


@dataclass
class ClosureResult:
    basis: list
    converged: bool
    iterations: int
    report: GradingReport
    message: str = ""


def grading_report(basis: list) -> GradingReport:
    orders: dict = {}
    violations = []
    linear = identity = False
    pure = set()
    by_mask: dict = {}
    for idx, el in enumerate(basis):
        for mask, tag in el.terms:
            n = spin_order(mask)
            orders.setdefault(n, set()).add(tag[0])
            by_mask[mask] = by_mask.get(mask, 0) + 1
            if tag[0] in ("A", "D"):
                linear = True
            elif tag[0] == "1":
                identity = True
                pure.add(mask)
            elif (tag[0] in ("AA", "DD")) != (n % 2 == 1):
                violations.append(f"element {idx}: {_tag_str(tag)} with spin order {n}")
    span_by_mask = _dimension_by_mask(basis)
    return GradingReport(len(basis), {n: sorted(v) for n, v in orders.items()}, violations,
                         linear, identity, sorted(pure), span_by_mask)


def _dimension_by_mask(basis: list) -> dict:
    """Rank of the basis restricted to each spin mask."""
    out = {}
    masks = sorted({m for el in basis for m, _ in el.terms})
    for m in masks:
        span = _Span()
        for el in basis:
            span.try_add(AlgebraElement({k: v for k, v in el.terms.items() if k[0] == m}))
        out[m] = len(span.q)
    return out


def closure(generators, max_iters: int = 50) -> ClosureResult:
    """Lie closure of the generators' complex span.

    Each iteration commutes every new basis element with the whole basis and
    keeps the linearly independent results. Stops when an iteration adds
    nothing; reports non-termination after ``max_iters`` iterations.
    """
    span = _Span()
    basis = [g for g in generators if span.try_add(g)]
    frontier = list(range(len(basis)))
    it = 0
    while frontier:
        if it >= max_iters:
            return ClosureResult(basis, False, it, grading_report(basis),
                                 f"closure did not terminate within {max_iters} iterations "
                                 f"(dimension so far {len(basis)})")
        it += 1
        new = []
        fresh = set(frontier)
        size = len(basis)
        for i in frontier:
            for j in range(size):
                if j in fresh and j <= i:
                    continue  # [b_j, b_i] = -[b_i, b_j] is handled once
                c = commutator(basis[i], basis[j])
                if span.try_add(c):
                    basis.append(c)
                    new.append(len(basis) - 1)
        frontier = new
    return ClosureResult(basis, True, it, grading_report(basis), "closed")


def expected_squeezing_dimension(num_modes: int, num_spins: int) -> int:
    """M(2M+1) per spin sector times the 2^(S-1) admissible masks of each parity pattern."""
    return num_modes * (2 * num_modes + 1) * 2 ** (num_spins - 1)

