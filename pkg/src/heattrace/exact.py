"""Exact arithmetic layer: multi-indices, index tuples and polynomials in
ordered simplex variables ``s_1 > s_2 > ... > s_j``.

Rationals are :class:`fractions.Fraction` throughout.  Multi-indices are
plain tuples of non-negative ints; an index tuple is a tuple of
multi-indices of equal length.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple, Union

Rational = Fraction
MultiIndex = Tuple[int, ...]
IndexTuple = Tuple[MultiIndex, ...]

Scalar = Union[int, Fraction]


# -- multi-index combinatorics -------------------------------------------------


def mi_order(alpha: Sequence[int]) -> int:
    return sum(alpha)


def mi_factorial(alpha: Sequence[int]) -> int:
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out


def tuple_order(alpha: Sequence[Sequence[int]]) -> int:
    return sum(sum(a) for a in alpha)


def tuple_factorial(alpha: Sequence[Sequence[int]]) -> int:
    out = 1
    for a in alpha:
        out *= mi_factorial(a)
    return out


def unit(n: int, k: int, scale: int = 1) -> MultiIndex:
    """The multi-index ``scale * e_k`` in dimension ``n`` (0-based ``k``)."""
    return tuple(scale if i == k else 0 for i in range(n))


def as_index_tuple(entries: Iterable[Iterable[int]]) -> IndexTuple:
    """Normalise nested sequences into an index tuple, checking dimensions."""
    out = tuple(tuple(int(v) for v in e) for e in entries)
    if not out:
        raise ValueError("an index tuple needs at least one entry")
    n = len(out[0])
    if n == 0 or any(len(e) != n for e in out):
        raise ValueError(f"entries must share a positive dimension: {out!r}")
    if any(v < 0 for e in out for v in e):
        raise ValueError(f"negative exponent in {out!r}")
    return out


def _weak_compositions(total: int, slots: int) -> Iterator[Tuple[int, ...]]:
    # Lexicographic order on the produced vectors.
    if slots == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _weak_compositions(total - first, slots - 1):
            yield (first,) + rest


def enumerate_index_tuples(j: int, n: int, total: int) -> List[IndexTuple]:
    """All index tuples of ``j`` entries in dimension ``n`` with order ``total``.

    The result is sorted lexicographically on the flattened exponent vector,
    so ``(j=2, n=1, total=2)`` gives ``[((0,), (2,)), ((1,), (1,)), ((2,), (0,))]``.
    """
    if j < 1 or n < 1 or total < 0:
        raise ValueError(f"need j >= 1, n >= 1, total >= 0 (got {j}, {n}, {total})")
    out = []
    for flat in _weak_compositions(total, j * n):
        out.append(tuple(flat[k * n:(k + 1) * n] for k in range(j)))
    return out


def count_index_tuples(j: int, n: int, total: int) -> int:
    """Stars-and-bars count matching :func:`enumerate_index_tuples`."""
    return math.comb(total + j * n - 1, j * n - 1)


# -- polynomials over simplex variables ---------------------------------------


Exponent = Tuple[int, ...]


def _clean(terms: Mapping[Exponent, Fraction]) -> Dict[Exponent, Fraction]:
    return {e: Fraction(c) for e, c in terms.items() if c != 0}


@dataclass(frozen=True)
class SimplexPoly:
    """Sparse polynomial in ``s_1, ..., s_arity`` with rational coefficients.

    Variable ``s_i`` is stored at exponent position ``i - 1``.  Instances are
    immutable; zero coefficients are never stored.
    """

    arity: int
    terms: Mapping[Exponent, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if self.arity < 0:
            raise ValueError("arity must be non-negative")
        clean = _clean(self.terms)
        for e in clean:
            if len(e) != self.arity or any(k < 0 for k in e):
                raise ValueError(f"bad exponent {e!r} for arity {self.arity}")
        object.__setattr__(self, "terms", clean)

    # constructors

    @classmethod
    def constant(cls, arity: int, value: Scalar) -> "SimplexPoly":
        return cls(arity, {(0,) * arity: Fraction(value)})

    @classmethod
    def zero(cls, arity: int) -> "SimplexPoly":
        return cls(arity, {})

    @classmethod
    def var(cls, arity: int, i: int) -> "SimplexPoly":
        """The variable ``s_i`` (1-based, as in the nested integrals)."""
        if not 1 <= i <= arity:
            raise ValueError(f"s_{i} is not a variable of arity {arity}")
        e = [0] * arity
        e[i - 1] = 1
        return cls(arity, {tuple(e): Fraction(1)})

    # algebra

    def _coerce(self, other) -> "SimplexPoly":
        if isinstance(other, SimplexPoly):
            if other.arity != self.arity:
                raise ValueError(f"arity mismatch {self.arity} vs {other.arity}")
            return other
        if isinstance(other, (int, Fraction)):
            return SimplexPoly.constant(self.arity, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return SimplexPoly(self.arity, out)

    __radd__ = __add__

    def __neg__(self):
        return SimplexPoly(self.arity, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: Dict[Exponent, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return SimplexPoly(self.arity, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        out = SimplexPoly.constant(self.arity, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = SimplexPoly.constant(self.arity, other)
        if not isinstance(other, SimplexPoly):
            return NotImplemented
        return self.arity == other.arity and self.terms == other.terms

    def __hash__(self):
        return hash((self.arity, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def evaluate(self, point: Sequence[Scalar]):
        """Evaluate at ``(s_1, ..., s_arity)``; exact for rational input."""
        if len(point) != self.arity:
            raise ValueError("point has the wrong length")
        total = 0
        for e, c in self.terms.items():
            term = c
            for x, k in zip(point, e):
                term = term * x ** k
            total = total + term
        return total

    def substitute(self, images: Sequence["SimplexPoly"]) -> "SimplexPoly":
        """Compose: replace ``s_i`` by ``images[i-1]`` (all of one arity)."""
        if len(images) != self.arity:
            raise ValueError("need one image per variable")
        arity = images[0].arity if images else 0
        out = SimplexPoly.zero(arity)
        powers: Dict[Tuple[int, int], SimplexPoly] = {}
        for e, c in self.terms.items():
            term = SimplexPoly.constant(arity, c)
            for i, k in enumerate(e):
                if k:
                    key = (i, k)
                    if key not in powers:
                        powers[key] = images[i] ** k
                    term = term * powers[key]
            out = out + term
        return out

    def sorted_terms(self) -> List[Tuple[Exponent, Fraction]]:
        return sorted(self.terms.items())

    def __repr__(self):
        if not self.terms:
            return f"SimplexPoly({self.arity}, 0)"
        parts = []
        for e, c in sorted(self.terms.items(), reverse=True):
            mono = "*".join(
                f"s{i + 1}" + (f"^{k}" if k > 1 else "") for i, k in enumerate(e) if k
            )
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return f"SimplexPoly({self.arity}, {' + '.join(parts)})"


def poly_integrate_simplex(p: SimplexPoly) -> Fraction:
    """Exact integral of ``p`` over ``0 < s_j < ... < s_1 < 1``.

    Integrates out ``s_j`` first (upper limit ``s_{j-1}``), then ``s_{j-1}``,
    and so on down to ``s_1`` over ``(0, 1)``.
    """
    j = p.arity
    if j < 1:
        raise ValueError("integration needs at least one simplex variable")
    # A monomial collapses to a single power of the outermost live variable:
    # carry (exponents of s_1..s_{i-1}, power of s_i) -> coefficient.
    total = Fraction(0)
    for e, c in p.terms.items():
        carry = 0
        coef = Fraction(c)
        for i in range(j - 1, -1, -1):
            k = e[i] + carry + 1
            coef /= k
            carry = k
        total += coef
    return total


def simplex_volume(j: int) -> Fraction:
    return Fraction(1, math.factorial(j))


def product(polys: Iterable[SimplexPoly], arity: int) -> SimplexPoly:
    out = SimplexPoly.constant(arity, 1)
    for p in polys:
        out = out * p
    return out


def iter_tuples_up_to(j_max: int, n_max: int, order_max: int) -> Iterator[Tuple[int, int, IndexTuple]]:
    """Yield ``(j, n, alpha)`` for every tuple with ``j <= j_max``, ``n <= n_max``
    and ``|alpha| <= order_max``."""
    for j, n in itertools.product(range(1, j_max + 1), range(1, n_max + 1)):
        for total in range(order_max + 1):
            for alpha in enumerate_index_tuples(j, n, total):
                yield j, n, alpha
