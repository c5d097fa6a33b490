"""Heat-trace invariants as exact linear combinations of integrated
differential monomials ``int prod_k d^{alpha_k} V dx``.

A monomial is stored as a sorted tuple of multi-indices, one per factor.
Every expression carries an overall ``(4*pi)^{-n/2}`` that is kept out of the
rational coefficients and only applied at numerical evaluation.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .bridge import DEFAULT_BUDGET, CapacityError, coefficient
from .exact import IndexTuple, MultiIndex, enumerate_index_tuples, unit
from .potential import DerivativeCache, PotentialSample

DiffMonomial = Tuple[MultiIndex, ...]


def monomial(factors: Iterable[Sequence[int]]) -> DiffMonomial:
    """Canonical storage for ``prod d^{alpha_k} V``: factors sorted."""
    out = tuple(sorted(tuple(int(v) for v in f) for f in factors))
    if not out:
        raise ValueError("a monomial needs at least one factor")
    return out


def format_monomial(m: DiffMonomial) -> str:
    parts = []
    for f in m:
        if not any(f):
            parts.append("V")
        else:
            parts.append("D[" + ",".join(str(v) for v in f) + "]V")
    return "*".join(parts)


@dataclass(frozen=True)
class InvariantExpression:
    """``(4*pi)^{-power/2} * sum_m coeff_m * int m``."""

    terms: Mapping[DiffMonomial, Fraction]
    n: int
    order: Optional[int] = None
    power: int = field(default=-1)

    def __post_init__(self):
        clean: Dict[DiffMonomial, Fraction] = {}
        for m, c in self.terms.items():
            m = monomial(m)
            if any(len(f) != self.n for f in m):
                raise ValueError(f"monomial {m!r} is not in dimension {self.n}")
            clean[m] = clean.get(m, Fraction(0)) + Fraction(c)
        clean = {m: c for m, c in sorted(clean.items()) if c != 0}
        object.__setattr__(self, "terms", clean)
        if self.power < 0:
            object.__setattr__(self, "power", self.n)

    def __eq__(self, other):
        if not isinstance(other, InvariantExpression):
            return NotImplemented
        return (self.n, self.power, dict(self.terms)) == (other.n, other.power, dict(other.terms))

    def __hash__(self):
        return hash((self.n, self.power, tuple(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "InvariantExpression") -> "InvariantExpression":
        if (self.n, self.power) != (other.n, other.power):
            raise ValueError("cannot add expressions with different normalisations")
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, Fraction(0)) + c
        order = self.order if self.order == other.order else None
        return InvariantExpression(terms, self.n, order, self.power)

    def __neg__(self):
        return InvariantExpression({m: -c for m, c in self.terms.items()}, self.n, self.order, self.power)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, factor) -> "InvariantExpression":
        return InvariantExpression({m: c * factor for m, c in self.terms.items()},
                                   self.n, self.order, self.power)

    def max_derivative_order(self) -> int:
        return max((sum(f) for m in self.terms for f in m), default=0)

    def __str__(self):
        if not self.terms:
            return "0"
        body = " + ".join(f"({c})*[{format_monomial(m)}]" for m, c in self.terms.items())
        return f"(4pi)^(-{self.power}/2) * ({body})"

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "dimension": self.n,
            "normalization_power": self.power,
            "terms": [
                {
                    "factors": [list(f) for f in m],
                    "coefficient": {"num": str(c.numerator), "den": str(c.denominator)},
                    "label": format_monomial(m),
                }
                for m, c in self.terms.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "InvariantExpression":
        terms = {}
        for t in data["terms"]:
            c = Fraction(int(t["coefficient"]["num"]), int(t["coefficient"]["den"]))
            m = monomial(t["factors"])
            terms[m] = terms.get(m, Fraction(0)) + c
        return cls(terms, int(data["dimension"]), data.get("order"), int(data["normalization_power"]))


def expression(terms: Mapping, n: int, order: Optional[int] = None) -> InvariantExpression:
    return InvariantExpression({monomial(m): Fraction(c) for m, c in terms.items()}, n, order)


# -- assembly -------------------------------------------------------------------


def chain_sum(j: int, n: int, total: int, budget: int = DEFAULT_BUDGET) -> InvariantExpression:
    """``sum_{|alpha^j| = total} c_alpha * [prod d^{alpha_k} V]`` (no sign)."""
    if total + 2 * j > budget:
        raise CapacityError(
            f"j={j} with |alpha|={total} needs budget {total + 2 * j} > {budget}"
        )
    terms: Dict[DiffMonomial, Fraction] = defaultdict(Fraction)
    for alpha in enumerate_index_tuples(j, n, total):
        c = coefficient(alpha, n, budget)
        if c.value:
            terms[monomial(alpha)] += c.value
    return InvariantExpression(dict(terms), n)


def assemble_invariant(order: int, n: int, budget: int = DEFAULT_BUDGET) -> InvariantExpression:
    """The order-``order`` heat invariant as an exact expression.

    ``sum_{1 <= j <= order/2} (-1)^j sum_{|alpha^j| = order - 2j} c_alpha [prod d^{alpha_k} V]``.
    Odd orders give the zero expression.
    """
    if order < 2 or n < 1:
        raise ValueError(f"need order >= 2 and n >= 1 (got {order}, {n})")
    out = InvariantExpression({}, n, order)
    if order % 2:
        return out
    for j in range(1, order // 2 + 1):
        part = chain_sum(j, n, order - 2 * j, budget)
        out = out + (part if j % 2 == 0 else -part)
    return InvariantExpression(out.terms, n, order)


# -- integration by parts -------------------------------------------------------


def _quadratic_normal_form(m: DiffMonomial) -> Tuple[int, Optional[DiffMonomial]]:
    """``int d^a V d^b V = (-1)^{|a|} int V d^{a+b} V``, so a quadratic term is
    fixed by ``gamma = a + b`` up to sign.  Return ``(sign, representative)``."""
    a, b = m
    gamma = tuple(x + y for x, y in zip(a, b))
    if sum(gamma) % 2:
        return 0, None
    half = [g // 2 for g in gamma]
    odd = [c for c, g in enumerate(gamma) if g % 2]
    for c in odd[: len(odd) // 2]:
        half[c] += 1
    a2 = tuple(half)
    b2 = tuple(g - h for g, h in zip(gamma, a2))
    sign = -1 if (sum(a) + sum(a2)) % 2 else 1
    return sign, monomial((a2, b2))


def _greedy_step(m: DiffMonomial) -> Optional[List[Tuple[int, DiffMonomial]]]:
    """One product-rule move off the unique highest-order factor, or None.

    Applies only when that factor exceeds every other by at least two, so
    each produced monomial has strictly smaller maximal factor order.
    """
    orders = sorted((sum(f), f, i) for i, f in enumerate(m))
    top_order, top, top_i = orders[-1]
    second = orders[-2][0]
    if top_order - second < 2:
        return None
    # Move the derivative along the coordinate the top factor uses most.
    c = max(range(len(top)), key=lambda k: (top[k], -k))
    lowered = tuple(v - (k == c) for k, v in enumerate(top))
    out = []
    for i, f in enumerate(m):
        if i == top_i:
            continue
        raised = tuple(v + (k == c) for k, v in enumerate(f))
        rest = [g for k, g in enumerate(m) if k not in (i, top_i)]
        out.append((-1, monomial(rest + [lowered, raised])))
    return out


def ibp_canonicalize(expr: InvariantExpression) -> InvariantExpression:
    """Rewrite ``expr`` by integration by parts (compact support of ``V``).

    Rules, applied to a fixed point:

    * a single factor with at least one derivative integrates to zero;
    * a quadratic monomial is replaced by its balanced representative
      ``[d^a V d^b V]`` with ``a + b`` fixed, ``|a|`` and ``|b|`` as equal as
      possible and odd coordinates split lowest-index-first into ``a``;
    * in higher degree, one derivative at a time is moved off a unique
      top-order factor onto the others while it exceeds the runner-up by two
      or more; the coordinate moved is the one the factor uses most (lowest
      index on ties).
    """
    out: Dict[DiffMonomial, Fraction] = defaultdict(Fraction)
    stack: List[Tuple[DiffMonomial, Fraction]] = list(expr.terms.items())
    while stack:
        m, c = stack.pop()
        if len(m) == 1:
            if sum(m[0]) == 0:
                out[m] += c
            continue
        if len(m) == 2:
            sign, rep = _quadratic_normal_form(m)
            if sign:
                out[rep] += sign * c
            continue
        step = _greedy_step(m)
        if step is None:
            out[m] += c
        else:
            stack.extend((m2, c * s) for s, m2 in step)
    return InvariantExpression(dict(out), expr.n, expr.order, expr.power)


def gradient_energy_expression(n: int, coefficient_: Fraction = Fraction(1)) -> InvariantExpression:
    """``coefficient * sum_k [d_k V * d_k V]``."""
    return InvariantExpression(
        {monomial((unit(n, k), unit(n, k))): coefficient_ for k in range(n)}, n
    )


def expected_p6(n: int) -> InvariantExpression:
    """Closed form of the canonical order-6 invariant."""
    zero = (0,) * n
    terms = {monomial((zero, zero, zero)): Fraction(-1, 6)}
    terms.update(gradient_energy_expression(n, Fraction(-1, 12)).terms)
    return InvariantExpression(terms, n, 6)


def second_order_hessian_split(expr: InvariantExpression) -> Dict[str, Fraction]:
    """Split a canonical quartic-derivative quadratic expression into the
    coefficient of ``sum_k [(d_kk V)^2]`` and, per ordered pair ``k != l``, of
    ``[(d_kl V)^2]``.  Monomials of any other shape go to ``"other"``."""
    diag: Dict[int, Fraction] = {}
    mixed: Dict[Tuple[int, int], Fraction] = {}
    other = Fraction(0)
    for m, c in expr.terms.items():
        if len(m) == 2 and m[0] == m[1] and sum(m[0]) == 2:
            f = m[0]
            nz = [k for k, v in enumerate(f) if v]
            if len(nz) == 1:
                diag[nz[0]] = c
                continue
            if len(nz) == 2:
                mixed[tuple(nz)] = c
                continue
        other += abs(c)
    n = expr.n
    diag_vals = {diag.get(k, Fraction(0)) for k in range(n)}
    mixed_vals = {mixed.get((k, l), Fraction(0)) / 2 for k in range(n) for l in range(k + 1, n)}
    return {
        "diagonal": diag_vals.pop() if len(diag_vals) == 1 else None,
        # written as sum over ordered pairs k != l, each unordered pair counts twice
        "off_diagonal": (mixed_vals.pop() if len(mixed_vals) == 1 else None) if n > 1 else None,
        "other": other,
    }


# -- numerical evaluation -------------------------------------------------------


def evaluate_terms(expr: InvariantExpression, V: PotentialSample,
                   cache: Optional[DerivativeCache] = None) -> Dict[DiffMonomial, float]:
    """Quadrature of each monomial (without coefficients or normalisation)."""
    if expr.n != V.n:
        raise ValueError(f"expression is {expr.n}-dimensional, potential is {V.n}-dimensional")
    cache = cache or DerivativeCache(V)
    out = {}
    for m in expr.terms:
        integrand = np.ones(V.values.shape)
        for f in m:
            integrand = integrand * cache[f]
        out[m] = V.integrate(integrand)
    return out


def evaluate_invariant(expr: InvariantExpression, V: PotentialSample,
                       cache: Optional[DerivativeCache] = None) -> float:
    """Numerical value of ``expr`` on ``V``, normalisation included."""
    integrals = evaluate_terms(expr, V, cache)
    total = math.fsum(float(c) * integrals[m] for m, c in expr.terms.items())
    return total * (4 * math.pi) ** (-expr.power / 2)


@dataclass(frozen=True)
class H2Diagnostic:
    lhs: float
    p8: float
    grad_energy: float
    sup_norm: float
    hessian_energy: float = 0.0
    quartic: float = 0.0

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "p8": self.p8,
            "grad_energy": self.grad_energy,
            "sup_norm": self.sup_norm,
            "hessian_energy": self.hessian_energy,
            "quartic": self.quartic,
        }


def hessian_indices(n: int) -> List[MultiIndex]:
    return [a for a in (tuple(x) for x in enumerate_index_tuples(1, n, 2)) for a in a]


def h2_diagnostic(V: PotentialSample, p8: Optional[InvariantExpression] = None) -> H2Diagnostic:
    """Ingredients of the H^2 control of a potential by the order-8 invariant.

    ``lhs = sum_{|gamma|=2} int (d^gamma V)^2 + int V^4``.  No constant is
    applied and no inequality is asserted.
    """
    n = V.n
    cache = DerivativeCache(V)
    if p8 is None:
        p8 = ibp_canonicalize(assemble_invariant(8, n))
    hess = math.fsum(V.integrate(cache[g] ** 2) for g in hessian_indices(n))
    quartic = V.integrate(V.values ** 4)
    grad = math.fsum(V.integrate(cache[unit(n, k)] ** 2) for k in range(n))
    return H2Diagnostic(
        lhs=hess + quartic,
        p8=evaluate_invariant(p8, V, cache),
        grad_energy=grad,
        sup_norm=V.sup_norm,
        hessian_energy=hess,
        quartic=quartic,
    )
