"""Gaussian chain integrals as bridge moments.

Chaining free heat kernels ``G(1-s_1, w_1) G(s_1-s_2, w_1-w_2) ... G(s_j, w_j)``
and dividing by the total mass ``(4*pi)^{-1/2}`` per coordinate gives the law
of a Brownian bridge with diffusion constant 2 observed at times
``s_1 > ... > s_j``.  Its covariance is ``2 (1 - s_max) s_min`` and every
polynomial moment follows from Isserlis' theorem.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Tuple

from .exact import (
    IndexTuple,
    SimplexPoly,
    as_index_tuple,
    poly_integrate_simplex,
    tuple_factorial,
    tuple_order,
)

DEFAULT_BUDGET = 16


class CapacityError(ValueError):
    """Raised when a tuple exceeds the configured Wick-sum budget."""


@dataclass(frozen=True)
class NormalizedCoefficient:
    """``value * (4*pi)^{-power/2}``."""

    value: Fraction
    power: int

    def __float__(self):
        import math

        return float(self.value) * (4 * math.pi) ** (-self.power / 2)


class BridgeCovariance:
    """Covariance of the bridge at the ordered times ``s_1 > ... > s_j``."""

    def __init__(self, arity: int):
        if arity < 1:
            raise ValueError("arity must be at least 1")
        self.arity = arity

    def entry(self, i: int, k: int) -> SimplexPoly:
        """1-based ``(i, k)`` entry: ``2 (1 - s_min(i,k)) s_max(i,k)``."""
        i, k = min(i, k), max(i, k)
        one_minus = SimplexPoly.constant(self.arity, 1) - SimplexPoly.var(self.arity, i)
        return 2 * one_minus * SimplexPoly.var(self.arity, k)

    def matrix(self):
        return [[self.entry(i, k) for k in range(1, self.arity + 1)] for i in range(1, self.arity + 1)]


@functools.lru_cache(maxsize=None)
def _cov_entry(arity: int, i: int, k: int) -> SimplexPoly:
    return BridgeCovariance(arity).entry(i + 1, k + 1)


@functools.lru_cache(maxsize=None)
def _moment(gamma: Tuple[int, ...]) -> SimplexPoly:
    j = len(gamma)
    if sum(gamma) == 0:
        return SimplexPoly.constant(j, 1)
    if sum(gamma) % 2:
        return SimplexPoly.zero(j)
    # Pair one copy of the first live slot with every remaining copy.
    i = next(idx for idx, g in enumerate(gamma) if g)
    rest = list(gamma)
    rest[i] -= 1
    out = SimplexPoly.zero(j)
    for k, mult in enumerate(rest):
        if not mult:
            continue
        reduced = list(rest)
        reduced[k] -= 1
        out = out + mult * _cov_entry(j, i, k) * _moment(tuple(reduced))
    return out


def wick_moment(exponents: Sequence[int]) -> SimplexPoly:
    """``E[prod_k w_k^{gamma_k}]`` under the bridge covariance, as a polynomial
    in ``s_1..s_j``."""
    gamma = tuple(int(g) for g in exponents)
    if not gamma:
        raise ValueError("need at least one slot")
    if any(g < 0 for g in gamma):
        raise ValueError(f"negative exponent in {gamma!r}")
    return _moment(gamma)


def parity_vanishes(alpha: Sequence[Sequence[int]]) -> bool:
    """True when some coordinate carries an odd total exponent."""
    alpha = as_index_tuple(alpha)
    n = len(alpha[0])
    return any(sum(a[c] for a in alpha) % 2 for c in range(n))


def mirror(alpha: Sequence[Sequence[int]]) -> IndexTuple:
    return tuple(reversed(as_index_tuple(alpha)))


def check_budget(alpha: IndexTuple, budget: int = DEFAULT_BUDGET) -> None:
    j = len(alpha)
    size = tuple_order(alpha) + 2 * j
    if size > budget:
        raise CapacityError(
            f"tuple with j={j} and |alpha|={tuple_order(alpha)} needs budget {size} > {budget}"
        )


@functools.lru_cache(maxsize=None)
def _coefficient_value(alpha: IndexTuple) -> Fraction:
    j = len(alpha)
    n = len(alpha[0])
    integrand = SimplexPoly.constant(j, 1)
    for c in range(n):
        gamma = tuple(a[c] for a in alpha)
        if sum(gamma):
            integrand = integrand * _moment(gamma)
    return poly_integrate_simplex(integrand) / tuple_factorial(alpha)


def coefficient(alpha: Sequence[Sequence[int]], n: int | None = None,
                budget: int = DEFAULT_BUDGET) -> NormalizedCoefficient:
    """Exact Gaussian chain coefficient ``c_alpha`` for the free Laplacian.

    ``c_alpha = value * (4*pi)^{-n/2}``; ``value`` is zero whenever some
    coordinate exponent sum is odd.
    """
    alpha = as_index_tuple(alpha)
    dim = len(alpha[0])
    if n is not None and n != dim:
        raise ValueError(f"tuple has dimension {dim}, expected {n}")
    check_budget(alpha, budget)
    if parity_vanishes(alpha):
        return NormalizedCoefficient(Fraction(0), dim)
    return NormalizedCoefficient(_coefficient_value(alpha), dim)
