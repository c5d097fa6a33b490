"""Closed-form two-parameter Gaussian integrals by explicit recurrences.

``I_{a,b}(s_1, s_2) = int int x^a y^b g(1-s_1, x) g(s_1-s_2, x-y) g(s_2, y) dx dy``
with ``g`` the one-dimensional heat kernel.  Polynomials returned here are
divided by the mass ``(4*pi)^{-1/2}``.  This module is deliberately
independent of :mod:`heattrace.bridge`, which it is used to cross-check.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .bridge import NormalizedCoefficient
from .exact import SimplexPoly, poly_integrate_simplex

S1 = SimplexPoly.var(2, 1)
S2 = SimplexPoly.var(2, 2)
ONE = SimplexPoly.constant(2, 1)

METHODS = ("iii", "ii", "iv")


@dataclass(frozen=True)
class TwoParamIntegral:
    poly: SimplexPoly
    power: int = 1


def _even_zero(a: int) -> SimplexPoly:
    # I_{a,0} = (a)! / (a/2)! * s_1^{a/2} (1 - s_1)^{a/2} for even a
    half = a // 2
    c = Fraction(math.factorial(a), math.factorial(half))
    return c * S1 ** half * (ONE - S1) ** half


def _reflect(p: SimplexPoly) -> SimplexPoly:
    """``p(s_1, s_2) -> p(1 - s_2, 1 - s_1)``."""
    return p.substitute([ONE - S2, ONE - S1])


@functools.lru_cache(maxsize=None)
def _closed(a: int, b: int, method: str) -> SimplexPoly:
    if a < 0 or b < 0:
        raise ValueError("negative index")
    if (a + b) % 2:
        return SimplexPoly.zero(2)
    if a == 0 and b == 0:
        return ONE
    if b == 0:
        return _even_zero(a)
    if a == 0:
        return _reflect(_even_zero(b))
    if a == 1 and b == 1:
        return 2 * (ONE - S1) * S2

    if method == "ii":
        out = (a + b - 1) * _closed(a - 1, b - 1, method)
        if a >= 2 and b >= 2:
            out = out + 2 * (a - 1) * (b - 1) * (S1 - S2) * _closed(a - 2, b - 2, method)
        return 2 * (ONE - S1) * S2 * out

    if method == "iv" and a >= 2:
        out = (a + b - 1) * S1 * _closed(a - 2, b, method)
        if b >= 2:
            out = out - 2 * b * (b - 1) * S2 * (S1 - S2) * _closed(a - 2, b - 2, method)
        return 2 * (ONE - S1) * out

    # default path; the (a - 1) factor kills the I_{a-2,b} term when a == 1
    out = b * S2 * _closed(a - 1, b - 1, method)
    if a >= 2:
        out = out + (a - 1) * S1 * _closed(a - 2, b, method)
    return 2 * (ONE - S1) * out


def i_closed(alpha: int, beta: int, method: str = "iii") -> TwoParamIntegral:
    """Normalised ``I_{alpha,beta}`` as an exact polynomial in ``(s_1, s_2)``.

    ``method`` picks the reduction used for ``alpha, beta >= 1``: ``"iii"``
    (default, lowers ``alpha``), ``"ii"`` (lowers both) or ``"iv"``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return TwoParamIntegral(_closed(int(alpha), int(beta), method))


def script_i(alpha: Sequence[int], beta: Sequence[int], method: str = "iii") -> NormalizedCoefficient:
    """Simplex integral of ``prod_k I_{alpha_k, beta_k}``; power ``n``."""
    if len(alpha) != len(beta) or not alpha:
        raise ValueError("alpha and beta need the same positive dimension")
    integrand = ONE
    for a, b in zip(alpha, beta):
        integrand = integrand * i_closed(a, b, method).poly
    return NormalizedCoefficient(poly_integrate_simplex(integrand), len(alpha))
