"""Exact small-time heat invariants of Schroedinger operators and a
numerical laboratory that checks them against discretised heat traces."""

from .bridge import CapacityError, NormalizedCoefficient, coefficient, mirror, parity_vanishes, wick_moment
from .exact import Rational, SimplexPoly, enumerate_index_tuples, poly_integrate_simplex
from .invariants import (
    InvariantExpression,
    assemble_invariant,
    evaluate_invariant,
    h2_diagnostic,
    ibp_canonicalize,
)
from .potential import Bump, ConfigurationError, Grid, Potential, sample
from .recurrence import i_closed, script_i

__version__ = "0.1.0"

__all__ = [
    "Bump",
    "CapacityError",
    "ConfigurationError",
    "Grid",
    "InvariantExpression",
    "NormalizedCoefficient",
    "Potential",
    "Rational",
    "SimplexPoly",
    "assemble_invariant",
    "coefficient",
    "enumerate_index_tuples",
    "evaluate_invariant",
    "h2_diagnostic",
    "i_closed",
    "ibp_canonicalize",
    "mirror",
    "parity_vanishes",
    "poly_integrate_simplex",
    "sample",
    "script_i",
    "wick_moment",
    "__version__",
]
