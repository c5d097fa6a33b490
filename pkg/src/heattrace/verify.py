"""Verification suites behind ``heattrace verify``.

Each check returns a :class:`Check`; informative checks record a comparison
but never fail the run.  Reports contain no timings or paths, so identical
inputs give byte-identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .bridge import coefficient, mirror, parity_vanishes, wick_moment
from .exact import as_index_tuple, enumerate_index_tuples
from .invariants import (
    InvariantExpression,
    assemble_invariant,
    chain_sum,
    evaluate_invariant,
    expected_p6,
    gradient_energy_expression,
    ibp_canonicalize,
    second_order_hessian_split,
)
from .potential import Bump, Potential, sample
from .recurrence import i_closed


@dataclass
class Check:
    name: str
    passed: bool
    detail: Dict = field(default_factory=dict)
    informative: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "informative": self.informative,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class NumericTolerances:
    fit_relative: Sequence[float] = (0.01, 0.01, 0.05)
    duhamel_slack: float = 1e-6
    boundary_ratio_tolerance: float = 0.5


def load_reference_table(path: Optional[str] = None) -> dict:
    if path is None:
        text = resources.files("heattrace").joinpath("data/reference_values.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return json.loads(text)


def _frac(s) -> Fraction:
    return Fraction(str(s))


# -- exact suites ----------------------------------------------------------------


def check_coefficient_table(table: dict) -> Check:
    rows = []
    ok = True
    for entry in table["coefficients"]:
        alpha = as_index_tuple(entry["tuple"])
        expected = _frac(entry["value"])
        got = coefficient(alpha).value
        good = got == expected
        ok &= good
        rows.append({"name": entry["name"], "expected": str(expected), "engine": str(got), "ok": good})
    failing = [r["name"] for r in rows if not r["ok"]]
    return Check("coefficient_table", ok, {"rows": rows, "failing": failing})


def check_gradient_identity(n_max: int = 3) -> Check:
    detail = {}
    ok = True
    for n in range(1, n_max + 1):
        got = ibp_canonicalize(chain_sum(2, n, 2))
        want = gradient_energy_expression(n, Fraction(-1, 12))
        detail[str(n)] = str(got)
        ok &= got == want
    return Check("gradient_identity", ok, detail)


def check_oracle_equivalence(max_total: int = 10, alt_max: int = 6) -> Check:
    mismatches = []
    for a in range(max_total + 1):
        for b in range(max_total + 1 - a):
            poly = i_closed(a, b).poly
            if poly != wick_moment((a, b)):
                mismatches.append(f"iii:{a},{b}")
            if (a + b) % 2 and not poly.is_zero():
                mismatches.append(f"odd:{a},{b}")
    for a in range(alt_max + 1):
        for b in range(alt_max + 1):
            base = i_closed(a, b).poly
            for method in ("ii", "iv"):
                if i_closed(a, b, method).poly != base:
                    mismatches.append(f"{method}:{a},{b}")
    return Check("oracle_equivalence", not mismatches, {"mismatches": mismatches})


def check_parity_mirror(order_max: int = 5, j_max: int = 3, n_max: int = 2) -> Check:
    count = 0
    failures = []
    for j in range(1, j_max + 1):
        for n in range(1, n_max + 1):
            for total in range(order_max + 1):
                for alpha in enumerate_index_tuples(j, n, total):
                    count += 1
                    c = coefficient(alpha).value
                    if parity_vanishes(alpha) and c != 0:
                        failures.append(f"parity:{alpha}")
                    if coefficient(mirror(alpha)).value != c:
                        failures.append(f"mirror:{alpha}")
    return Check("parity_mirror", not failures, {"tuples": count, "failures": failures})


def check_assembled_invariants(n_max: int = 3) -> Check:
    detail = {}
    ok = True
    for n in range(1, n_max + 1):
        zero = (0,) * n
        p2 = ibp_canonicalize(assemble_invariant(2, n))
        p4 = ibp_canonicalize(assemble_invariant(4, n))
        p6 = ibp_canonicalize(assemble_invariant(6, n))
        odd = [assemble_invariant(m, n).is_zero() for m in (3, 5, 7)]
        good = {
            "order2": p2 == InvariantExpression({(zero,): Fraction(-1)}, n),
            "order4": p4 == InvariantExpression({(zero, zero): Fraction(1, 2)}, n),
            "odd_orders_zero": all(odd),
            "order6": p6 == expected_p6(n),
        }
        ok &= all(good.values())
        detail[str(n)] = {"checks": good, "order6": str(p6)}
    return Check("assembled_invariants", ok, detail)


def compare_published_quartic(table: dict, n_max: int = 3) -> Check:
    """Engine's quartic-derivative quadratic sum against the published split."""
    published = {k: _frac(v) for k, v in table["published_quartic_quadratic_split"].items()}
    detail = {"published": {k: str(v) for k, v in published.items()}}
    agree = True
    for n in range(1, n_max + 1):
        split = second_order_hessian_split(ibp_canonicalize(chain_sum(2, n, 4)))
        row = {k: (None if v is None else str(v)) for k, v in split.items()}
        row["diagonal_agrees"] = split["diagonal"] == published["diagonal"]
        if n > 1:
            row["off_diagonal_agrees"] = split["off_diagonal"] == published["off_diagonal"]
            agree &= row["off_diagonal_agrees"]
        agree &= row["diagonal_agrees"]
        detail[str(n)] = row
    detail["discrepancy"] = not agree
    return Check("published_quartic_split", True, detail, informative=True)


def compare_published_order6(table: dict) -> Check:
    published = InvariantExpression.from_dict(table["published_order6"])
    engine = ibp_canonicalize(assemble_invariant(6, published.n))
    diff = engine - published
    return Check(
        "published_order6",
        True,
        {
            "engine": str(engine),
            "published": str(published),
            "difference": str(diff),
            "discrepancy": not diff.is_zero(),
        },
        informative=True,
    )


EXACT_SUITE: List[Callable[[dict], Check]] = [
    check_coefficient_table,
    lambda table: check_gradient_identity(),
    lambda table: check_oracle_equivalence(),
    lambda table: check_parity_mirror(),
    lambda table: check_assembled_invariants(),
    compare_published_quartic,
    compare_published_order6,
]


# -- numeric suites ---------------------------------------------------------------


def check_coefficient_recovery(tol: NumericTolerances) -> Check:
    from .spectral import DomainSpec, discretize, fit_expansion, trace_diff

    domain = DomainSpec(1, "circle", (2 * math.pi,), 1024)
    V = sample(Potential((Bump((math.pi,), 1.5, 1.0),)), domain.grid)
    model = discretize(domain, V=V)
    series = trace_diff(model, np.logspace(-3, -1, 40))
    report = fit_expansion(series, 1, [1, 2, 3, 4, 5])
    rows = []
    ok = True
    for k, rel_tol in zip((1, 2, 3), tol.fit_relative):
        ref = evaluate_invariant(ibp_canonicalize(assemble_invariant(2 * k, 1)), V)
        est = report.estimates[k - 1]
        rel = abs(est / ref - 1)
        ok &= rel <= rel_tol
        rows.append({"k": k, "fitted": est, "invariant": ref, "relative_error": rel, "tolerance": rel_tol})
    return Check("coefficient_recovery", ok, {"rows": rows, "condition_number": report.condition_number})


def check_duhamel_bound(tol: NumericTolerances) -> Check:
    from .spectral import (
        DomainSpec,
        discretize,
        duhamel_bound,
        duhamel_tail_bound,
        duhamel_terms,
        trace_diff_at,
    )

    domain = DomainSpec(1, "interval", (2 * math.pi,), 256, 0.5)
    V = sample(Potential((Bump((math.pi,), 2.0, 3.0),)), domain.grid, 0.5)
    model = discretize(domain, V=V, eigenvectors=True)
    slack = 1 + tol.duhamel_slack
    rows = []
    ok = True
    for t in np.logspace(-3, -1, 9):
        t = float(t)
        terms = duhamel_terms(model, t, 2)
        z = trace_diff_at(model, t)
        b1, b2 = duhamel_bound(model, t, 1), duhamel_bound(model, t, 2)
        tail = duhamel_tail_bound(model, t, 3)
        rest = abs(z - terms[1] - terms[2])
        good = abs(terms[1]) <= b1 * slack and abs(terms[2]) <= b2 * slack and rest <= tail * slack
        ok &= good
        rows.append({"t": t, "A1": terms[1], "A2": terms[2], "z": z, "bound1": b1,
                     "bound2": b2, "remainder": rest, "tail_bound": tail, "ok": good})
    return Check("duhamel_bound", ok, {"rows": rows})


def boundary_experiment(margin: float, length: float = 2 * math.pi, points: int = 512,
                        amplitude: float = 1.0, t_scaled=(1 / 15, 1 / 1.5, 25),
                        noise_factor: float = 1000.0):
    from .spectral import boundary_gap, discretize, matched_pair

    bump = Bump((length / 2,), length / 2 - margin, amplitude)
    dirichlet, periodic, vd, vp = matched_pair(Potential((bump,)), length, points, margin)
    md = discretize(dirichlet, V=vd, scheme="fd")
    mp = discretize(periodic, V=vp, scheme="fd")
    lo, hi, count = t_scaled
    t = np.logspace(math.log10(lo * margin ** 2), math.log10(hi * margin ** 2), int(count))
    return boundary_gap(md, mp, t, noise_factor)


def check_boundary_insensitivity(tol: NumericTolerances) -> Check:
    small = boundary_experiment(0.5)
    large = boundary_experiment(1.0)
    ratio = large.slope / small.slope
    good = {
        "monotone": small.monotone and large.monotone,
        "negative_slopes": small.slope < 0 and large.slope < 0,
        "slope_grows": abs(large.slope) > abs(small.slope),
        "ratio_within_tolerance": abs(ratio / 4 - 1) <= tol.boundary_ratio_tolerance,
    }
    return Check(
        "boundary_insensitivity",
        all(good.values()),
        {
            "checks": good,
            "slope_margin_0.5": small.slope,
            "slope_margin_1.0": large.slope,
            "slope_ratio": ratio,
            "resolved_points": [int(small.resolved.sum()), int(large.resolved.sum())],
        },
    )


NUMERIC_SUITE = [check_coefficient_recovery, check_duhamel_bound, check_boundary_insensitivity]


def run_verify(numeric: bool = False, table_path: Optional[str] = None,
               tolerances: Optional[NumericTolerances] = None) -> List[Check]:
    table = load_reference_table(table_path)
    checks = [fn(table) for fn in EXACT_SUITE]
    if numeric:
        tol = tolerances or NumericTolerances()
        checks.extend(fn(tol) for fn in NUMERIC_SUITE)
    return checks


def report_dict(checks: Sequence[Check], meta: dict) -> dict:
    failed = [c.name for c in checks if not c.passed]
    return {
        "meta": meta,
        "checks": [c.to_dict() for c in checks],
        "summary": {"total": len(checks), "failed": failed, "passed": not failed},
    }
