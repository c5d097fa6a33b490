import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from heattrace.bridge import CapacityError
from heattrace.invariants import (
    InvariantExpression,
    assemble_invariant,
    chain_sum,
    evaluate_invariant,
    evaluate_terms,
    expected_p6,
    expression,
    format_monomial,
    gradient_energy_expression,
    h2_diagnostic,
    hessian_indices,
    ibp_canonicalize,
    monomial,
    second_order_hessian_split,
)
from heattrace.potential import Bump, Grid, Potential, sample

TWO_PI = 2 * math.pi


def torus(n=1, points=256):
    return Grid((TWO_PI,) * n, (points,) * n, True)


def bump_sample(n=1, amplitude=1.0, radius=1.5, poly=(), points=256, center=None):
    center = center or (math.pi,) * n
    return sample(Potential((Bump(center, radius, amplitude, poly),)), torus(n, points))


def canon(order, n):
    return ibp_canonicalize(assemble_invariant(order, n))


# -- exact assembly -------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3])
def test_low_orders(n):
    zero = (0,) * n
    assert canon(2, n) == expression({(zero,): -1}, n)
    assert canon(4, n) == expression({(zero, zero): Fraction(1, 2)}, n)
    assert canon(6, n) == expected_p6(n)
    for odd in (3, 5, 7):
        assert assemble_invariant(odd, n).is_zero()


def test_raw_order4_keeps_derivative_term():
    raw = assemble_invariant(4, 1)
    assert raw.terms[monomial([(2,)])] == Fraction(-1, 6)
    assert ibp_canonicalize(raw) == expression({((0,), (0,)): Fraction(1, 2)}, 1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_gradient_identity(n):
    assert ibp_canonicalize(chain_sum(2, n, 2)) == gradient_energy_expression(n, Fraction(-1, 12))


def test_order8_canonical_forms():
    # Engine output; the rewrite is validated numerically in test_canonicalization_is_sound.
    assert canon(8, 1) == expression({
        ((0,),) * 4: Fraction(1, 24),
        ((0,), (1,), (1,)): Fraction(1, 12),
        ((2,), (2,)): Fraction(1, 120),
    }, 1)
    p8 = canon(8, 2)
    assert p8.terms[monomial([(1, 1), (1, 1)])] == Fraction(1, 60)
    assert p8.terms[monomial([(2, 0), (2, 0)])] == Fraction(1, 120)


def test_hessian_split_of_quartic_chain():
    assert second_order_hessian_split(ibp_canonicalize(chain_sum(2, 1, 4))) == {
        "diagonal": Fraction(1, 120), "off_diagonal": None, "other": 0}
    for n in (2, 3):
        split = second_order_hessian_split(ibp_canonicalize(chain_sum(2, n, 4)))
        assert split == {"diagonal": Fraction(1, 120), "off_diagonal": Fraction(1, 120), "other": 0}


def test_budget_enforced():
    with pytest.raises(CapacityError):
        assemble_invariant(10, 1, budget=8)
    with pytest.raises(ValueError):
        assemble_invariant(1, 1)


# -- canonicalisation rules -----------------------------------------------------------


def test_single_derivative_factor_drops():
    e = expression({((2,),): 3, ((0,),): 1}, 1)
    assert ibp_canonicalize(e) == expression({((0,),): 1}, 1)


def test_laplacian_times_v():
    e = expression({((2, 0), (0, 0)): 1, ((0, 2), (0, 0)): 1}, 2)
    assert ibp_canonicalize(e) == gradient_energy_expression(2, Fraction(-1))


def test_odd_quadratic_vanishes():
    assert ibp_canonicalize(expression({((1,), (2,)): 5}, 1)).is_zero()


def test_quadratic_normal_form_splits_odd_coordinates():
    # d_x V * d_y V has gamma = (1,1): representative keeps one derivative per factor
    e = expression({((1, 1), (0, 0)): 1}, 2)
    assert ibp_canonicalize(e) == expression({((1, 0), (0, 1)): -1}, 2)


def test_canonicalize_is_idempotent():
    for order in (6, 8):
        for n in (1, 2):
            c = canon(order, n)
            assert ibp_canonicalize(c) == c


potential_params = st.tuples(
    st.floats(0.3, 3.0),
    st.floats(2.0, 4.2),
    st.lists(st.tuples(st.integers(0, 3), st.floats(-1, 1)), max_size=3),
)


@given(potential_params)
@settings(max_examples=15, deadline=None)
def test_canonicalization_is_sound(params):
    amp, centre, poly = params
    # products of derivatives need more resolution than V itself
    V = bump_sample(amplitude=amp, center=(centre,), poly=tuple(((k,), c) for k, c in poly), points=512)
    for order in (4, 6, 8):
        raw = assemble_invariant(order, 1)
        scale = max(1.0, sum(abs(v) for v in evaluate_terms(raw, V).values()))
        assert evaluate_invariant(ibp_canonicalize(raw), V) == pytest.approx(
            evaluate_invariant(raw, V), abs=1e-9 * scale)


def test_canonicalization_is_sound_2d():
    V = bump_sample(n=2, amplitude=2.0, poly=(((1, 0), 1.0), ((0, 0), 0.5)), points=256)
    raw = assemble_invariant(8, 2)
    assert evaluate_invariant(ibp_canonicalize(raw), V) == pytest.approx(
        evaluate_invariant(raw, V), rel=1e-6)


# -- serialisation ---------------------------------------------------------------------


@st.composite
def expressions(draw):
    n = draw(st.integers(1, 2))
    terms = {}
    for _ in range(draw(st.integers(0, 4))):
        k = draw(st.integers(1, 3))
        m = tuple(tuple(draw(st.integers(0, 3)) for _ in range(n)) for _ in range(k))
        terms[m] = draw(st.fractions(max_denominator=10 ** 30))
    return InvariantExpression(terms, n, draw(st.sampled_from([None, 4, 6])))


@given(expressions())
def test_json_round_trip(e):
    assert InvariantExpression.from_dict(e.to_dict()) == e


@given(expressions(), expressions())
def test_expression_arithmetic(a, b):
    if a.n != b.n:
        return
    assert (a + b) - b == a
    assert a.scale(Fraction(3)) == a + a + a


def test_format():
    assert format_monomial(monomial([(0,), (2,)])) == "V*D[2]V"
    assert str(InvariantExpression({}, 1)) == "0"


# -- numerical evaluation -------------------------------------------------------------


def test_p2_matches_quadrature_oracle():
    V = bump_sample(amplitude=1.3, points=1024)
    mass, _ = quad(lambda x: 1.3 * math.exp(-1 / (1 - ((x - math.pi) / 1.5) ** 2)),
                   math.pi - 1.5, math.pi + 1.5, epsabs=1e-14)
    assert evaluate_invariant(canon(2, 1), V) == pytest.approx(-mass / math.sqrt(4 * math.pi), rel=1e-10)


@pytest.mark.parametrize("lam", [0.5, 2.0, -1.5])
def test_homogeneous_degree_scaling(lam):
    V = bump_sample()
    W = bump_sample(amplitude=lam)
    assert evaluate_invariant(canon(4, 1), W) == pytest.approx(lam ** 2 * evaluate_invariant(canon(4, 1), V), rel=1e-12)
    # gradient term is quadratic, cubic term is cubic
    grad = gradient_energy_expression(1)
    assert evaluate_invariant(grad, W) == pytest.approx(lam ** 2 * evaluate_invariant(grad, V), rel=1e-12)


def test_translation_and_reflection_invariance():
    grid = torus(1, 256)
    h = grid.spacing[0]
    base = Potential((Bump((math.pi,), 1.2, 1.0, (((1,), 0.7),)),))
    V = sample(base, grid)
    shifted = sample(base.translated((17 * h,)), grid)
    reflected_vals = V.values[::-1].copy()
    reflected = type(V)(grid, np.roll(reflected_vals, 1), V.margin)
    for order in (2, 4, 6, 8):
        e = canon(order, 1)
        ref = evaluate_invariant(e, V)
        assert evaluate_invariant(e, shifted) == pytest.approx(ref, rel=1e-10, abs=1e-14)
        assert evaluate_invariant(e, reflected) == pytest.approx(ref, rel=1e-10, abs=1e-14)


def test_dimension_mismatch_in_evaluation():
    with pytest.raises(ValueError):
        evaluate_invariant(canon(2, 2), bump_sample())


def test_h2_diagnostic_reuses_p8():
    V = bump_sample(amplitude=2.0)
    p8 = canon(8, 1)
    d = h2_diagnostic(V, p8)
    assert d.p8 == evaluate_invariant(p8, V)
    assert d.lhs == pytest.approx(d.hessian_energy + d.quartic)
    assert d.sup_norm == pytest.approx(2.0 * math.exp(-1))


def test_h2_two_term_scaling():
    d1 = h2_diagnostic(bump_sample(amplitude=1.0))
    d2 = h2_diagnostic(bump_sample(amplitude=2.0))
    assert d2.hessian_energy == pytest.approx(4 * d1.hessian_energy, rel=1e-12)
    assert d2.quartic == pytest.approx(16 * d1.quartic, rel=1e-12)
    assert d2.grad_energy == pytest.approx(4 * d1.grad_energy, rel=1e-12)


def test_hessian_indices():
    assert sorted(hessian_indices(2)) == [(0, 2), (1, 1), (2, 0)]
