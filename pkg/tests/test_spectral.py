import math
import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from heattrace.potential import Bump, ConfigurationError, Potential, PotentialSample, sample
from heattrace.spectral import (
    CoefficientField,
    DomainSpec,
    FitError,
    ModelError,
    TraceSeries,
    _dd1,
    _dd2,
    boundary_gap,
    discretize,
    duhamel_bound,
    duhamel_tail_bound,
    duhamel_terms,
    fit_expansion,
    matched_pair,
    trace_diff,
    trace_diff_at,
)

L = 2 * math.pi


def circle(points=256):
    return DomainSpec(1, "circle", (L,), points)


def interval(points=128, margin=0.5):
    return DomainSpec(1, "interval", (L,), points, margin)


def bump(amplitude=1.0, radius=1.5, center=math.pi, poly=()):
    return Potential((Bump((center,), radius, amplitude, poly),))


def model_on(domain, pot=None, **kw):
    pot = pot or bump()
    margin = None if domain.periodic else domain.margin
    return discretize(domain, V=sample(pot, domain.grid, margin), **kw)


# -- operators --------------------------------------------------------------------------


def test_dirichlet_fd_eigenvalues_closed_form():
    N = 64
    m = discretize(interval(N, 0.0))
    h = L / (N + 1)
    k = np.arange(1, N + 1)
    exact = np.sort(4 / h ** 2 * np.sin(k * math.pi / (2 * (N + 1))) ** 2)
    assert np.max(np.abs(m.eigenvalues - exact) / exact) < 1e-12


def test_periodic_fd_eigenvalues_closed_form():
    N = 32
    m = discretize(circle(N), scheme="fd")
    h = L / N
    exact = np.sort(4 / h ** 2 * np.sin(math.pi * np.arange(N) / N) ** 2)
    assert np.allclose(m.eigenvalues, exact, atol=1e-10)


def test_spectral_eigenvalues_are_wavenumbers_squared():
    N = 32
    m = discretize(circle(N))
    k = np.fft.fftfreq(N, d=1 / N)
    assert np.allclose(m.eigenvalues, np.sort(k ** 2), atol=1e-9)


def test_fd_dirichlet_converges_to_continuum():
    errs = []
    for N in (32, 64, 128):
        lam = discretize(interval(N, 0.0)).eigenvalues[:3]
        exact = (np.arange(1, 4) * math.pi / L) ** 2
        errs.append(np.max(np.abs(lam - exact) / exact))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_2d_operators_are_sums_of_1d():
    N = 16
    m2 = discretize(DomainSpec(2, "torus", (L, L), N))
    lam1 = discretize(circle(N)).eigenvalues
    assert np.allclose(m2.eigenvalues, np.sort(np.add.outer(lam1, lam1).ravel()), atol=1e-9)
    r2 = discretize(DomainSpec(2, "rectangle", (L, L), N))
    l1 = discretize(interval(N, 0.0)).eigenvalues
    assert np.allclose(r2.eigenvalues, np.sort(np.add.outer(l1, l1).ravel()), atol=1e-9)


def test_constant_coefficient_scales_spectrum():
    N = 32
    base = discretize(interval(N, 0.0)).eigenvalues
    scaled = discretize(interval(N, 0.0), CoefficientField(value=2.0, mu=2.0)).eigenvalues
    assert np.allclose(scaled, 2 * base, rtol=1e-12)


def test_variable_coefficient_operator_is_symmetric_and_positive():
    a = CoefficientField("step", left=1.0, right=2.0, position=math.pi, mu=2.0)
    for dom, scheme in ((interval(32, 0.0), "fd"), (circle(32), "spectral")):
        m = discretize(dom, a, scheme=scheme)
        assert np.allclose(m.operator, m.operator.T)
        assert m.eigenvalues.min() > -1e-9


def test_ellipticity_violation():
    with pytest.raises(ConfigurationError):
        discretize(interval(32, 0.0), CoefficientField("step", left=1.0, right=3.0, mu=2.0))
    with pytest.raises(ConfigurationError):
        CoefficientField(mu=0.5)


def test_domain_validation():
    with pytest.raises(ConfigurationError):
        DomainSpec(1, "torus", (L,), 32)
    with pytest.raises(ConfigurationError):
        DomainSpec(1, "circle", (L,), 8)
    with pytest.raises(ConfigurationError):
        DomainSpec(3, "torus", (L, L, L), 32)
    with pytest.raises(ConfigurationError):
        discretize(interval(32, 0.0), scheme="spectral")


def test_unresolved_bump_rejected():
    with pytest.raises(ConfigurationError):
        model_on(circle(32), bump(radius=0.3))


def test_potential_touching_wall_rejected():
    dom = interval(64, 0.5)
    with pytest.raises(ConfigurationError):
        sample(bump(radius=3.0), dom.grid, 0.5)
    grid = dom.grid
    vals = np.zeros(grid.points)
    vals[0] = 1.0
    with pytest.raises(ConfigurationError):
        discretize(interval(64, 0.0), V=PotentialSample(grid, vals, margin=1.0))


# -- traces -----------------------------------------------------------------------------


@pytest.mark.parametrize("t", [1e-3, 1e-2, 0.3])
def test_trace_against_matrix_exponential(t):
    dom = circle(16)
    grid = dom.grid
    x = grid.axes()[0]
    V = PotentialSample(grid, 0.5 + np.cos(x) ** 2)
    m = discretize(dom, V=V, scheme="fd")
    ref = np.trace(expm(-t * m.perturbed)) - np.trace(expm(-t * m.operator))
    assert trace_diff_at(m, t) == pytest.approx(ref, abs=1e-10)


def test_constant_potential_shifts_spectrum():
    dom = circle(32)
    c = 0.7
    m = discretize(dom, V=PotentialSample(dom.grid, np.full(dom.grid.points, c)))
    for t in (0.01, 0.1, 1.0):
        assert trace_diff_at(m, t) == pytest.approx(math.expm1(-t * c) * m.free_trace(t), rel=1e-12)


def test_positive_potential_gives_negative_difference():
    m = model_on(circle(128))
    z = trace_diff(m, np.logspace(-3, 0, 10)).z
    assert np.all(z < 0)


def test_isospectral_translation():
    dom = circle(128)
    h = dom.grid.spacing[0]
    a = model_on(dom, bump(center=math.pi))
    b = model_on(dom, bump(center=math.pi + 13 * h))
    t = np.logspace(-3, 0, 8)
    assert np.allclose(trace_diff(a, t).z, trace_diff(b, t).z, rtol=1e-10, atol=1e-14)


def test_trace_series_validation():
    with pytest.raises(ValueError):
        TraceSeries(np.array([0.1, 0.05]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        TraceSeries(np.array([0.1]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        trace_diff(model_on(circle(64)), [0.0, 1.0])


# -- Duhamel ---------------------------------------------------------------------------


def test_divided_differences_are_continuous_at_ties():
    t = 0.3
    lam = 5.0
    exact_dd1 = -t * math.exp(-t * lam)
    for gap in (0.0, 1e-12, 1e-8, 1e-4):
        assert float(_dd1(t, np.array(lam), np.array(lam + gap))) == pytest.approx(
            exact_dd1 * (1 - t * gap / 2), rel=1e-7)
    exact_dd2 = t * t / 2 * math.exp(-t * lam)
    for gap in (0.0, 1e-10, 1e-6, 1e-3):
        got = float(_dd2(t, np.array(lam), np.array(lam + gap), np.array(lam + 2 * gap)))
        assert got == pytest.approx(exact_dd2 * math.exp(-t * gap), rel=1e-7)


def test_dd2_matches_direct_formula_when_well_separated():
    t, a, b, c = 0.5, 1.0, 3.0, 7.0
    f = lambda x: math.exp(-t * x)
    direct = ((f(c) - f(b)) / (c - b) - (f(b) - f(a)) / (b - a)) / (c - a)
    assert float(_dd2(t, np.array(a), np.array(b), np.array(c))) == pytest.approx(direct, rel=1e-12)


@pytest.fixture(scope="module")
def dirichlet_model():
    dom = interval(64, 0.5)
    return discretize(dom, V=sample(bump(amplitude=3.0, radius=2.0), dom.grid, 0.5), eigenvectors=True)


def test_duhamel_terms_match_coupling_derivatives(dirichlet_model):
    # z(eps) = eps A1 + eps^2 A2 + eps^3 A3 + ...; central differences in eps are an
    # independent route to A1 and A2.
    m = dirichlet_model
    Vd = np.diag(np.ravel(m.potential.values))
    lam0 = m.eigenvalues
    t, d = 0.05, 1e-3

    def z(eps):
        return math.fsum(np.exp(-t * np.linalg.eigvalsh(m.operator + eps * Vd)) - np.exp(-t * lam0))

    zp, zm, zp2, zm2 = z(d), z(-d), z(2 * d), z(-2 * d)
    a1 = (8 * (zp - zm) - (zp2 - zm2)) / (12 * d)
    a2 = (16 * (zp + zm) - (zp2 + zm2)) / (24 * d * d)
    terms = duhamel_terms(m, t, 3)
    assert terms[1] == pytest.approx(a1, rel=1e-8)
    assert terms[2] == pytest.approx(a2, rel=1e-5)


def test_duhamel_bounds_and_tail(dirichlet_model):
    m = dirichlet_model
    for t in np.logspace(-3, -1, 5):
        terms = duhamel_terms(m, t, 3)
        z = trace_diff_at(m, t)
        for j in (1, 2, 3):
            assert abs(terms[j]) <= duhamel_bound(m, t, j) * (1 + 1e-6)
        assert abs(z - terms[1] - terms[2]) <= duhamel_tail_bound(m, t, 3)
        assert abs(z - terms[1] - terms[2] - terms[3]) <= duhamel_tail_bound(m, t, 4)


def test_duhamel_cutoff(dirichlet_model):
    m = dirichlet_model
    t = 0.01
    full = duhamel_terms(m, t, 3)
    assert full.truncation_bound == 0.0
    cut = duhamel_terms(m, t, 3, cutoff=float(m.eigenvalues[-1]) / 2, tolerance=1.0)
    assert cut.truncation_bound > 0
    assert abs(cut[3] - full[3]) <= cut.truncation_bound
    with pytest.raises(ModelError):
        duhamel_terms(m, t, 3, cutoff=float(m.eigenvalues[5]), tolerance=1e-12)


def test_duhamel_argument_errors(dirichlet_model):
    with pytest.raises(ValueError):
        duhamel_terms(dirichlet_model, 0.1, 4)
    with pytest.raises(ValueError):
        duhamel_terms(dirichlet_model, -0.1, 1)
    with pytest.raises(ModelError):
        duhamel_terms(model_on(circle(64)), 0.1, 1)


# -- fits ------------------------------------------------------------------------------


def synthetic(coeffs, powers, n=1, t=None):
    t = np.logspace(-3, -1, 40) if t is None else t
    z = sum(c * t ** p for c, p in zip(coeffs, powers)) * t ** (-n / 2)
    return TraceSeries(t, z)


def test_fit_recovers_synthetic_series():
    coeffs = [-0.2, 0.03, -0.01, 0.004]
    report = fit_expansion(synthetic(coeffs, [1, 2, 3, 4]), 1, [1, 2, 3, 4])
    assert np.allclose(report.estimates, coeffs, rtol=1e-10, atol=0)
    assert report.samples == 40
    assert report.residual_norm < 1e-12


def test_fit_half_powers_and_window():
    coeffs = [1.0, -0.5, 0.25]
    report = fit_expansion(synthetic(coeffs, [1, 1.5, 2], n=2), 2, ["1", "3/2", 2], t_window=(1e-3, 5e-2))
    assert np.allclose(report.estimates, coeffs, rtol=1e-9)
    assert report.t_max <= 5e-2
    assert report.estimate("3/2") == pytest.approx(-0.5, rel=1e-9)
    assert report.to_dict()["powers"] == ["1", "3/2", "2"]


def test_fit_errors_and_warnings():
    s = synthetic([1.0], [1], t=np.array([0.01, 0.02]))
    with pytest.raises(FitError):
        fit_expansion(s, 1, [1, 2, 3])
    with pytest.raises(FitError):
        fit_expansion(s, 1, [1, 1])
    with pytest.raises(FitError):
        fit_expansion(s, 1, [])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        r = fit_expansion(synthetic([1.0] * 5, range(1, 6)), 1, range(1, 6), condition_threshold=10.0)
    assert r.warnings and any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_half_powers_improve_fit_for_step_coefficient():
    # A discontinuous coefficient through the support of V introduces
    # half-integer powers; only the improvement is asserted, not their values.
    dom = interval(256, 0.5)
    a = CoefficientField("step", left=1.0, right=2.0, position=math.pi, mu=2.0)
    m = discretize(dom, a, sample(bump(), dom.grid, 0.5))
    s = trace_diff(m, np.logspace(-3, -1, 30))
    whole = fit_expansion(s, 1, [1, 2])
    half = fit_expansion(s, 1, [1, "3/2", 2, "5/2"])
    assert half.residual_norm < 0.5 * whole.residual_norm


# -- boundary gap ---------------------------------------------------------------------


def test_boundary_gap_decays():
    margin = 1.0
    d, p, vd, vp = matched_pair(Potential((Bump((math.pi,), math.pi - margin, 1.0),)), L, 256, margin)
    assert np.allclose(d.grid.axes()[0], p.grid.axes()[0][1:])
    md, mp = discretize(d, V=vd), discretize(p, V=vp, scheme="fd")
    t = np.logspace(math.log10(margin ** 2 / 15), math.log10(margin ** 2 / 1.5), 20)
    rep = boundary_gap(md, mp, t)
    assert rep.resolved.sum() >= 5
    assert rep.monotone
    assert rep.slope < 0
    assert rep.rate == -rep.slope


def test_boundary_gap_argument_checks():
    d, p, vd, vp = matched_pair(Potential((Bump((math.pi,), 2.0, 1.0),)), L, 128, 0.5)
    md, mp = discretize(d, V=vd), discretize(p, V=vp, scheme="fd")
    with pytest.raises(ModelError):
        boundary_gap(mp, md, [0.1])
    other = discretize(p, V=sample(Potential((Bump((math.pi,), 2.0, 2.0),)), p.grid), scheme="fd")
    with pytest.raises(ModelError):
        boundary_gap(md, other, [0.1])


@pytest.mark.parametrize("right", [2.0, 4.0])
def test_half_power_residuals_shrink_with_window(right):
    # Fixed-ratio windows sliding toward t = 0.  Residuals settle on a
    # discretisation floor near 1e-5 at N = 512, so only the end-to-end drop
    # is asserted, not step-by-step monotonicity.
    dom = interval(512, 0.5)
    a = CoefficientField("step", left=1.0, right=right, position=math.pi, mu=4.0)
    m = discretize(dom, a, sample(bump(), dom.grid, 0.5))
    resid = []
    for hi in (0.8, 0.1):
        s = trace_diff(m, np.logspace(math.log10(hi / 10), math.log10(hi), 25))
        resid.append(fit_expansion(s, 1, [1, "3/2", 2, "5/2"]).residual_norm)
    assert resid[1] < resid[0] / 4


def test_zero_potential_gives_zero_everywhere():
    dom = interval(64, 0.5)
    m = discretize(dom, eigenvectors=True)
    t = np.logspace(-3, 0, 5)
    assert np.all(trace_diff(m, t).z == 0)
    assert duhamel_terms(m, 0.1, 3).values == (0.0, 0.0, 0.0)
    d, p, vd, vp = matched_pair(Potential(()), L, 64, 0.5)
    rep = boundary_gap(discretize(d, V=vd), discretize(p, V=vp, scheme="fd"), t)
    assert np.all(rep.gap == 0) and rep.monotone


def test_leading_term_for_unit_mass_bump():
    dom = circle(1024)
    raw = sample(bump(), dom.grid)
    mass = raw.integrate(raw.values)
    m = model_on(dom, bump(amplitude=1 / mass))
    t = np.array([1e-4, 1e-3])
    ratio = trace_diff(m, t).z * np.sqrt(4 * math.pi * t) / t
    assert abs(ratio[0] + 1) < abs(ratio[1] + 1) < 0.01
