"""Numerical heat-trace oracle on 1D/2D boxes.

Discretises ``A = -div(a grad)`` and ``A_V = A + V``, takes full symmetric
eigendecompositions, and from them computes the trace difference
``z(t) = tr e^{-t A_V} - tr e^{-t A}``, its Duhamel terms, small-``t``
expansion fits and the Dirichlet-versus-periodic boundary gap.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .potential import ConfigurationError, Grid, Potential, PotentialSample, sample, zero_sample

log = logging.getLogger(__name__)

PERIODIC_SHAPES = ("circle", "torus")
DIRICHLET_SHAPES = ("interval", "rectangle")
SCHEMES = ("fd", "spectral")

#: Relative eigenvalue gap below which divided differences go confluent.
TIE_TOLERANCE = 1e-9
#: Minimum grid points across a bump radius.
POINTS_PER_FEATURE = 8


class FitError(ValueError):
    pass


class ModelError(ValueError):
    """Missing data in a model or mismatched models."""


# -- domain and coefficients ------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    n: int
    shape: str
    lengths: Tuple[float, ...]
    points: int
    margin: float = 0.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigurationError("only 1D and 2D domains are supported")
        expected = {1: ("interval", "circle"), 2: ("rectangle", "torus")}[self.n]
        if self.shape not in expected:
            raise ConfigurationError(f"shape {self.shape!r} is not a {self.n}D shape {expected}")
        if len(self.lengths) != self.n:
            raise ConfigurationError("need one side length per dimension")
        if self.points < 16:
            raise ConfigurationError("at least 16 grid points per axis are required")
        if not self.periodic and self.margin < 0:
            raise ConfigurationError("support margin must be non-negative")

    @property
    def periodic(self) -> bool:
        return self.shape in PERIODIC_SHAPES

    @property
    def grid(self) -> Grid:
        return Grid(tuple(float(L) for L in self.lengths), (self.points,) * self.n, self.periodic)


@dataclass(frozen=True)
class CoefficientField:
    """Isotropic diffusion coefficient ``a(x) * Identity``.

    ``kind`` is ``"constant"`` (``value``), ``"step"`` (``left`` for
    ``x_0 < position``, ``right`` beyond; homogeneous of degree 0 about
    ``position``) or ``"callable"`` (``func`` on coordinate arrays).
    """

    kind: str = "constant"
    value: float = 1.0
    left: float = 1.0
    right: float = 1.0
    position: float = 0.0
    mu: float = 1.0
    func: Optional[Callable[..., np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("constant", "step", "callable"):
            raise ConfigurationError(f"unknown coefficient kind {self.kind!r}")
        if self.mu < 1:
            raise ConfigurationError("ellipticity constant mu must be >= 1")
        if self.kind == "callable" and self.func is None:
            raise ConfigurationError("callable coefficient needs func")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        shape = np.shape(coords[0])
        if self.kind == "constant":
            return np.full(shape, float(self.value))
        if self.kind == "step":
            return np.where(coords[0] < self.position, float(self.left), float(self.right))
        return np.asarray(self.func(*coords), dtype=float) * np.ones(shape)

    def check(self, values: np.ndarray) -> None:
        lo, hi = float(np.min(values)), float(np.max(values))
        if lo < 1 / self.mu - 1e-12 or hi > self.mu + 1e-12:
            raise ConfigurationError(
                f"coefficient range [{lo:.6g}, {hi:.6g}] violates mu = {self.mu}"
            )


UNIT_COEFFICIENT = CoefficientField()


# -- operators ----------------------------------------------------------------------


def _flat_index(idx: Sequence[np.ndarray], shape: Tuple[int, ...]) -> np.ndarray:
    return np.ravel_multi_index(tuple(idx), shape)


def fd_operator(grid: Grid, a: CoefficientField) -> np.ndarray:
    """Conservative second-order flux scheme, ``a`` sampled at cell faces."""
    shape = grid.points
    size = int(np.prod(shape))
    A = np.zeros((size, size))
    axes = grid.axes()
    h = grid.spacing
    nodes = np.indices(shape)
    for ax in range(grid.n):
        N = shape[ax]
        # faces between node i and i+1 along ax (periodic: wraps)
        face_count = N if grid.periodic else N + 1
        face_idx = np.arange(face_count)
        for face in face_idx:
            left = face - 1 if not grid.periodic else face
            right = face if not grid.periodic else (face + 1) % N
            # physical midpoint position along ax
            if grid.periodic:
                x_mid = axes[ax][0] + (face + 0.5) * h[ax]
            else:
                x_mid = face * h[ax] + 0.5 * h[ax]
            sl = [slice(None)] * grid.n
            sl[ax] = 0
            other = [np.asarray(nodes[k][tuple(sl)]) for k in range(grid.n)]
            coords = []
            for k in range(grid.n):
                if k == ax:
                    coords.append(np.full(other[0].shape, x_mid))
                else:
                    coords.append(axes[k][other[k]])
            w = a(coords) / h[ax] ** 2
            a.check(w * h[ax] ** 2)
            idx_l = [o.copy() for o in other]
            idx_r = [o.copy() for o in other]
            if 0 <= left < N:
                idx_l[ax] = np.full(other[0].shape, left)
                il = _flat_index(idx_l, shape).ravel()
            else:
                il = None
            if 0 <= right < N:
                idx_r[ax] = np.full(other[0].shape, right)
                ir = _flat_index(idx_r, shape).ravel()
            else:
                ir = None
            wf = np.ravel(w)
            if il is not None:
                A[il, il] += wf
            if ir is not None:
                A[ir, ir] += wf
            if il is not None and ir is not None:
                A[il, ir] -= wf
                A[ir, il] -= wf
    return A


def _fourier_first(N: int, L: float) -> np.ndarray:
    k = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
    if N % 2 == 0:
        k[N // 2] = 0.0
    return np.real(np.fft.ifft(1j * k[:, None] * np.fft.fft(np.eye(N), axis=0), axis=0))


def _fourier_second(N: int, L: float) -> np.ndarray:
    k = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
    M = np.real(np.fft.ifft(k[:, None] ** 2 * np.fft.fft(np.eye(N), axis=0), axis=0))
    return 0.5 * (M + M.T)


def spectral_operator(grid: Grid, a: CoefficientField) -> np.ndarray:
    """Fourier pseudo-spectral ``-div(a grad)`` on a periodic grid.

    Constant ``a`` uses the exact symbol ``a*|k|^2``; variable ``a`` uses
    ``sum_axes D^T diag(a) D`` with the real Fourier derivative ``D``.
    """
    if not grid.periodic:
        raise ConfigurationError("the spectral scheme needs a periodic domain")
    shape = grid.points
    eyes = [np.eye(N) for N in shape]

    def kron_axis(M, ax):
        out = np.ones((1, 1))
        for k in range(grid.n):
            out = np.kron(out, M if k == ax else eyes[k])
        return out

    values = a(grid.mesh())
    a.check(values)
    if a.is_constant:
        A = sum(kron_axis(_fourier_second(N, L), ax)
                for ax, (N, L) in enumerate(zip(shape, grid.lengths)))
        A = float(a.value) * A
    else:
        diag = np.ravel(values)
        A = np.zeros((int(np.prod(shape)),) * 2)
        for ax, (N, L) in enumerate(zip(shape, grid.lengths)):
            D = kron_axis(_fourier_first(N, L), ax)
            A += D.T @ (diag[:, None] * D)
    return 0.5 * (A + A.T)


# -- models ----------------------------------------------------------------------------


@dataclass
class SpectralModel:
    domain: DomainSpec
    coefficient: CoefficientField
    potential: PotentialSample
    scheme: str
    operator: np.ndarray
    eigenvalues: np.ndarray
    eigenvalues_v: np.ndarray
    eigenvectors: Optional[np.ndarray] = None

    @property
    def mass_weight(self) -> float:
        return self.potential.grid.cell_volume

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def perturbed(self) -> np.ndarray:
        return self.operator + np.diag(np.ravel(self.potential.values))

    def free_trace(self, t: float) -> float:
        return math.fsum(np.exp(-t * self.eigenvalues))

    def potential_matrix(self) -> np.ndarray:
        """``<phi_m, V phi_p>`` in the eigenbasis of ``A``."""
        if self.eigenvectors is None:
            raise ModelError("model was built without eigenvectors")
        phi = self.eigenvectors
        return phi.T @ (np.ravel(self.potential.values)[:, None] * phi)


def default_scheme(domain: DomainSpec) -> str:
    return "spectral" if domain.periodic else "fd"


def discretize(domain: DomainSpec, a: CoefficientField = UNIT_COEFFICIENT,
               V: Optional[PotentialSample] = None, scheme: Optional[str] = None,
               eigenvectors: bool = False) -> SpectralModel:
    """Assemble ``A`` and ``A_V`` on ``domain`` and diagonalise both.

    ``scheme`` is ``"fd"`` (conservative flux differences, any domain) or
    ``"spectral"`` (periodic only); by default periodic domains use the
    spectral scheme, whose dispersion-free spectrum keeps the small-``t``
    expansion clean.
    """
    grid = domain.grid
    scheme = scheme or default_scheme(domain)
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    if V is None:
        V = zero_sample(grid)
    if V.grid != grid:
        raise ConfigurationError("potential sample lives on a different grid")
    if not domain.periodic:
        if V.margin < domain.margin - 1e-12:
            raise ConfigurationError(
                f"potential margin {V.margin:.6g} is below the declared {domain.margin:.6g}"
            )
        if V.values.size and np.any(_edge_values(V.values) != 0):
            raise ConfigurationError("potential must vanish next to the Dirichlet boundary")
    if V.source is not None:
        hmax = max(grid.spacing)
        for b in V.source.bumps:
            if b.radius < POINTS_PER_FEATURE * hmax:
                raise ConfigurationError(
                    f"bump radius {b.radius:.4g} is resolved by fewer than "
                    f"{POINTS_PER_FEATURE} grid points (h = {hmax:.4g})"
                )
    A = fd_operator(grid, a) if scheme == "fd" else spectral_operator(grid, a)
    AV = A + np.diag(np.ravel(V.values))
    if eigenvectors:
        lam, phi = np.linalg.eigh(A)
    else:
        lam, phi = np.linalg.eigvalsh(A), None
    # V == 0 reuses A's spectrum so that z vanishes exactly, not to round-off
    lam_v = lam.copy() if not np.any(V.values) else np.linalg.eigvalsh(AV)
    return SpectralModel(domain, a, V, scheme, A, lam, lam_v, phi)


def _edge_values(values: np.ndarray) -> np.ndarray:
    parts = []
    for ax in range(values.ndim):
        parts.append(np.take(values, [0, values.shape[ax] - 1], axis=ax).ravel())
    return np.concatenate(parts)


# -- traces ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceSeries:
    t: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if t.shape != z.shape or t.ndim != 1:
            raise ValueError("t and z must be 1D arrays of equal length")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("t values must be positive and strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(z))):
            raise ValueError("trace series must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)


def trace_diff_at(model: SpectralModel, t: float) -> float:
    # Eigenvalues are sorted ascending, so pairing them term by term keeps
    # each difference small before the compensated sum.
    return math.fsum(np.exp(-t * model.eigenvalues_v) - np.exp(-t * model.eigenvalues))


def trace_diff(model: SpectralModel, t_grid: Sequence[float]) -> TraceSeries:
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t values must be positive")
    return TraceSeries(t, np.array([trace_diff_at(model, float(s)) for s in t]))


# -- Duhamel terms ----------------------------------------------------------------


def _dd1(t: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """First divided difference of ``x -> exp(-t x)`` at ``(a, b)``."""
    lo = np.minimum(a, b)
    gap = np.abs(a - b)
    tie = gap < TIE_TOLERANCE * np.maximum(1.0, np.abs(lo))
    z = -t * gap
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(np.abs(z) < 1e-5, 1 + z / 2 + z * z / 6, np.expm1(z) / np.where(z == 0, 1, z))
    out = -t * np.exp(-t * lo) * phi
    mid = 0.5 * (a + b)
    return np.where(tie, -t * np.exp(-t * mid), out)


def _dd2(t: float, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Second divided difference of ``x -> exp(-t x)``."""
    x = np.sort(np.stack(np.broadcast_arrays(a, b, c)), axis=0)
    lo, md, hi = x
    spread = hi - lo
    mean = (lo + md + hi) / 3
    small = t * spread < 1e-3
    tie = spread < TIE_TOLERANCE * np.maximum(1.0, np.abs(lo))
    # Hermite-Genocchi expansion about the mean for nearly confluent triples.
    dev2 = (lo - mean) ** 2 + (md - mean) ** 2 + (hi - mean) ** 2
    taylor = 0.5 * t * t * np.exp(-t * mean) * (1 + t * t * dev2 / 24)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = (_dd1(t, md, hi) - _dd1(t, lo, md)) / np.where(spread == 0, 1, spread)
    return np.where(small | tie, taylor, direct)


@dataclass(frozen=True)
class DuhamelTerms:
    t: float
    values: Tuple[float, ...]
    truncation_bound: float = 0.0
    cutoff: Optional[float] = None

    def __getitem__(self, j: int) -> float:
        """1-based access: ``terms[1]`` is ``A_1(t)``."""
        return self.values[j - 1]


def duhamel_bound(model: SpectralModel, t: float, j: int) -> float:
    """``(||V||_inf t)^j / j! * sum_m exp(-t lambda_m)``."""
    return (model.potential.sup_norm * t) ** j / math.factorial(j) * model.free_trace(t)


def duhamel_tail_bound(model: SpectralModel, t: float, j_from: int) -> float:
    """Sum of :func:`duhamel_bound` over ``j >= j_from``."""
    x = model.potential.sup_norm * t
    head = math.fsum(x ** j / math.factorial(j) for j in range(j_from))
    tail = math.exp(x) - head
    if x < 1:
        # direct series avoids cancellation in exp(x) - head
        tail = math.fsum(x ** j / math.factorial(j) for j in range(j_from, j_from + 40))
    return max(tail, 0.0) * model.free_trace(t)


def duhamel_terms(model: SpectralModel, t: float, j_max: int = 2,
                  cutoff: Optional[float] = None, tolerance: float = 1e-10) -> DuhamelTerms:
    """Duhamel terms ``A_1(t) .. A_{j_max}(t)`` in the eigenbasis of ``A``.

    ``A_j = (1/j) sum V_{m1 m2} ... V_{mj m1} * f'[lambda_m1, ..., lambda_mj]``
    with ``f(x) = exp(-t x)`` and ``f'[...]`` a divided difference.  For
    ``j = 3`` an eigenvalue ``cutoff`` may restrict the triple sum; the
    neglected part is bounded by ``3 ||V||^3 (t^2/2) sum_{lambda > cutoff} 1/lambda``.
    """
    if not 1 <= j_max <= 3:
        raise ValueError("j_max must be 1, 2 or 3")
    if t <= 0:
        raise ValueError("t must be positive")
    Vmat = model.potential_matrix()
    lam = model.eigenvalues
    ex = np.exp(-t * lam)
    diag = np.diag(Vmat)
    values = [-t * math.fsum(ex * diag)]
    bound = 0.0
    if j_max >= 2:
        dd = _dd1(t, lam[:, None], lam[None, :])
        values.append(0.5 * math.fsum(np.ravel(-t * dd * Vmat * Vmat)))
    if j_max >= 3:
        keep = np.arange(lam.size)
        if cutoff is not None:
            keep = np.flatnonzero(lam <= cutoff)
            dropped = lam[lam > cutoff]
            if dropped.size and np.any(dropped <= 0):
                raise ValueError("cutoff must sit above all non-positive eigenvalues")
            bound = 3 * model.potential.sup_norm ** 3 * t * t / 2 * math.fsum(1.0 / dropped)
            if bound > tolerance:
                raise ModelError(
                    f"cutoff {cutoff:.4g} leaves a truncation bound {bound:.3g} above {tolerance:.3g}"
                )
        W = Vmat[np.ix_(keep, keep)]
        lk = lam[keep]
        partial = []
        for m in range(lk.size):
            dd = _dd2(t, lk[m], lk[:, None], lk[None, :])
            partial.append(math.fsum(np.ravel(W[m, :, None] * W * W[None, :, m] * dd)))
        values.append(-t / 3 * math.fsum(partial))
    return DuhamelTerms(t, tuple(values), bound, cutoff)


# -- expansion fits ---------------------------------------------------------------


Power = Union[int, float, Fraction, str]


def _as_power(p: Power) -> Fraction:
    return Fraction(p) if not isinstance(p, float) else Fraction(p).limit_denominator(1000)


@dataclass(frozen=True)
class FitReport:
    powers: Tuple[Fraction, ...]
    estimates: Tuple[float, ...]
    stderr: Tuple[float, ...]
    residual_norm: float
    condition_number: float
    samples: int
    t_min: float
    t_max: float
    warnings: Tuple[str, ...] = ()

    def estimate(self, power: Power) -> float:
        return self.estimates[self.powers.index(_as_power(power))]

    def to_dict(self) -> dict:
        return {
            "powers": [str(p) for p in self.powers],
            "estimates": list(self.estimates),
            "stderr": list(self.stderr),
            "residual_norm": self.residual_norm,
            "condition_number": self.condition_number,
            "samples": self.samples,
            "t_window": [self.t_min, self.t_max],
            "warnings": list(self.warnings),
        }


def fit_expansion(series: TraceSeries, n: int, powers: Sequence[Power],
                  t_window: Optional[Tuple[float, float]] = None,
                  condition_threshold: float = 1e12) -> FitReport:
    """Weighted least squares for ``z(t) t^{n/2} ~ sum_k d_k t^k``.

    Rows are weighted by ``t^{-k_min}`` so every sample counts relative to
    the leading term.  Half-integer ``powers`` fit the general expansion.
    """
    ps = tuple(sorted({_as_power(p) for p in powers}))
    if len(ps) != len(powers):
        raise FitError("powers must be distinct")
    if not ps:
        raise FitError("need at least one power")
    t, z = series.t, series.z
    if t_window is not None:
        keep = (t >= t_window[0]) & (t <= t_window[1])
        t, z = t[keep], z[keep]
    if t.size < len(ps):
        raise FitError(f"{t.size} samples cannot determine {len(ps)} coefficients")
    if np.unique(t).size < len(ps):
        raise FitError("t grid is degenerate")
    y = z * t ** (n / 2)
    w = t ** (-float(ps[0]))
    X = np.stack([t ** float(p) for p in ps], axis=1) * w[:, None]
    rhs = y * w
    scale = np.linalg.norm(X, axis=0)
    Xs = X / scale
    coef, *_ = np.linalg.lstsq(Xs, rhs, rcond=None)
    est = coef / scale
    resid = rhs - X @ est
    cond = float(np.linalg.cond(X))
    dof = t.size - len(ps)
    sigma2 = float(resid @ resid) / dof if dof > 0 else float("nan")
    cov = sigma2 * np.linalg.pinv(Xs.T @ Xs) / np.outer(scale, scale)
    stderr = np.sqrt(np.abs(np.diag(cov)))
    notes = []
    if cond > condition_threshold:
        msg = f"design matrix condition number {cond:.3g} exceeds {condition_threshold:.3g}"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return FitReport(ps, tuple(float(e) for e in est), tuple(float(s) for s in stderr),
                     float(np.linalg.norm(resid)), cond, int(t.size),
                     float(t.min()), float(t.max()), tuple(notes))


# -- boundary insensitivity ---------------------------------------------------------


@dataclass(frozen=True)
class BoundaryGapReport:
    t: np.ndarray
    gap: np.ndarray
    noise_floor: np.ndarray
    resolved: np.ndarray
    slope: float
    intercept: float
    monotone: bool

    @property
    def rate(self) -> float:
        """Fitted exponential rate: ``gap ~ exp(intercept - rate / t)``."""
        return -self.slope


def _same_potential(a: PotentialSample, b: PotentialSample) -> bool:
    if a.source is not None and b.source is not None:
        return a.source == b.source
    ia, ib = a.integrate(a.values), b.integrate(b.values)
    qa, qb = a.integrate(a.values ** 2), b.integrate(b.values ** 2)
    return math.isclose(ia, ib, rel_tol=1e-8, abs_tol=1e-12) and math.isclose(qa, qb, rel_tol=1e-8, abs_tol=1e-12)


def noise_floor(model: SpectralModel, t: float, factor: float = 1000.0) -> float:
    """Round-off level of a computed ``z(t)``: eigenvalue errors scale with
    ``eps * ||A||``, each weighted by ``t exp(-t lambda)``."""
    eps = np.finfo(float).eps
    lam_max = float(np.max(np.abs(model.eigenvalues)))
    return factor * eps * (1 + t * lam_max) * model.free_trace(t)


def boundary_gap(dirichlet_model: SpectralModel, periodic_model: SpectralModel,
                 t_grid: Sequence[float], noise_factor: float = 1000.0) -> BoundaryGapReport:
    """``|z_D(t) - z_P(t)|`` and the slope of ``log gap`` against ``1/t``.

    Only samples above both models' round-off floors enter the regression.
    """
    if dirichlet_model.domain.periodic or not periodic_model.domain.periodic:
        raise ModelError("need a Dirichlet model and a periodic model, in that order")
    if not _same_potential(dirichlet_model.potential, periodic_model.potential):
        raise ModelError("models carry different potentials")
    t = np.asarray(t_grid, dtype=float)
    zd = trace_diff(dirichlet_model, t).z
    zp = trace_diff(periodic_model, t).z
    gap = np.abs(zd - zp)
    floor = np.array([
        max(noise_floor(dirichlet_model, s, noise_factor), noise_floor(periodic_model, s, noise_factor))
        for s in t
    ])
    resolved = gap > floor
    slope = intercept = float("nan")
    monotone = False
    if resolved.sum() >= 2:
        tr, gr = t[resolved], gap[resolved]
        slope, intercept = (float(v) for v in np.polyfit(1.0 / tr, np.log(gr), 1))
        order = np.argsort(tr)
        monotone = bool(np.all(np.diff(gr[order]) > 0))
    elif np.all(gap == 0):
        monotone = True
    return BoundaryGapReport(t, gap, floor, resolved, slope, intercept, monotone)


def matched_pair(potential: Potential, length: float, points: int,
                 margin: float = 0.0) -> Tuple[DomainSpec, DomainSpec, PotentialSample, PotentialSample]:
    """An interval with ``points`` interior nodes and a circle with
    ``points + 1`` nodes sharing grid spacing and node positions."""
    dirichlet = DomainSpec(1, "interval", (length,), points, margin)
    periodic = DomainSpec(1, "circle", (length,), points + 1)
    return (dirichlet, periodic,
            sample(potential, dirichlet.grid, margin), sample(potential, periodic.grid))
