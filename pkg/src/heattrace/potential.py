"""Analytic compactly supported potentials, their grid samples and
numerical derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

#: Highest per-axis derivative order the finite-difference path supports.
MAX_FD_ORDER = 8
#: Highest per-axis derivative order the spectral path supports.
MAX_SPECTRAL_ORDER = 16


class ConfigurationError(ValueError):
    """Invalid grid, domain or potential configuration."""


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid.

    Periodic axes hold ``N`` nodes ``x_i = i*h`` with ``h = L/N``.  Interval
    axes hold the ``N`` interior nodes ``x_i = i*h`` (``i = 1..N``) of
    ``[0, L]`` with ``h = L/(N+1)``; the boundary nodes carry Dirichlet zeros.
    """

    lengths: Tuple[float, ...]
    points: Tuple[int, ...]
    periodic: bool

    def __post_init__(self):
        if len(self.lengths) != len(self.points) or len(self.lengths) not in (1, 2):
            raise ConfigurationError("grid dimension must be 1 or 2")
        if any(L <= 0 for L in self.lengths):
            raise ConfigurationError("side lengths must be positive")
        if any(N < 4 for N in self.points):
            raise ConfigurationError("too few grid points")

    @property
    def n(self) -> int:
        return len(self.lengths)

    @property
    def spacing(self) -> Tuple[float, ...]:
        if self.periodic:
            return tuple(L / N for L, N in zip(self.lengths, self.points))
        return tuple(L / (N + 1) for L, N in zip(self.lengths, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> List[np.ndarray]:
        out = []
        for N, h in zip(self.points, self.spacing):
            start = 0 if self.periodic else 1
            out.append(h * np.arange(start, start + N))
        return out

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")


@dataclass(frozen=True)
class Bump:
    """``amplitude * poly((x-c)/r) * exp(-1/(1 - |x-c|^2/r^2))`` inside the ball.

    ``poly`` maps exponent tuples to coefficients; the default is the
    constant 1.
    """

    center: Tuple[float, ...]
    radius: float
    amplitude: float = 1.0
    poly: Tuple[Tuple[Tuple[int, ...], float], ...] = ()

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigurationError("bump radius must be positive")

    def __call__(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        if len(coords) != len(self.center):
            raise ConfigurationError("bump dimension does not match the grid")
        u = [(x - c) / self.radius for x, c in zip(coords, self.center)]
        r2 = sum(ui ** 2 for ui in u)
        inside = r2 < 1
        out = np.zeros(np.shape(r2))
        out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        if self.poly:
            window = np.zeros(np.shape(r2))
            for exps, coef in self.poly:
                term = np.full(np.shape(r2), float(coef))
                for ui, k in zip(u, exps):
                    term = term * ui ** k
                window += term
            out = out * window
        return self.amplitude * out

    def sup_bound(self) -> float:
        scale = sum(abs(c) for _, c in self.poly) if self.poly else 1.0
        return abs(self.amplitude) * scale * math.exp(-1.0)


@dataclass(frozen=True)
class Potential:
    """Sum of bumps; the analytic description kept alongside samples."""

    bumps: Tuple[Bump, ...]

    @property
    def n(self) -> int:
        return len(self.bumps[0].center) if self.bumps else 0

    def __call__(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        out = np.zeros(np.shape(coords[0]))
        for b in self.bumps:
            out = out + b(coords)
        return out

    def support_boxes(self):
        return [
            tuple((c - b.radius, c + b.radius) for c in b.center) for b in self.bumps
        ]

    def scaled(self, factor: float) -> "Potential":
        return Potential(tuple(
            Bump(b.center, b.radius, b.amplitude * factor, b.poly) for b in self.bumps
        ))

    def translated(self, shift: Sequence[float]) -> "Potential":
        return Potential(tuple(
            Bump(tuple(c + s for c, s in zip(b.center, shift)), b.radius, b.amplitude, b.poly)
            for b in self.bumps
        ))


@dataclass(frozen=True)
class PotentialSample:
    grid: Grid
    values: np.ndarray
    margin: float = 0.0
    source: Potential | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.values.shape != tuple(self.grid.points):
            raise ConfigurationError(
                f"sample shape {self.values.shape} does not match grid {self.grid.points}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("potential values must be finite")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def integrate(self, values: np.ndarray) -> float:
        # Trapezoid rule; the integrand vanishes at the domain edges.
        return math.fsum(np.ravel(values)) * self.grid.cell_volume


def support_margin(potential: Potential, grid: Grid) -> float:
    """Distance from the potential's support to the nearest domain wall."""
    if grid.periodic:
        return math.inf
    margin = math.inf
    for box in potential.support_boxes():
        for (lo, hi), L in zip(box, grid.lengths):
            margin = min(margin, lo, L - hi)
    return margin


def sample(potential: Potential, grid: Grid, margin: float | None = None) -> PotentialSample:
    """Sample ``potential`` on ``grid``.

    On interval grids the support must stay at least ``margin`` away from the
    walls (defaults to "strictly inside").
    """
    if potential.bumps and potential.n != grid.n:
        raise ConfigurationError("potential and grid dimensions differ")
    actual = support_margin(potential, grid)
    required = 0.0 if margin is None else margin
    if not grid.periodic and not actual > required - 1e-12:
        raise ConfigurationError(
            f"potential support comes within {actual:.6g} of the boundary (margin {required})"
        )
    values = potential(grid.mesh()) if potential.bumps else np.zeros(grid.points)
    return PotentialSample(grid, np.asarray(values, dtype=float),
                           margin=actual if margin is None else margin, source=potential)


def zero_sample(grid: Grid) -> PotentialSample:
    return PotentialSample(grid, np.zeros(grid.points), margin=math.inf, source=Potential(()))


# -- derivatives ---------------------------------------------------------------

# 4th-order centred first derivative.
_D1 = (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0, 2)


def _fd_axis(values: np.ndarray, axis: int, order: int, h: float) -> np.ndarray:
    if order > MAX_FD_ORDER:
        raise ConfigurationError(
            f"derivative order {order} exceeds the finite-difference limit {MAX_FD_ORDER}"
        )
    out = values
    weights, half = _D1
    for _ in range(order):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (half, half)
        padded = np.pad(out, pad)  # zero extension: the sample vanishes near walls
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for k, w in enumerate(weights):
            if w:
                acc = acc + w * np.take(padded, np.arange(k, k + n), axis=axis)
        out = acc / h
    return out


def _spectral_axis(values: np.ndarray, axis: int, order: int, L: float) -> np.ndarray:
    if order > MAX_SPECTRAL_ORDER:
        raise ConfigurationError(
            f"derivative order {order} exceeds the spectral limit {MAX_SPECTRAL_ORDER}"
        )
    N = values.shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
    if N % 2 == 0 and order % 2:
        k[N // 2] = 0.0  # Nyquist mode has no real odd derivative
    shape = [1] * values.ndim
    shape[axis] = N
    symbol = (1j * k) ** order
    return np.real(np.fft.ifft(np.fft.fft(values, axis=axis) * symbol.reshape(shape), axis=axis))


def derivative(sample_: PotentialSample, alpha: Sequence[int]) -> np.ndarray:
    """``d^alpha V`` on the grid: spectral on periodic grids, 4th-order
    centred differences on interval grids."""
    grid = sample_.grid
    if len(alpha) != grid.n:
        raise ConfigurationError("multi-index dimension does not match the grid")
    out = sample_.values
    for axis, order in enumerate(alpha):
        if order == 0:
            continue
        if grid.periodic:
            out = _spectral_axis(out, axis, order, grid.lengths[axis])
        else:
            out = _fd_axis(out, axis, order, grid.spacing[axis])
    return out


class DerivativeCache:
    """Memoises derivatives of one sample.  Not shared across threads."""

    def __init__(self, sample_: PotentialSample):
        self.sample = sample_
        self._cache: Dict[Tuple[int, ...], np.ndarray] = {}

    def __getitem__(self, alpha) -> np.ndarray:
        alpha = tuple(alpha)
        if alpha not in self._cache:
            self._cache[alpha] = derivative(self.sample, alpha)
        return self._cache[alpha]
