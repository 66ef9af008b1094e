"""Periodic grid, spectral transforms, differentiation, and discrete norms.

All other modules build on this one.  The domain is a periodic box [0, L)
sampled at N evenly spaced points; spectra use the standard FFT ordering
k = [0, 1, ..., N/2-1, -N/2, ..., -1] with wavenumbers xi_k = 2*pi*k/L.
Odd-order derivatives zero the Nyquist mode (k = -N/2) so that
differentiation maps real fields to real fields without a sign ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, GridMismatchError, RepresentationError

PHYSICAL = "physical"
SPECTRAL = "spectral"

# Relative imaginary residue above which an inverse transform is considered
# inconsistent (a conjugate-symmetric spectrum should sit far below this).
_IMAG_RESIDUE_GUARD = 1e-8


@dataclass(frozen=True)
class Grid:
    """Immutable periodic grid: box length, point count, and wavenumbers."""

    length: float
    points: int

    def __post_init__(self) -> None:
        if self.points < 8 or self.points % 2 != 0:
            raise ConfigurationError(
                f"grid needs an even point count >= 8, got N={self.points}"
            )
        if not self.length > 0:
            raise ConfigurationError(f"box length must be positive, got L={self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.points

    @cached_property
    def x(self) -> np.ndarray:
        """Grid nodes x_i = i*dx, i = 0..N-1."""
        return self.dx * np.arange(self.points)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """xi_k = 2*pi*k/L in FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.dx)

    @property
    def nyquist_index(self) -> int:
        """Index of the unpaired k = -N/2 mode."""
        return self.points // 2

    def derivative_factor(self, order: int) -> np.ndarray:
        """(i*xi)^order with the Nyquist mode zeroed for odd orders."""
        if order < 0:
            raise ConfigurationError(f"derivative order must be >= 0, got {order}")
        factor = (1j * self.wavenumbers) ** order
        if order % 2 == 1:
            factor = factor.copy()
            factor[self.nyquist_index] = 0.0
        return factor


def make_grid(length: float, points: int) -> Grid:
    """Build a periodic grid on [0, length) with an even number of points."""
    return Grid(length=float(length), points=int(points))


@dataclass
class Field:
    """A real-valued profile on a Grid, in physical or spectral representation.

    Physical values are N real samples; spectral values are the N complex
    FFT amplitudes of such samples (hence conjugate-symmetric).
    """

    values: np.ndarray
    rep: str
    grid: Grid = field(repr=False)

    @classmethod
    def physical(cls, values: np.ndarray, grid: Grid) -> "Field":
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.points,):
            raise ConfigurationError(
                f"expected {grid.points} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("physical field values must be finite")
        return cls(values=values, rep=PHYSICAL, grid=grid)

    @classmethod
    def spectral(cls, values: np.ndarray, grid: Grid) -> "Field":
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.points,):
            raise ConfigurationError(
                f"expected {grid.points} amplitudes, got shape {values.shape}"
            )
        return cls(values=values, rep=SPECTRAL, grid=grid)

    def copy(self) -> "Field":
        return Field(values=self.values.copy(), rep=self.rep, grid=self.grid)

    def require(self, rep: str) -> None:
        if self.rep != rep:
            raise RepresentationError(f"expected a {rep} field, got {self.rep}")


def same_grid(*fields: Field) -> Grid:
    """Return the common grid of the given fields, or raise."""
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("fields sampled on different grids")
    return grid


def to_spectral(f: Field) -> Field:
    """Forward transform of a physical field."""
    f.require(PHYSICAL)
    return Field(values=np.fft.fft(f.values), rep=SPECTRAL, grid=f.grid)


def to_physical(F: Field) -> Field:
    """Inverse transform of a spectral field, dropping the imaginary residue.

    Raises RepresentationError if the residue is large, which indicates a
    spectrum that is not conjugate-symmetric (i.e. not a real field).
    """
    F.require(SPECTRAL)
    complex_values = np.fft.ifft(F.values)
    real_part = complex_values.real
    scale = max(np.max(np.abs(real_part)), 1e-300)
    if np.max(np.abs(complex_values.imag)) > _IMAG_RESIDUE_GUARD * scale:
        raise RepresentationError(
            "spectrum is not conjugate-symmetric: inverse transform is not real"
        )
    return Field(values=np.ascontiguousarray(real_part), rep=PHYSICAL, grid=F.grid)


def spectral_derivative(f: Field, order: int) -> Field:
    """Differentiate by multiplying with (i*xi)^order in spectral space.

    The output representation matches the input.  Odd orders zero the
    Nyquist mode.
    """
    factor = f.grid.derivative_factor(order)
    if f.rep == PHYSICAL:
        derived = np.fft.ifft(factor * np.fft.fft(f.values)).real
        return Field(values=derived, rep=PHYSICAL, grid=f.grid)
    return Field(values=factor * f.values, rep=SPECTRAL, grid=f.grid)


def l2_norm(f: Field) -> float:
    """Rectangle-rule L2 norm of a physical field."""
    f.require(PHYSICAL)
    return float(np.sqrt(np.sum(f.values**2) * f.grid.dx))


def lq_norm(f: Field, q: float) -> float:
    """Rectangle-rule L^q norm, q >= 1."""
    f.require(PHYSICAL)
    if q < 1:
        raise ConfigurationError(f"Lebesgue exponent must be >= 1, got q={q}")
    if np.isinf(q):
        return sup_norm(f)
    return float((np.sum(np.abs(f.values) ** q) * f.grid.dx) ** (1.0 / q))


def sup_norm(f: Field) -> float:
    """Maximum absolute value over the grid nodes."""
    f.require(PHYSICAL)
    return float(np.max(np.abs(f.values)))


def sobolev_norm(f: Field, s: float) -> float:
    """H^s norm via (1 + xi^2)^s spectral weights.

    Weighted so that s = 0 reproduces l2_norm (discrete Parseval).  Accepts
    either representation.
    """
    if s < 0:
        raise ConfigurationError(f"Sobolev order must be >= 0, got s={s}")
    if f.rep == PHYSICAL:
        spectrum = np.fft.fft(f.values)
    else:
        spectrum = f.values
    weights = (1.0 + f.grid.wavenumbers**2) ** s
    total = np.sum(weights * np.abs(spectrum) ** 2)
    return float(np.sqrt(total * f.grid.dx / f.grid.points))
