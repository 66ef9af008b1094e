"""Linear symbols, generator and resolvent, and the dealiased nonlinearity.

The model is

    u_t + (-1)^(j+1) d^(2j+1)u + (-1)^m d^(2m)u + damping(x) u
        + delay_coupling(x) u(t - tau) + (1/(p+1)) d(u^(p+1)) = 0,

with 1 <= m <= j and 1 <= p < 2j.  Under the FFT convention of the grid
module (d/dx <-> i*xi), the constant-coefficient linear tendency is
diagonal: u_hat' = a(xi) u_hat with a(xi) = i xi^(2j+1) - xi^(2m).  The
real part is -xi^(2m) <= 0, so the linear semigroup is contractive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DivergedError
from .grid import Field, Grid, same_grid, sup_norm

# Blow-up guard applied to pointwise powers inside the nonlinearity.
_OVERFLOW_LIMIT = 1e100


@dataclass(frozen=True)
class OperatorParams:
    """Operator indices: dispersion 2j+1, dissipation 2m, nonlinearity power p."""

    j: int
    m: int
    p: int

    def __post_init__(self) -> None:
        problems = []
        if self.j < 1:
            problems.append(f"dispersion index j must be >= 1, got {self.j}")
        if not (1 <= self.m <= self.j):
            problems.append(f"dissipation index m must satisfy 1 <= m <= j, got m={self.m}")
        if not (1 <= self.p < 2 * self.j):
            problems.append(
                f"nonlinearity power p must satisfy 1 <= p < 2j = {2 * self.j}, got p={self.p}"
            )
        if problems:
            raise ConfigurationError("; ".join(problems))


@dataclass
class CoefficientSet:
    """Problem coefficients sampled on one grid.

    damping is the undelayed feedback profile, delay_coupling the delayed
    one; both must be bounded.  tau = 0 is the delay-free mode and then
    delay_coupling must vanish identically.
    """

    params: OperatorParams
    tau: float
    damping: Field
    delay_coupling: Field
    dissipation_on: bool = True
    nonlinearity_on: bool = True
    grid: Grid = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.grid = same_grid(self.damping, self.delay_coupling)
        self.damping.require("physical")
        self.delay_coupling.require("physical")
        if self.tau < 0:
            raise ConfigurationError(f"delay must be >= 0, got tau={self.tau}")
        if self.tau == 0 and sup_norm(self.delay_coupling) > 0:
            raise ConfigurationError(
                "tau = 0 requires a vanishing delay coupling profile"
            )


def linear_symbol(
    grid: Grid, params: OperatorParams, dissipation_on: bool = True
) -> np.ndarray:
    """Per-mode tendency a(xi) = i xi^(2j+1) - xi^(2m) of the linear part.

    With dissipation_on False the -xi^(2m) term is dropped and the symbol
    is purely imaginary (free dispersion).  The Nyquist mode of the odd
    part is zeroed, matching spectral_derivative.
    """
    xi = grid.wavenumbers
    dispersion = xi ** (2 * params.j + 1)
    dispersion[grid.nyquist_index] = 0.0
    a = 1j * dispersion
    if dissipation_on:
        a -= xi ** (2 * params.m)
    return a


def generator_symbol(grid: Grid, params: OperatorParams) -> np.ndarray:
    """Symbol of the m = j linear generator (no damping profile)."""
    xi = grid.wavenumbers
    dispersion = xi ** (2 * params.j + 1)
    dispersion[grid.nyquist_index] = 0.0
    return 1j * dispersion - xi ** (2 * params.j)


def apply_generator(u: Field, coeffs: CoefficientSet) -> Field:
    """Apply the linearized generator -(-1)^(j+1)d^(2j+1)u - (-1)^j d^(2j)u - damping*u.

    This is the m = j operator whose semigroup drives the delay-free
    linear dynamics; the damping profile is applied pointwise in physical
    space.
    """
    u.require("physical")
    grid = same_grid(u, coeffs.damping)
    u_hat = np.fft.fft(u.values)
    linear = np.fft.ifft(generator_symbol(grid, coeffs.params) * u_hat).real
    return Field.physical(linear - coeffs.damping.values * u.values, grid)


def resolvent_symbol(grid: Grid, params: OperatorParams) -> np.ndarray:
    """Denominator h(xi) = 1 - a_j(xi) = 1 + xi^(2j) - i xi^(2j+1) of (I - A)^-1.

    |h| >= 1 on every mode because Re a_j <= 0, so the resolvent is an L2
    contraction.
    """
    return 1.0 - generator_symbol(grid, params)


def resolvent_solve(f: Field, params: OperatorParams) -> Field:
    """Solve (I - A)u = f for the m = j generator A by spectral division.

    Accepts either representation and answers in kind.
    """
    h = resolvent_symbol(f.grid, params)
    if f.rep == "physical":
        u_hat = np.fft.fft(f.values) / h
        return Field.physical(np.fft.ifft(u_hat).real, f.grid)
    return Field.spectral(f.values / h, f.grid)


def dealias_pad_points(points: int, p: int) -> int:
    """Smallest even padded size M >= N(p+2)/2, exact for degree-(p+1) products."""
    needed = (points * (p + 2) + 1) // 2
    return needed + needed % 2


def pad_spectrum(spectrum: np.ndarray, padded_points: int) -> np.ndarray:
    """Embed an N-point spectrum into M > N points, splitting the Nyquist mode."""
    n = spectrum.shape[0]
    half = n // 2
    padded = np.zeros(padded_points, dtype=complex)
    padded[:half] = spectrum[:half]
    padded[padded_points - half + 1 :] = spectrum[half + 1 :]
    # The input k = -N/2 coefficient represents both +-N/2 on the fine grid.
    padded[half] = 0.5 * spectrum[half]
    padded[padded_points - half] = 0.5 * spectrum[half]
    return padded


def truncate_spectrum(spectrum: np.ndarray, points: int) -> np.ndarray:
    """Restrict an M-point spectrum back to N points (adjoint of pad_spectrum)."""
    m = spectrum.shape[0]
    half = points // 2
    truncated = np.empty(points, dtype=complex)
    truncated[:half] = spectrum[:half]
    truncated[half + 1 :] = spectrum[m - half + 1 :]
    truncated[half] = spectrum[half] + spectrum[m - half]
    return truncated


def nonlinear_flux_hat(u_hat: np.ndarray, grid: Grid, params: OperatorParams) -> np.ndarray:
    """Spectrum of -(1/(p+1)) d(u^(p+1)) with exact zero-padded dealiasing."""
    n = grid.points
    m = dealias_pad_points(n, params.p)
    fine = np.fft.ifft(pad_spectrum(u_hat, m)).real * (m / n)
    power = fine ** (params.p + 1)
    peak = np.max(np.abs(power))
    if not np.isfinite(peak) or peak > _OVERFLOW_LIMIT:
        raise DivergedError("u^(p+1) overflowed while forming the nonlinearity")
    power_hat = truncate_spectrum(np.fft.fft(power), n) * (n / m)
    return -grid.derivative_factor(1) * power_hat / (params.p + 1)


def nonlinearity(u: Field, params: OperatorParams) -> Field:
    """Conservative nonlinearity -(1/(p+1)) d(u^(p+1)) of a physical field.

    The product is formed on a grid zero-padded to at least N(p+2)/2
    points, so no aliased content reaches the retained modes.
    """
    u.require("physical")
    flux_hat = nonlinear_flux_hat(np.fft.fft(u.values), u.grid, params)
    return Field.physical(np.fft.ifft(flux_hat).real, u.grid)


def rhs(u: Field, delayed: Field, coeffs: CoefficientSet) -> Field:
    """Full tendency u_t for current state u and retarded state delayed."""
    u.require("physical")
    delayed.require("physical")
    grid = same_grid(u, delayed, coeffs.damping)
    a = linear_symbol(grid, coeffs.params, dissipation_on=coeffs.dissipation_on)
    tendency = np.fft.ifft(a * np.fft.fft(u.values)).real
    tendency -= coeffs.damping.values * u.values
    tendency -= coeffs.delay_coupling.values * delayed.values
    if coeffs.nonlinearity_on:
        tendency += nonlinearity(u, coeffs.params).values
    return Field.physical(tendency, grid)
