"""Preset coefficient profiles, initial data, and history factories.

Profiles are centered in the box by default so that compactly supported or
rapidly decaying shapes respect the boundary-decay rule the experiments
rely on.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError
from .grid import Field, Grid


def gaussian(
    grid: Grid,
    center: Optional[float] = None,
    width: float = 1.0,
    amplitude: float = 1.0,
    baseline: float = 0.0,
) -> Field:
    """baseline + amplitude * exp(-(x - center)^2 / (2 width^2))."""
    if width <= 0:
        raise ConfigurationError(f"gaussian width must be positive, got {width}")
    x0 = 0.5 * grid.length if center is None else center
    values = baseline + amplitude * np.exp(-((grid.x - x0) ** 2) / (2.0 * width**2))
    return Field.physical(values, grid)


def bump_compact(
    grid: Grid,
    center: Optional[float] = None,
    radius: float = 1.0,
    amplitude: float = 1.0,
    baseline: float = 0.0,
) -> Field:
    """Smooth bump amplitude * exp(1 - 1/(1 - r^2)) supported on |x - center| < radius."""
    if radius <= 0:
        raise ConfigurationError(f"bump radius must be positive, got {radius}")
    x0 = 0.5 * grid.length if center is None else center
    r = (grid.x - x0) / radius
    values = np.full(grid.points, float(baseline))
    inside = np.abs(r) < 1.0
    values[inside] += amplitude * np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return Field.physical(values, grid)


def sech_power(
    grid: Grid,
    center: Optional[float] = None,
    width: float = 1.0,
    amplitude: float = 1.0,
    power: float = 2.0,
) -> Field:
    """amplitude * sech((x - center)/width)^power."""
    if width <= 0:
        raise ConfigurationError(f"sech width must be positive, got {width}")
    x0 = 0.5 * grid.length if center is None else center
    values = amplitude / np.cosh((grid.x - x0) / width) ** power
    return Field.physical(values, grid)


def constant(grid: Grid, value: float) -> Field:
    return Field.physical(np.full(grid.points, float(value)), grid)


def constant_history(profile: Field) -> Callable[[float], np.ndarray]:
    """History u0(x, s) = profile(x) for all s in [-tau, 0]."""
    profile.require("physical")
    return lambda s: profile.values


def exponential_history(profile: Field, alpha: float) -> Callable[[float], np.ndarray]:
    """History u0(x, s) = e^(alpha s) * profile(x)."""
    profile.require("physical")
    return lambda s: np.exp(alpha * s) * profile.values


def boundary_decay_factor(values: np.ndarray, baseline: float = 0.0) -> float:
    """Peak-to-boundary ratio of the deviation from baseline (inf if clean)."""
    deviation = np.abs(np.asarray(values, dtype=float) - baseline)
    peak = float(np.max(deviation))
    edge = float(deviation[0])
    if peak == 0:
        return np.inf
    if edge == 0:
        return np.inf
    return peak / edge
