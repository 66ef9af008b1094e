"""Shared helpers for the test suite."""

import numpy as np

from delaydisp import Field, Grid


def band_limited(grid: Grid, rng: np.random.Generator, max_mode: int = None,
                 amplitude: float = 1.0) -> Field:
    """Random real field with spectral content confined to |k| <= max_mode."""
    if max_mode is None:
        max_mode = grid.points // 4
    values = np.zeros(grid.points)
    for k in range(1, max_mode + 1):
        a, b = rng.normal(size=2)
        values += a * np.cos(2 * np.pi * k * grid.x / grid.length)
        values += b * np.sin(2 * np.pi * k * grid.x / grid.length)
    values += rng.normal()
    scale = np.max(np.abs(values))
    if scale > 0:
        values *= amplitude / scale
    return Field.physical(values, grid)


def decayed_field(grid: Grid, rng: np.random.Generator, modes: int = 8) -> Field:
    """Random band-limited field under a sharply decaying envelope."""
    center = 0.5 * grid.length
    envelope = np.exp(-(((grid.x - center) / (grid.length / 12.0)) ** 2))
    base = np.zeros(grid.points)
    for k in range(1, modes + 1):
        c = rng.normal()
        ph = rng.uniform(0, 2 * np.pi)
        base += c * np.sin(2 * np.pi * k * grid.x / grid.length + ph)
    return Field.physical(envelope * base, grid)
