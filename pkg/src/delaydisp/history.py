"""Method-of-steps storage of the solution over one delay interval.

The ring keeps n_tau + 1 snapshots spaced exactly dt = tau/n_tau apart, so
the retarded state u(t - tau) is always the oldest slot and reading it
never interpolates.  Timestamps are kept as integer slot indices times dt,
which makes the alignment check exact over arbitrarily many pushes.

Stage-level evaluation inside a step additionally needs the retarded
trajectory at the midpoint of the ring's oldest panel.  Two exact-order
sources cover every panel without ever crossing one of the solution's
derivative-jump times (which sit on the slot lattice):

* panels still inside the prescribed history (midpoint time <= 0) use
  midpoint values sampled from the history profile at construction;
* computed panels use a cubic Hermite fit from the two bracketing slots
  and their stored tendencies (pushed by the integrator), an O(dt^4)
  reconstruction.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Optional

import numpy as np

from .errors import ConfigurationError, GridMismatchError, HistoryAlignmentError
from .grid import Field, Grid

_SNAPSHOT_MAGIC = b"DDHS"
_SNAPSHOT_VERSION = 2

# |t_new - (newest + dt)| tolerated by push; both sides derive times as
# integer multiples of dt, so the true discrepancy is at most one ulp.
_ALIGNMENT_TOL = 1e-12

# Fallback midpoint weights (cubic Lagrange on slots [0..3] at offset 0.5)
# for rings whose slopes were never populated by an integrator.
_MIDPANEL_CUBIC = (0.3125, 0.9375, -0.3125, 0.0625)


@dataclass
class DelayHistory:
    """Ring of past states spanning exactly [t - tau, t]."""

    grid: Grid
    tau: float
    n_tau: int
    dt: float
    slots: Deque[np.ndarray] = field(repr=False)
    slopes: Deque[Optional[np.ndarray]] = field(repr=False)
    initial_midpoints: Deque[np.ndarray] = field(repr=False)
    newest_index: int = 0  # timestamp of newest slot is newest_index * dt

    @property
    def slot_count(self) -> int:
        return self.n_tau + 1

    @property
    def newest_time(self) -> float:
        return self.newest_index * self.dt

    @property
    def oldest_time(self) -> float:
        return (self.newest_index - self.n_tau) * self.dt

    def timestamps(self) -> np.ndarray:
        """Slot times, oldest first."""
        return (np.arange(self.slot_count) + self.newest_index - self.n_tau) * self.dt

    def set_newest_slope(self, slope: np.ndarray) -> None:
        """Record du/dt at the newest slot (used by the integrator)."""
        self.slopes[-1] = np.asarray(slope, dtype=float)


def init_history(
    u0: Callable[[float], np.ndarray], grid: Grid, tau: float, n_tau: int
) -> DelayHistory:
    """Fill the ring from a time-parameterized profile u0(s), s in [-tau, 0].

    Slots are filled oldest-first at s = -tau + k*dt; the newest slot is
    u0(0).  Panel midpoints u0(s + dt/2) are sampled as well so that stage
    evaluation inside the prescribed history is exact.  tau = 0 degenerates
    to a single slot holding u0(0).
    """
    if tau < 0:
        raise ConfigurationError(f"delay must be >= 0, got tau={tau}")
    if tau > 0 and n_tau < 1:
        raise ConfigurationError("tau > 0 requires n_tau >= 1 history slots")
    if tau == 0:
        n_tau = 0
    dt = tau / n_tau if n_tau > 0 else 0.0

    def sample(s: float) -> np.ndarray:
        values = np.asarray(u0(s), dtype=float)
        if values.shape != (grid.points,):
            raise ConfigurationError(
                f"history profile returned shape {values.shape}, expected ({grid.points},)"
            )
        return values.copy()

    slots: Deque[np.ndarray] = deque(maxlen=n_tau + 1)
    slopes: Deque[Optional[np.ndarray]] = deque(maxlen=n_tau + 1)
    midpoints: Deque[np.ndarray] = deque()
    for k in range(n_tau + 1):
        slots.append(sample((k - n_tau) * dt))
        slopes.append(None)
        if k < n_tau:
            midpoints.append(sample((k - n_tau + 0.5) * dt))
    return DelayHistory(
        grid=grid, tau=tau, n_tau=n_tau, dt=dt, slots=slots, slopes=slopes,
        initial_midpoints=midpoints, newest_index=0,
    )


def history_from_field(u0: Field, tau: float, n_tau: int) -> DelayHistory:
    """Constant-in-time history equal to the given field."""
    u0.require("physical")
    return init_history(lambda s: u0.values, u0.grid, tau, n_tau)


def delayed_state(h: DelayHistory) -> Field:
    """The retarded state u(. , t - tau): exactly the oldest slot."""
    return Field.physical(h.slots[0].copy(), h.grid)


def push(
    h: DelayHistory, u_new: Field, t_new: float, slope: Optional[np.ndarray] = None
) -> DelayHistory:
    """Append the state at t_new = newest + dt, evicting the oldest slot.

    Misaligned timestamps are a hard error; the ring never interpolates
    its slots.  `slope` records du/dt at the new slot for Hermite midpoint
    reconstruction.
    """
    u_new.require("physical")
    if u_new.grid != h.grid:
        raise GridMismatchError("pushed field lives on a different grid")
    if h.tau == 0:
        if t_new <= h.newest_time:
            raise HistoryAlignmentError(
                f"push must advance time, got t={t_new} after t={h.newest_time}"
            )
        h.slots[0] = u_new.values.copy()
        h.slopes[0] = None if slope is None else np.asarray(slope, dtype=float)
        h.newest_index += 1
        return h
    expected = (h.newest_index + 1) * h.dt
    if abs(t_new - expected) > _ALIGNMENT_TOL:
        raise HistoryAlignmentError(
            f"push at t={t_new!r} is off the slot lattice (expected {expected!r})"
        )
    h.slots.append(u_new.values.copy())  # deque(maxlen) evicts the oldest
    h.slopes.append(None if slope is None else np.asarray(slope, dtype=float))
    if h.initial_midpoints:
        h.initial_midpoints.popleft()  # the retired panel was an initial one
    h.newest_index += 1
    return h


def oldest_panel_midpoint(h: DelayHistory) -> np.ndarray:
    """Retarded state at t - tau + dt/2 (midpoint of the oldest panel)."""
    if h.n_tau == 0:
        return h.slots[0]
    if h.initial_midpoints:
        return h.initial_midpoints[0]
    s0, s1 = h.slots[0], h.slots[1]
    d0, d1 = h.slopes[0], h.slopes[1]
    if d0 is not None and d1 is not None:
        return 0.5 * (s0 + s1) + 0.125 * h.dt * (d0 - d1)
    # No tendency data (ring not driven by the integrator): one-sided cubic.
    if len(h.slots) >= 4:
        w = _MIDPANEL_CUBIC
        return w[0] * s0 + w[1] * s1 + w[2] * h.slots[2] + w[3] * h.slots[3]
    return 0.5 * (s0 + s1)


def stage_retarded_values(h: DelayHistory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Retarded trajectory at offsets (0, dt/2, dt) past t - tau."""
    if h.n_tau == 0:
        current = h.slots[0]
        return current, current, current
    return h.slots[0], oldest_panel_midpoint(h), h.slots[1]


def memory_integral(h: DelayHistory, lam: Field, t: float) -> float:
    """Trapezoid evaluation of int_{t-tau}^t int e^{-(t-s)} |lam| u^2 dx ds.

    t must be the ring's newest timestamp.  Returns 0 for tau = 0.
    """
    lam.require("physical")
    if lam.grid != h.grid:
        raise GridMismatchError("coupling profile lives on a different grid")
    if h.tau == 0:
        return 0.0
    if abs(t - h.newest_time) > _ALIGNMENT_TOL * max(1.0, abs(t)):
        raise HistoryAlignmentError(
            f"memory integral requested at t={t!r}, ring is at t={h.newest_time!r}"
        )
    abs_lam = np.abs(lam.values)
    dx = h.grid.dx
    ages = (h.n_tau - np.arange(h.slot_count)) * h.dt  # t - s_k, oldest first
    spatial = np.array([np.sum(abs_lam * u * u) * dx for u in h.slots])
    weights = np.full(h.slot_count, h.dt)
    weights[0] = weights[-1] = 0.5 * h.dt
    return float(np.sum(weights * np.exp(-ages) * spatial))


def save_snapshot(h: DelayHistory, path) -> None:
    """Write the ring to a binary checkpoint.

    Layout: 16-byte header (magic ``DDHS``, uint32 version, uint64
    reserved=0), then little-endian float64 values: tau, dt, n_tau,
    grid N, grid L, newest slot index, remaining initial-midpoint count,
    followed by the slot fields oldest-first (slot_count x N), a slope
    mask (slot_count values, 1 where a tendency is stored), the stored
    tendencies in slot order, and the remaining initial midpoints.
    """
    header = _SNAPSHOT_MAGIC + struct.pack("<IQ", _SNAPSHOT_VERSION, 0)
    mask = np.array([0.0 if d is None else 1.0 for d in h.slopes])
    scalars = np.array(
        [h.tau, h.dt, float(h.n_tau), float(h.grid.points), h.grid.length,
         float(h.newest_index), float(len(h.initial_midpoints))],
        dtype="<f8",
    )
    chunks = [np.stack(list(h.slots)), mask]
    stored = [d for d in h.slopes if d is not None]
    if stored:
        chunks.append(np.stack(stored))
    if h.initial_midpoints:
        chunks.append(np.stack(list(h.initial_midpoints)))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(scalars.tobytes())
        for chunk in chunks:
            fh.write(chunk.astype("<f8", copy=False).tobytes())


def load_snapshot(path) -> DelayHistory:
    """Read a checkpoint written by save_snapshot."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if header[:4] != _SNAPSHOT_MAGIC:
            raise ConfigurationError(f"{path}: not a delay-history snapshot")
        (version,) = struct.unpack("<I", header[4:8])
        if version != _SNAPSHOT_VERSION:
            raise ConfigurationError(f"{path}: unsupported snapshot version {version}")
        scalars = np.frombuffer(fh.read(7 * 8), dtype="<f8")
        tau, dt, n_tau_f, points_f, length, newest_f, midpoint_count_f = scalars
        n_tau, points = int(n_tau_f), int(points_f)
        count = n_tau + 1

        def read_block(rows: int) -> np.ndarray:
            return np.frombuffer(fh.read(rows * points * 8), dtype="<f8").reshape(
                rows, points
            )

        slot_block = read_block(count)
        mask = np.frombuffer(fh.read(count * 8), dtype="<f8")
        slope_block = read_block(int(mask.sum()))
        midpoint_block = read_block(int(midpoint_count_f))
    grid = Grid(length=float(length), points=points)
    slopes: Deque[Optional[np.ndarray]] = deque(maxlen=count)
    j = 0
    for flag in mask:
        if flag:
            slopes.append(slope_block[j].copy())
            j += 1
        else:
            slopes.append(None)
    return DelayHistory(
        grid=grid, tau=float(tau), n_tau=n_tau, dt=float(dt),
        slots=deque(slot_block.copy(), maxlen=count),
        slopes=slopes,
        initial_midpoints=deque(midpoint_block.copy()),
        newest_index=int(newest_f),
    )
