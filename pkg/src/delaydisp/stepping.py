"""Exponential time differencing advancement (ETD1 and ETDRK4).

The constant-coefficient linear part evolves exactly through its Fourier
symbol; damping profiles, the delayed coupling, and the nonlinearity are
treated explicitly with phi-function weights.  Because Re a(xi) <= 0, the
per-mode amplification of the linear factor never exceeds 1 for any dt.

Delayed stage data: ETDRK4 stages sit at offsets (0, dt/2, dt/2, dt) into
the step, so the retarded state is needed at the two endpoints of the
ring's oldest panel (stored exactly) and at its midpoint (exact history
samples or a Hermite fit from stored tendencies, see
history.stage_retarded_values).  This keeps the delayed scheme at the
integrator's nominal order without interpolating the ring's slots.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .diagnostics import EnergyTrace
from .errors import ConfigurationError, DivergedError
from .grid import Field, Grid, sobolev_norm, sup_norm
from .history import (
    DelayHistory,
    history_from_field,
    init_history,
    load_snapshot,
    memory_integral,
    push,
    save_snapshot,
    stage_retarded_values,
)
from .operators import CoefficientSet, linear_symbol, nonlinear_flux_hat

SCHEMES = ("etd1", "etdrk4")

_SERIES_RADIUS = 0.5
_SERIES_TERMS = 24
_BLOWUP_NORM = 1e12


def _phi_series(z: np.ndarray, order: int) -> np.ndarray:
    term = np.full_like(z, 1.0 / math.factorial(order))
    total = term.copy()
    for n in range(1, _SERIES_TERMS):
        term = term * z / (n + order)
        total += term
    return total


def _phi(z: np.ndarray, order: int) -> np.ndarray:
    """phi_order(z), evaluated by Taylor series for |z| < 1/2 and by the
    closed form elsewhere (the split avoids cancellation at small |z|)."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_RADIUS
    if np.any(small):
        out[small] = _phi_series(z[small], order)
    large = ~small
    if np.any(large):
        zl = z[large]
        ez = np.exp(zl)
        if order == 1:
            out[large] = (ez - 1.0) / zl
        elif order == 2:
            out[large] = (ez - 1.0 - zl) / zl**2
        elif order == 3:
            out[large] = (ez - 1.0 - zl - 0.5 * zl**2) / zl**3
        else:
            raise ConfigurationError(f"phi order {order} not implemented")
    return out


def phi1(z):
    return _phi(z, 1)


def phi2(z):
    return _phi(z, 2)


def phi3(z):
    return _phi(z, 3)


@dataclass(frozen=True)
class EtdTables:
    """Per-mode propagators and stage weights for one (symbol, dt) pair."""

    dt: float
    exp_full: np.ndarray
    exp_half: np.ndarray
    etd1_weight: np.ndarray  # dt * phi1(z)
    half_weight: np.ndarray  # dt * phi1(z/2) / 2, the internal stage weight
    weight_1: np.ndarray
    weight_2: np.ndarray
    weight_3: np.ndarray


def etd_coefficients(a: np.ndarray, dt: float) -> EtdTables:
    """Exponential factors e^(a dt) plus ETD1/ETDRK4 phi-function weights."""
    if dt <= 0:
        raise ConfigurationError(f"time step must be positive, got dt={dt}")
    z = np.asarray(a, dtype=complex) * dt
    p1, p2, p3 = phi1(z), phi2(z), phi3(z)
    return EtdTables(
        dt=dt,
        exp_full=np.exp(z),
        exp_half=np.exp(0.5 * z),
        etd1_weight=dt * p1,
        half_weight=0.5 * dt * phi1(0.5 * z),
        weight_1=dt * (p1 - 3.0 * p2 + 4.0 * p3),
        weight_2=dt * (p2 - 2.0 * p3),
        weight_3=dt * (4.0 * p3 - p2),
    )


@dataclass
class SimState:
    """One simulation instance: spectral state, ring history, and tables."""

    grid: Grid
    coeffs: CoefficientSet
    scheme: str
    dt: float
    u_hat: np.ndarray
    history: DelayHistory
    tables: EtdTables
    symbol: np.ndarray  # effective linear symbol (folded damping included)
    explicit_damping: np.ndarray
    folded_damping: float
    step_index: int = 0
    failed: bool = False
    failure_reason: str = ""
    _stage1_cache: Optional[np.ndarray] = field(
        default=None, init=False, repr=False, compare=False
    )

    @property
    def t(self) -> float:
        return self.step_index * self.dt

    @property
    def u(self) -> Field:
        return Field.physical(np.fft.ifft(self.u_hat).real, self.grid)

    @property
    def has_delay(self) -> bool:
        return self.coeffs.tau > 0 and sup_norm(self.coeffs.delay_coupling) > 0

    @property
    def has_explicit_damping(self) -> bool:
        return bool(np.max(np.abs(self.explicit_damping)) > 0)

    @property
    def explicit_part_is_zero(self) -> bool:
        return not (
            self.coeffs.nonlinearity_on or self.has_explicit_damping or self.has_delay
        )


def _effective_symbol(
    grid: Grid, coeffs: CoefficientSet, folded_damping: float
) -> np.ndarray:
    a = linear_symbol(grid, coeffs.params, dissipation_on=coeffs.dissipation_on)
    return a - folded_damping


def new_simulation(
    coeffs: CoefficientSet,
    initial: Union[Field, DelayHistory, Callable[[float], np.ndarray]],
    scheme: str = "etdrk4",
    dt: Optional[float] = None,
    n_tau: Optional[int] = None,
    fold_constant_damping: bool = False,
) -> SimState:
    """Assemble a SimState from coefficients and initial data.

    For tau > 0 the step is locked to dt = tau/n_tau; `initial` may be a
    Field (constant-in-time history), a callable s -> values on [-tau, 0],
    or a prebuilt DelayHistory.  For tau = 0 pass dt explicitly.

    fold_constant_damping moves the (nonnegative part of the) grid minimum
    of the damping profile into the exponential symbol; the remainder stays
    explicit.  With a constant nonnegative profile this makes the damped
    linear dynamics exact per mode while keeping every exponential factor
    contractive.
    """
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    grid = coeffs.grid
    if isinstance(initial, DelayHistory):
        history = initial
        if history.grid != grid:
            raise ConfigurationError("history grid does not match coefficient grid")
        if abs(history.tau - coeffs.tau) > 1e-12:
            raise ConfigurationError("history delay does not match coefficients")
        step_dt = history.dt if coeffs.tau > 0 else dt
        if step_dt is None:
            raise ConfigurationError("tau = 0 requires an explicit dt")
    elif coeffs.tau > 0:
        if n_tau is None or n_tau < 1:
            raise ConfigurationError("tau > 0 requires n_tau >= 1")
        step_dt = coeffs.tau / n_tau
        if dt is not None and abs(dt - step_dt) > 1e-12 * max(1.0, step_dt):
            raise ConfigurationError(
                f"dt={dt} conflicts with tau/n_tau={step_dt}; omit dt or make them agree"
            )
        if isinstance(initial, Field):
            history = history_from_field(initial, coeffs.tau, n_tau)
        else:
            history = init_history(initial, grid, coeffs.tau, n_tau)
    else:
        if dt is None or dt <= 0:
            raise ConfigurationError("tau = 0 requires a positive dt")
        step_dt = dt
        if isinstance(initial, Field):
            history = history_from_field(initial, 0.0, 0)
        else:
            history = init_history(initial, grid, 0.0, 0)
    folded = (
        max(float(np.min(coeffs.damping.values)), 0.0)
        if fold_constant_damping
        else 0.0
    )
    explicit_damping = coeffs.damping.values - folded
    symbol = _effective_symbol(grid, coeffs, folded)
    u0 = history.slots[-1]
    state = SimState(
        grid=grid,
        coeffs=coeffs,
        scheme=scheme,
        dt=float(step_dt),
        u_hat=np.fft.fft(u0),
        history=history,
        tables=etd_coefficients(symbol, float(step_dt)),
        symbol=symbol,
        explicit_damping=explicit_damping,
        folded_damping=folded,
    )
    state.step_index = history.newest_index
    _refresh_newest_slope(state)
    return state


def _refresh_newest_slope(state: SimState) -> None:
    """Record du/dt at the ring's newest slot and cache the stage-1 term.

    The tendency uses the retarded value at the oldest slot, which is the
    same value the next step's first stage needs, so the explicit part is
    computed once and shared.
    """
    if not state.has_delay:
        state._stage1_cache = None
        return
    stage1 = _explicit_hat(state, state.u_hat, state.history.slots[0])
    slope_hat = state.symbol * state.u_hat + stage1
    state.history.set_newest_slope(np.fft.ifft(slope_hat).real)
    state._stage1_cache = stage1


def set_linear_mode(
    state: SimState,
    nonlinearity_on: Optional[bool] = None,
    dissipation_on: Optional[bool] = None,
) -> SimState:
    """Toggle the nonlinear and dissipative terms, rebuilding the tables."""
    if nonlinearity_on is not None:
        state.coeffs.nonlinearity_on = nonlinearity_on
    if dissipation_on is not None:
        state.coeffs.dissipation_on = dissipation_on
    state.symbol = _effective_symbol(state.grid, state.coeffs, state.folded_damping)
    state.tables = etd_coefficients(state.symbol, state.dt)
    _refresh_newest_slope(state)
    return state


def _explicit_hat(state: SimState, v_hat: np.ndarray, delayed: np.ndarray) -> np.ndarray:
    """Spectrum of the explicitly treated tendency at one stage value."""
    physical_part = None
    if state.has_explicit_damping:
        v = np.fft.ifft(v_hat).real
        physical_part = -state.explicit_damping * v
    if state.has_delay:
        coupling = state.coeffs.delay_coupling.values * delayed
        physical_part = -coupling if physical_part is None else physical_part - coupling
    hat = (
        np.fft.fft(physical_part)
        if physical_part is not None
        else np.zeros_like(v_hat)
    )
    if state.coeffs.nonlinearity_on:
        hat = hat + nonlinear_flux_hat(v_hat, state.grid, state.coeffs.params)
    return hat


def step(state: SimState) -> SimState:
    """Advance one step of the configured scheme, pushing into the ring."""
    if state.failed:
        raise DivergedError(state.failure_reason or "state already failed")
    tab = state.tables
    u_hat = state.u_hat
    try:
        if state.explicit_part_is_zero:
            new_hat = tab.exp_full * u_hat
        else:
            if state.has_delay:
                del_0, del_half, del_1 = stage_retarded_values(state.history)
            else:
                del_0 = del_half = del_1 = None
            if state._stage1_cache is not None:
                n1 = state._stage1_cache
            else:
                n1 = _explicit_hat(state, u_hat, del_0)
            if state.scheme == "etd1":
                new_hat = tab.exp_full * u_hat + tab.etd1_weight * n1
            else:
                a_hat = tab.exp_half * u_hat + tab.half_weight * n1
                n2 = _explicit_hat(state, a_hat, del_half)
                b_hat = tab.exp_half * u_hat + tab.half_weight * n2
                n3 = _explicit_hat(state, b_hat, del_half)
                c_hat = tab.exp_half * a_hat + tab.half_weight * (2.0 * n3 - n1)
                n4 = _explicit_hat(state, c_hat, del_1)
                new_hat = (
                    tab.exp_full * u_hat
                    + tab.weight_1 * n1
                    + 2.0 * tab.weight_2 * (n2 + n3)
                    + tab.weight_3 * n4
                )
    except DivergedError as exc:
        # stage evaluation overflowed: the pre-step state is kept intact
        state.failed = True
        state.failure_reason = f"stage evaluation at t={state.t:.6g} diverged: {exc}"
        raise DivergedError(state.failure_reason) from exc
    norm = math.sqrt(
        max(np.sum(np.abs(new_hat) ** 2) * state.grid.dx / state.grid.points, 0.0)
    ) if np.all(np.isfinite(new_hat)) else math.inf
    if not math.isfinite(norm) or norm > _BLOWUP_NORM:
        # keep the last finite state for post-mortem diagnostics
        state.failed = True
        state.failure_reason = (
            f"state diverged at t={(state.step_index + 1) * state.dt:.6g} "
            f"(L2 norm {norm:.3g})"
        )
        raise DivergedError(state.failure_reason)
    state.u_hat = new_hat
    state.step_index += 1
    u_phys = Field.physical(np.fft.ifft(new_hat).real, state.grid)
    push(state.history, u_phys, state.t)
    _refresh_newest_slope(state)
    return state


def _sample(state: SimState, sobolev_orders: Iterable[float]) -> dict:
    grid = state.grid
    parseval = grid.dx / grid.points
    power = np.abs(state.u_hat) ** 2
    record = {"t": state.t, "E": 0.5 * float(np.sum(power)) * parseval}
    if state.coeffs.dissipation_on:
        xi = grid.wavenumbers
        record["diss"] = float(np.sum(xi ** (2 * state.coeffs.params.m) * power)) * parseval
    else:
        record["diss"] = 0.0
    u = np.fft.ifft(state.u_hat).real
    record["damp"] = float(np.sum(state.coeffs.damping.values * u * u)) * grid.dx
    if state.has_delay:
        retarded = state.history.slots[0]
        record["delay"] = (
            float(np.sum(state.coeffs.delay_coupling.values * retarded * u)) * grid.dx
        )
        record["scriptE"] = record["E"] + 0.5 * memory_integral(
            state.history, state.coeffs.delay_coupling, state.t
        )
    else:
        record["delay"] = 0.0
        record["scriptE"] = record["E"]
    spectral = Field.spectral(state.u_hat, grid)
    for s in sobolev_orders:
        record[f"Hs_{s:g}"] = sobolev_norm(spectral, s)
    return record


def save_checkpoint(state: SimState, prefix) -> None:
    """Checkpoint a simulation: ring snapshot plus scalar metadata.

    Writes ``<prefix>.ring`` (the delay-history binary format) and
    ``<prefix>.json`` (scheme, dt, step index, folding).  Coefficients are
    not stored; restoring needs the same CoefficientSet.  The state is
    rebuilt from the ring's newest physical slot, so a resumed run agrees
    with the uninterrupted one to rounding (one transform round trip), not
    bitwise.
    """
    prefix = str(prefix)
    save_snapshot(state.history, prefix + ".ring")
    metadata = {
        "scheme": state.scheme,
        "dt": state.dt,
        "step_index": state.step_index,
        "t": state.t,
        "fold_constant_damping": state.folded_damping != 0.0,
        "failed": state.failed,
        "failure_reason": state.failure_reason,
    }
    Path(prefix + ".json").write_text(json.dumps(metadata, indent=2) + "\n")


def load_checkpoint(prefix, coeffs: CoefficientSet) -> SimState:
    """Rebuild a SimState from a checkpoint and its coefficient set."""
    prefix = str(prefix)
    metadata = json.loads(Path(prefix + ".json").read_text())
    history = load_snapshot(prefix + ".ring")
    state = new_simulation(
        coeffs,
        history,
        scheme=metadata["scheme"],
        dt=metadata["dt"],
        fold_constant_damping=metadata["fold_constant_damping"],
    )
    if metadata["failed"]:
        state.failed = True
        state.failure_reason = metadata.get("failure_reason", "")
    return state


def run(
    state: SimState,
    t_final: float,
    sample_stride: int = 1,
    sobolev_orders: Iterable[float] = (),
    config: Optional[dict] = None,
) -> tuple[EnergyTrace, SimState]:
    """Integrate to t_final, sampling diagnostics every sample_stride steps.

    Returns the trace and the final state.  Divergence truncates the trace
    and marks meta["status"] = "diverged" instead of raising.
    """
    sobolev_orders = tuple(sobolev_orders)
    if sample_stride < 1:
        raise ConfigurationError("sample_stride must be >= 1")
    span = t_final - state.t
    n_steps = round(span / state.dt)
    if n_steps < 1 or abs(n_steps * state.dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ConfigurationError(
            f"t_final - t = {span} is not a positive multiple of dt = {state.dt}"
        )
    if n_steps % sample_stride != 0:
        raise ConfigurationError("sample_stride must divide the step count")
    if state.coeffs.tau > 0 and state.history.n_tau % sample_stride != 0:
        raise ConfigurationError(
            "sample_stride must divide n_tau so samples align with the delay"
        )
    records = [_sample(state, sobolev_orders)]
    status = "ok"
    for i in range(1, n_steps + 1):
        try:
            step(state)
        except DivergedError:
            status = "diverged"
            break
        if i % sample_stride == 0:
            records.append(_sample(state, sobolev_orders))
    columns = {key: np.array([r[key] for r in records]) for key in records[0]}
    g = columns["diss"] + columns["damp"] + columns["delay"]
    residual = np.zeros_like(g)
    if len(g) > 1:
        spacing = np.diff(columns["t"])
        running = np.concatenate(([0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * spacing)))
        residual = columns["E"] - columns["E"][0] + running
    meta = {
        "tau": state.coeffs.tau,
        "dt": state.dt,
        "scheme": state.scheme,
        "sample_stride": sample_stride,
        "status": status,
        "config": dict(config) if config else {},
    }
    trace = EnergyTrace(
        t=columns["t"],
        E=columns["E"],
        script_E=columns["scriptE"],
        dissipation=columns["diss"],
        damping=columns["damp"],
        delay=columns["delay"],
        residual=residual,
        sobolev={s: columns[f"Hs_{s:g}"] for s in sobolev_orders},
        meta=meta,
    )
    return trace, state
