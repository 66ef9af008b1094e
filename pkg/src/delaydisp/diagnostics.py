"""Energy functionals, balance residuals, decay fits, and inequality audits.

The trace produced by a run records, per sample, the plain energy E, the
delay-augmented functional scriptE (energy plus half the exponentially
weighted memory integral), the instantaneous dissipation / damping / delay
powers entering the energy balance, a running balance residual, and any
requested H^s norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np
from scipy.integrate import simpson

from .errors import ConfigurationError, DecayFitError
from .grid import Field, l2_norm, spectral_derivative, sup_norm
from .history import memory_integral

CSV_BASE_COLUMNS = ("t", "E", "scriptE", "diss", "damp", "delay", "residual")


def energy(u: Field) -> float:
    """E = 0.5 * ||u||_2^2."""
    return 0.5 * l2_norm(u) ** 2


def lyapunov(state) -> float:
    """scriptE = E(u) + 0.5 * memory integral of the delayed coupling.

    `state` needs attributes u (physical Field), history, coeffs, and t.
    """
    base = energy(state.u)
    if state.coeffs.tau == 0:
        return base
    return base + 0.5 * memory_integral(
        state.history, state.coeffs.delay_coupling, state.t
    )


@dataclass
class EnergyTrace:
    """Uniformly sampled time series of the energy diagnostics."""

    t: np.ndarray
    E: np.ndarray
    script_E: np.ndarray
    dissipation: np.ndarray
    damping: np.ndarray
    delay: np.ndarray
    residual: np.ndarray
    sobolev: Dict[float, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.t)
        for name in ("E", "script_E", "dissipation", "damping", "delay", "residual"):
            if len(getattr(self, name)) != n:
                raise ConfigurationError(f"trace column {name} has mismatched length")

    @property
    def sample_spacing(self) -> float:
        if len(self.t) < 2:
            raise ConfigurationError("trace has fewer than two samples")
        return float(self.t[1] - self.t[0])

    def column(self, name: str) -> np.ndarray:
        """Column by CSV name: one of t,E,scriptE,diss,damp,delay,residual,Hs_<s>."""
        mapping = {
            "t": self.t, "E": self.E, "scriptE": self.script_E,
            "diss": self.dissipation, "damp": self.damping,
            "delay": self.delay, "residual": self.residual,
        }
        if name in mapping:
            return mapping[name]
        if name.startswith("Hs_"):
            return self.sobolev[float(name[3:])]
        raise KeyError(name)


def _flatten_config(config: dict, prefix: str = "") -> Iterable[tuple[str, object]]:
    for key in sorted(config):
        value = config[key]
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten_config(value, dotted + ".")
        else:
            yield dotted, value


def write_trace_csv(trace: EnergyTrace, path) -> None:
    """CSV with 17-significant-digit floats and the resolved config embedded
    as leading ``# key = value`` comment lines."""
    columns = list(CSV_BASE_COLUMNS) + [f"Hs_{s:g}" for s in sorted(trace.sobolev)]
    arrays = [trace.column(c) for c in columns]
    with open(path, "w") as fh:
        for key, value in _flatten_config(trace.meta.get("config", {})):
            fh.write(f"# {key} = {value!r}\n")
        fh.write(f"# status = {trace.meta.get('status', 'ok')!r}\n")
        fh.write(",".join(columns) + "\n")
        for i in range(len(trace.t)):
            fh.write(",".join(f"{a[i]:.17g}" for a in arrays) + "\n")


def read_trace_csv(path) -> EnergyTrace:
    """Inverse of write_trace_csv (config comments are kept as raw strings)."""
    comments: Dict[str, str] = {}
    with open(path) as fh:
        line = fh.readline()
        while line.startswith("#"):
            key, _, value = line[1:].partition("=")
            comments[key.strip()] = value.strip()
            line = fh.readline()
        columns = line.strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    by_name = {name: data[:, i] for i, name in enumerate(columns)}
    sobolev = {
        float(name[3:]): by_name[name] for name in columns if name.startswith("Hs_")
    }
    meta = {"config_echo": comments}
    if "tau" in comments:
        meta["tau"] = float(comments["tau"])
    return EnergyTrace(
        t=by_name["t"], E=by_name["E"], script_E=by_name["scriptE"],
        dissipation=by_name["diss"], damping=by_name["damp"], delay=by_name["delay"],
        residual=by_name["residual"], sobolev=sobolev, meta=meta,
    )


def _segment_bounds(t: np.ndarray, tau: float) -> list[tuple[int, int]]:
    """Split sample indices at multiples of tau (the solution's kink times)."""
    if tau <= 0:
        return [(0, len(t) - 1)]
    h = float(t[1] - t[0])
    per_segment = tau / h
    if abs(per_segment - round(per_segment)) > 1e-9:
        raise ConfigurationError(
            "balance residual needs samples aligned with multiples of the delay; "
            f"tau={tau} is not a multiple of the sample spacing {h}"
        )
    step = int(round(per_segment))
    if step < 4:
        raise ConfigurationError(
            "balance residual needs sample spacing <= tau/4 "
            f"(got spacing {h} for tau={tau})"
        )
    bounds = []
    start = 0
    while start < len(t) - 1:
        stop = min(start + step, len(t) - 1)
        bounds.append((start, stop))
        start = stop
    return bounds


def balance_residual(trace: EnergyTrace, t_end: Optional[float] = None) -> float:
    """Defect of the cumulative energy identity over [0, t_end].

    Residual = E(t_end) - E(0) + int_0^t_end (dissipation + damping + delay).
    The time integral uses composite Simpson quadrature on each interval
    between consecutive multiples of tau, where the integrand is smooth, so
    the residual reflects the integrator's error rather than the quadrature's.
    """
    t = trace.t
    if t_end is None:
        last = len(t) - 1
    else:
        matches = np.nonzero(np.abs(t - t_end) <= 1e-9 * max(1.0, abs(t_end)))[0]
        if len(matches) == 0:
            raise ConfigurationError(f"t_end={t_end} is not a sample time")
        last = int(matches[0])
    if last < 1:
        return 0.0
    spacing = trace.sample_spacing
    if not np.allclose(np.diff(t[: last + 1]), spacing, rtol=0, atol=1e-9):
        raise ConfigurationError("balance residual requires uniform sampling")
    g = (trace.dissipation + trace.damping + trace.delay)[: last + 1]
    total = 0.0
    for start, stop in _segment_bounds(t[: last + 1], float(trace.meta.get("tau", 0.0))):
        seg = g[start : stop + 1]
        if len(seg) >= 3:
            total += float(simpson(seg, dx=spacing))
        else:
            total += float(np.trapezoid(seg, dx=spacing))
    return float(trace.E[last] - trace.E[0] + total)


@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit result: values ~ amplitude * exp(-rate * t)."""

    rate: float
    amplitude: float
    r_squared: float


def fit_decay_rate(
    times: np.ndarray, values: np.ndarray, window: tuple[float, float]
) -> DecayFit:
    """Least-squares line fit of log(values) against t over the window.

    The rate is the negated slope.  All samples inside the window must be
    strictly positive.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    mask = (times >= lo) & (times <= hi)
    if np.count_nonzero(mask) < 2:
        raise DecayFitError(f"window [{lo}, {hi}] holds fewer than two samples")
    tw, vw = times[mask], values[mask]
    if np.any(vw <= 0):
        raise DecayFitError("decay fit requires strictly positive samples")
    logs = np.log(vw)
    slope, intercept = np.polyfit(tw, logs, 1)
    fitted = slope * tw + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return DecayFit(rate=-float(slope), amplitude=math.exp(float(intercept)),
                    r_squared=r_squared)


def fit_trace_decay(
    trace: EnergyTrace, window: tuple[float, float], functional: str
) -> DecayFit:
    """Decay fit of a trace column; functional is E, scriptE, or Hs_<s>."""
    return fit_decay_rate(trace.t, trace.column(functional), window)


# Peak-to-boundary factor required before the whole-line inequalities are
# meaningful on the periodic box.
_DECAY_REQUIREMENT = 1e10


def _require_boundary_decay(v: Field) -> float:
    peak = sup_norm(v)
    if peak == 0:
        raise ConfigurationError("inequality audit is undefined for the zero field")
    boundary = abs(float(v.values[0]))
    if boundary * _DECAY_REQUIREMENT > peak:
        raise ConfigurationError(
            "field is not boundary-decayed (peak-to-boundary ratio <= 1e10)"
        )
    return peak


def check_interpolation_inequality(v: Field) -> float:
    """Audit ratio ||v||_inf^2 / (2 ||v||_2 ||v_x||_2); at most 1 on the line.

    Requires a boundary-decayed field so the whole-line estimate applies on
    the box.  The ratio is scale invariant.
    """
    v.require("physical")
    peak = _require_boundary_decay(v)
    denominator = 2.0 * l2_norm(v) * l2_norm(spectral_derivative(v, 1))
    return peak**2 / denominator


def check_gn_ratio(u: Field, m: int, j: int) -> float:
    """Interpolation ratio ||d^m u|| / (||d^j u||^(m/j) ||u||^(1-m/j)).

    Bounded over smooth decayed families; exactly 1 for a pure mode or for
    m = j.
    """
    u.require("physical")
    if not 1 <= m <= j:
        raise ConfigurationError(f"need 1 <= m <= j, got m={m}, j={j}")
    numerator = l2_norm(spectral_derivative(u, m))
    high = l2_norm(spectral_derivative(u, j))
    if m == j:
        if high == 0:
            raise ConfigurationError("ratio undefined: highest derivative vanishes")
        return numerator / high
    base = l2_norm(u)
    if high == 0 or base == 0:
        raise ConfigurationError("ratio undefined for constant or zero fields")
    return numerator / (high ** (m / j) * base ** (1.0 - m / j))
