"""Run configuration: parsing, validation, and assembly of simulation parts.

Configs are flat TOML documents with dotted sections (``grid.N = 256``).
Validation enumerates every problem at once and the fully resolved
configuration (defaults included) is echoed into every output file, so
reruns are reproducible from any artifact.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import profiles
from .errors import ConfigurationError
from .grid import Field, Grid, make_grid
from .history import DelayHistory, init_history
from .operators import CoefficientSet, OperatorParams
from .stepping import SCHEMES, SimState, new_simulation

# Peak-to-boundary ratio demanded of initial data and non-constant
# coefficient profiles, so periodic wraparound stays negligible.
BOUNDARY_DECAY_FACTOR = 1e10

# Slack applied to the certified decay envelope, absorbing the quadrature
# error of the memory integral.
ENVELOPE_SLACK = 0.05

_DEFAULTS: dict[str, Any] = {
    "params.j": 1,
    "params.m": 1,
    "params.p": 1,
    "delay.tau": 0.0,
    "delay.n_tau": 0,
    "grid.L": 80.0,
    "grid.N": 256,
    "time.scheme": "etdrk4",
    "time.dt": 0.0,  # required iff tau == 0
    "time.t_final": 10.0,
    "time.sample_stride": 1,
    "damping.kind": "constant",
    "coupling.kind": "constant",
    "initial.kind": "gaussian",
    "history.kind": "constant",
    "toggles.dissipation": True,
    "toggles.nonlinearity": True,
    "toggles.fold_constant_damping": False,
    "toggles.allow_boundary_violation": False,
    "certificate.enabled": False,
    "certificate.theorem": "constant-sign",
    "certificate.q": 2.0,
    "diagnostics.sobolev_orders": [],
    "diagnostics.fit_window_start": 0.0,  # 0 -> max(2 tau, 1)
    "diagnostics.envelope_slack": ENVELOPE_SLACK,
    "seed": 0,
}

_PROFILE_KEYS = {
    "constant": {"value"},
    "gaussian": {"center", "width", "amplitude", "baseline"},
    "bump": {"center", "radius", "amplitude", "baseline"},
    "sech": {"center", "width", "amplitude", "power"},
    "tabulated": {"path"},
}


def _flatten(tree: dict, prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def parse_override(text: str) -> tuple[str, Any]:
    """Parse one ``key=value`` override; values use TOML syntax, with a
    bare-string fallback for convenience."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    raw = raw.strip()
    try:
        parsed = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        parsed = raw
    return key, parsed


@dataclass
class RunConfig:
    """Fully resolved run configuration (flat dotted-key mapping)."""

    entries: dict[str, Any]
    source: str = ""

    def __getitem__(self, key: str) -> Any:
        return self.entries[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.entries.get(key, default)

    def resolved(self) -> dict[str, Any]:
        """Copy of the flat mapping, for embedding in outputs."""
        return dict(self.entries)

    # -- assembly -----------------------------------------------------

    def build_grid(self) -> Grid:
        return make_grid(self["grid.L"], self["grid.N"])

    def build_params(self) -> OperatorParams:
        return OperatorParams(j=self["params.j"], m=self["params.m"], p=self["params.p"])

    def _build_profile(self, section: str, grid: Grid) -> Field:
        kind = self[f"{section}.kind"]
        get = lambda name, default=None: self.get(f"{section}.{name}", default)
        if kind == "constant":
            return profiles.constant(grid, get("value", 0.0))
        if kind == "gaussian":
            return profiles.gaussian(
                grid, center=get("center"), width=get("width", 1.0),
                amplitude=get("amplitude", 1.0), baseline=get("baseline", 0.0),
            )
        if kind == "bump":
            return profiles.bump_compact(
                grid, center=get("center"), radius=get("radius", 1.0),
                amplitude=get("amplitude", 1.0), baseline=get("baseline", 0.0),
            )
        if kind == "sech":
            return profiles.sech_power(
                grid, center=get("center"), width=get("width", 1.0),
                amplitude=get("amplitude", 1.0), power=get("power", 2.0),
            )
        if kind == "tabulated":
            values = np.load(get("path"))
            return Field.physical(values, grid)
        raise ConfigurationError(f"{section}.kind: unknown profile kind {kind!r}")

    def build_damping(self, grid: Grid) -> Field:
        return self._build_profile("damping", grid)

    def build_coupling(self, grid: Grid) -> Field:
        return self._build_profile("coupling", grid)

    def build_initial(self, grid: Grid) -> Field:
        return self._build_profile("initial", grid)

    def build_coeffs(self, grid: Grid) -> CoefficientSet:
        return CoefficientSet(
            params=self.build_params(),
            tau=self["delay.tau"],
            damping=self.build_damping(grid),
            delay_coupling=self.build_coupling(grid),
            dissipation_on=self["toggles.dissipation"],
            nonlinearity_on=self["toggles.nonlinearity"],
        )

    def build_history_profile(self, grid: Grid) -> Callable[[float], np.ndarray]:
        kind = self["history.kind"]
        initial = self.build_initial(grid)
        if kind == "constant":
            return profiles.constant_history(initial)
        if kind == "exponential":
            return profiles.exponential_history(initial, self.get("history.alpha", 1.0))
        if kind == "tabulated":
            table = np.load(self.get("history.path"))
            tau, n_tau = self["delay.tau"], self["delay.n_tau"]
            rows = 2 * n_tau + 1
            if table.shape != (rows, grid.points):
                raise ConfigurationError(
                    f"history table must have shape ({rows}, {grid.points}) "
                    "(half-step resolution over [-tau, 0])"
                )
            half = tau / (2 * n_tau)

            def lookup(s: float) -> np.ndarray:
                idx = round((s + tau) / half)
                if abs(idx * half - (s + tau)) > 1e-9:
                    raise ConfigurationError(
                        f"history requested off the tabulated lattice (s={s})"
                    )
                return table[idx]

            return lookup
        raise ConfigurationError(f"history.kind: unknown kind {kind!r}")

    def build_history(self, grid: Grid) -> DelayHistory:
        return init_history(
            self.build_history_profile(grid), grid,
            self["delay.tau"], self["delay.n_tau"],
        )

    def build_state(self) -> SimState:
        grid = self.build_grid()
        coeffs = self.build_coeffs(grid)
        if coeffs.tau > 0:
            initial: Any = self.build_history(grid)
            dt = None
        else:
            initial = self.build_initial(grid)
            dt = self["time.dt"]
        return new_simulation(
            coeffs,
            initial,
            scheme=self["time.scheme"],
            dt=dt,
            n_tau=self["delay.n_tau"] or None,
            fold_constant_damping=self["toggles.fold_constant_damping"],
        )

    def fit_window(self) -> tuple[float, float]:
        start = self["diagnostics.fit_window_start"]
        if start <= 0:
            start = max(2.0 * self["delay.tau"], 1.0)
        return (start, self["time.t_final"])


def _check_boundary_decay(config: RunConfig, errors: list[str]) -> None:
    if config["toggles.allow_boundary_violation"]:
        return
    try:
        grid = config.build_grid()
    except ConfigurationError:
        return  # already reported
    checks = [("initial", 0.0, config.build_initial)]
    for section, builder in (("damping", config.build_damping),
                             ("coupling", config.build_coupling)):
        if config[f"{section}.kind"] != "constant":
            baseline = config.get(f"{section}.baseline", 0.0)
            checks.append((section, baseline, builder))
    for section, baseline, builder in checks:
        try:
            profile = builder(grid)
        except (ConfigurationError, FileNotFoundError):
            continue  # reported by the schema checks
        factor = profiles.boundary_decay_factor(profile.values, baseline)
        if factor <= BOUNDARY_DECAY_FACTOR:
            errors.append(
                f"{section}: profile is not boundary-decayed "
                f"(peak-to-boundary ratio {factor:.3g} <= 1e10); widen the box, "
                "narrow the profile, or set toggles.allow_boundary_violation = true"
            )


def validate(text: str, overrides: Optional[list[str]] = None, source: str = "") -> RunConfig:
    """Parse and validate a config document, applying overrides.

    Raises ConfigurationError listing every violation.  The result has all
    defaults resolved.
    """
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config is not well-formed TOML: {exc}") from exc
    entries = dict(_DEFAULTS)
    entries.update(_flatten(tree))
    for override in overrides or []:
        key, value = parse_override(override)
        entries[key] = value
    config = RunConfig(entries=entries, source=source)
    errors: list[str] = []

    def check(condition: bool, message: str) -> None:
        if not condition:
            errors.append(message)

    j, m, p = entries["params.j"], entries["params.m"], entries["params.p"]
    check(isinstance(j, int) and j >= 1, f"params.j: need an integer >= 1, got {j!r}")
    if isinstance(j, int) and j >= 1:
        check(isinstance(m, int) and 1 <= m <= j, f"params.m: need 1 <= m <= j, got {m!r}")
        check(isinstance(p, int) and 1 <= p < 2 * j,
              f"params.p: need 1 <= p < 2j = {2 * j}, got {p!r}")
    n = entries["grid.N"]
    check(isinstance(n, int) and n >= 8 and n % 2 == 0,
          f"grid.N: need an even integer >= 8, got {n!r}")
    check(entries["grid.L"] > 0, f"grid.L: need a positive length, got {entries['grid.L']!r}")
    tau, n_tau = entries["delay.tau"], entries["delay.n_tau"]
    check(tau >= 0, f"delay.tau: need tau >= 0, got {tau!r}")
    if tau > 0:
        check(isinstance(n_tau, int) and n_tau >= 1,
              "delay.n_tau: tau > 0 requires n_tau >= 1 so that dt = tau/n_tau "
              "aligns the history ring")
        stride = entries["time.sample_stride"]
        if isinstance(n_tau, int) and n_tau >= 1 and isinstance(stride, int) and stride >= 1:
            check(n_tau % stride == 0,
                  "time.sample_stride: must divide delay.n_tau so samples align "
                  "with multiples of the delay")
    else:
        check(entries["time.dt"] > 0, "time.dt: tau = 0 requires a positive dt")
    check(entries["time.scheme"] in SCHEMES,
          f"time.scheme: choose one of {SCHEMES}, got {entries['time.scheme']!r}")
    check(entries["time.t_final"] > 0, "time.t_final: must be positive")
    check(isinstance(entries["time.sample_stride"], int) and entries["time.sample_stride"] >= 1,
          "time.sample_stride: need an integer >= 1")
    dt = tau / n_tau if (tau > 0 and isinstance(n_tau, int) and n_tau >= 1) \
        else entries["time.dt"]
    if dt and dt > 0:
        steps = entries["time.t_final"] / dt
        check(abs(steps - round(steps)) < 1e-9 * max(1.0, steps),
              f"time.t_final: must be a whole number of steps (dt = {dt})")
        if isinstance(entries["time.sample_stride"], int) and entries["time.sample_stride"] >= 1:
            check(round(steps) % entries["time.sample_stride"] == 0,
                  "time.sample_stride: must divide the total step count")
    for section in ("damping", "coupling", "initial"):
        kind = entries.get(f"{section}.kind")
        check(kind in _PROFILE_KEYS, f"{section}.kind: unknown profile kind {kind!r}")
        if kind == "tabulated":
            path = entries.get(f"{section}.path")
            check(bool(path) and Path(str(path)).exists(),
                  f"{section}.path: tabulated profile file not found: {path!r}")
    check(entries["history.kind"] in ("constant", "exponential", "tabulated"),
          f"history.kind: unknown kind {entries['history.kind']!r}")
    if entries["history.kind"] == "tabulated":
        path = entries.get("history.path")
        check(bool(path) and Path(str(path)).exists(),
              f"history.path: history table not found: {path!r}")
    if entries["certificate.enabled"]:
        check(entries["certificate.theorem"] in ("constant-sign", "indefinite"),
              f"certificate.theorem: got {entries['certificate.theorem']!r}")
        check(entries["certificate.q"] >= 1, "certificate.q: need q >= 1")
        if entries["certificate.theorem"] == "indefinite":
            check(entries.get("certificate.gamma0", 0) > 0,
                  "certificate.gamma0: the indefinite theorem needs a target gamma0 > 0")
    check(0 <= entries["diagnostics.envelope_slack"] < 1,
          "diagnostics.envelope_slack: need a fraction in [0, 1)")
    if not errors:
        _check_boundary_decay(config, errors)
    if errors:
        raise ConfigurationError(
            "configuration is invalid:\n  - " + "\n  - ".join(errors)
        )
    return config


def load(path, overrides: Optional[list[str]] = None) -> RunConfig:
    return validate(Path(path).read_text(), overrides=overrides, source=str(path))
