"""Command-line orchestration: simulate, certify, convergence, decay-study, sweep.

Exit codes: 0 on success (an unsatisfied certificate is data, not an
error), 1 on runtime divergence, 2 on configuration errors.  Every output
embeds the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import config as config_mod
from .certificates import (
    certify_constant_sign,
    certify_indefinite,
    envelope_constant,
)
from .diagnostics import (
    balance_residual,
    check_gn_ratio,
    check_interpolation_inequality,
    fit_decay_rate,
    write_trace_csv,
)
from .errors import (
    CertificateNotApplicableError,
    ConfigurationError,
    DecayFitError,
)
from .grid import Field, l2_norm, sup_norm
from .stepping import run as run_simulation
from .stepping import step as step_simulation

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_CONFIG = 2


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


def _certificate_outcome(cfg) -> dict:
    """Run the configured certification; inapplicability is an outcome."""
    grid = cfg.build_grid()
    coeffs = cfg.build_coeffs(grid)
    theorem = cfg["certificate.theorem"]
    q = cfg["certificate.q"]
    try:
        if theorem == "indefinite":
            certificate = certify_indefinite(coeffs, q, cfg["certificate.gamma0"])
        else:
            certificate = certify_constant_sign(coeffs, q)
    except CertificateNotApplicableError as exc:
        return {
            "theorem": theorem,
            "satisfied": False,
            "not_applicable": str(exc),
        }
    if coeffs.tau > 0:
        history = cfg.build_history(grid)
    else:
        from .history import history_from_field

        history = history_from_field(cfg.build_initial(grid), 0.0, 0)
    certificate.envelope_constant = envelope_constant(history, coeffs.delay_coupling)
    return certificate.to_json_dict()


def _fit_block(trace, window) -> dict:
    fits: dict[str, Any] = {"window": list(window)}
    names = ["E", "scriptE"] + [f"Hs_{s:g}" for s in sorted(trace.sobolev)]
    for name in names:
        try:
            fit = fit_decay_rate(trace.t, trace.column(name), window)
            fits[name] = {
                "rate": fit.rate,
                "amplitude": fit.amplitude,
                "r_squared": fit.r_squared,
            }
        except DecayFitError as exc:
            fits[name] = {"error": str(exc)}
    return fits


def _envelope_block(trace, certificate: dict, slack: float) -> dict:
    rate = certificate.get("rate", 0.0)
    constant = certificate.get("envelope_constant")
    if not certificate.get("satisfied") or constant is None:
        return {"checked": False, "reason": "certificate not satisfied"}
    bound = (1.0 + slack) * constant * np.exp(-rate * trace.t)
    ratios = trace.script_E / (constant * np.exp(-rate * trace.t))
    return {
        "checked": True,
        "slack": slack,
        "rate": rate,
        "constant": constant,
        "envelope_ok": bool(np.all(trace.script_E <= bound)),
        "max_ratio": float(np.max(ratios)),
    }


def _simulate(cfg, out: Path) -> tuple[int, dict]:
    state = cfg.build_state()
    certificate = _certificate_outcome(cfg) if cfg["certificate.enabled"] else None
    trace, state = run_simulation(
        state,
        cfg["time.t_final"],
        sample_stride=cfg["time.sample_stride"],
        sobolev_orders=cfg["diagnostics.sobolev_orders"],
        config=cfg.resolved(),
    )
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out / "trace.csv")
    ok = trace.meta["status"] == "ok"
    u = state.u  # last finite state even after a divergence
    summary: dict[str, Any] = {
        "config": cfg.resolved(),
        "status": trace.meta["status"],
        "failure_reason": state.failure_reason or None,
        "final": {
            "t": state.t,
            "E": float(trace.E[-1]),
            "scriptE": float(trace.script_E[-1]),
            "l2": l2_norm(u),
            "sup": sup_norm(u),
            "balance_residual": balance_residual(trace) if ok else None,
        },
        "fits": _fit_block(trace, cfg.fit_window()) if ok else {},
    }
    if certificate is not None:
        summary["certificate"] = certificate
        summary["envelope"] = _envelope_block(
            trace, certificate, cfg["diagnostics.envelope_slack"]
        )
        summary["envelope_ok"] = summary["envelope"].get("envelope_ok")
    _write_json(summary, out / "summary.json")
    code = EXIT_OK if trace.meta["status"] == "ok" else EXIT_DIVERGED
    return code, summary


def cmd_simulate(cfg, out: Path) -> int:
    code, summary = _simulate(cfg, out)
    print(f"simulate: status={summary['status']} -> {out}")
    return code


def cmd_certify(cfg, out: Path) -> int:
    outcome = _certificate_outcome(cfg)
    outcome["config"] = cfg.resolved()
    out.mkdir(parents=True, exist_ok=True)
    _write_json(outcome, out / "certificate.json")
    print(f"certify: satisfied={outcome.get('satisfied')} -> {out}")
    return EXIT_OK


def _final_state_at(cfg, refinement: int):
    entries = cfg.resolved()
    tau = entries["delay.tau"]
    if tau > 0:
        entries["delay.n_tau"] = entries["delay.n_tau"] * refinement
    else:
        entries["time.dt"] = entries["time.dt"] / refinement
    refined = config_mod.RunConfig(entries=entries, source=cfg.source)
    state = refined.build_state()
    dt = state.dt
    steps = round(cfg["time.t_final"] / dt)
    for _ in range(steps):
        step_simulation(state)
    return state, dt


def cmd_convergence(cfg, out: Path) -> int:
    """Self-convergence study over dt, dt/2, dt/4, dt/8."""
    states, dts = [], []
    for k in range(4):
        state, dt = _final_state_at(cfg, 2**k)
        states.append(state)
        dts.append(dt)
    diffs = [
        l2_norm(Field.physical(a.u.values - b.u.values, a.grid))
        for a, b in zip(states, states[1:])
    ]
    scale = max(l2_norm(states[-1].u), 1e-300)
    floor = all(d < 1e-12 * scale for d in diffs)
    orders = [
        math.log2(a / b) if (a > 0 and b > 0) else None
        for a, b in zip(diffs, diffs[1:])
    ]
    nominal = 1 if cfg["time.scheme"] == "etd1" else 4
    report = {
        "config": cfg.resolved(),
        "dts": dts,
        "differences": diffs,
        "observed_orders": orders,
        "nominal_order": nominal,
        "rounding_floor": floor,
        "note": "differences at rounding floor; scheme is exact on this problem"
        if floor
        else "",
    }
    out.mkdir(parents=True, exist_ok=True)
    _write_json(report, out / "convergence.json")
    shown = [f"{o:.3f}" if o is not None else "n/a" for o in orders]
    print(f"convergence: observed orders {shown} (nominal {nominal}) -> {out}")
    return EXIT_OK


def _audit_block(cfg) -> dict:
    """Randomized whole-line inequality audits on boundary-decayed fields."""
    rng = np.random.default_rng(cfg["seed"])
    grid = cfg.build_grid()
    center = 0.5 * grid.length
    envelope = np.exp(-(((grid.x - center) / (grid.length / 12.0)) ** 2))
    gn_orders = (1, max(cfg["params.j"], 2))
    interp_max = 0.0
    gn_max = 0.0
    trials = 200
    for _ in range(trials):
        modes = rng.normal(size=8)
        phases = rng.uniform(0, 2 * np.pi, size=8)
        base = sum(
            c * np.sin((k + 1) * 2 * np.pi * grid.x / grid.length + ph)
            for k, (c, ph) in enumerate(zip(modes, phases))
        )
        v = Field.physical(envelope * base, grid)
        if sup_norm(v) == 0:
            continue
        interp_max = max(interp_max, check_interpolation_inequality(v))
        gn_max = max(gn_max, check_gn_ratio(v, *gn_orders))
    return {
        "trials": trials,
        "seed": cfg["seed"],
        "interpolation_ratio_max": interp_max,
        "gagliardo_nirenberg_orders": list(gn_orders),
        "gagliardo_nirenberg_ratio_max": gn_max,
    }


def cmd_decay_study(cfg, out: Path) -> int:
    code, summary = _simulate(cfg, out)
    report = {
        "config": cfg.resolved(),
        "status": summary["status"],
        "fits": summary.get("fits", {}),
        "certificate": summary.get("certificate"),
        "envelope": summary.get("envelope"),
        "audit": _audit_block(cfg),
    }
    _write_json(report, out / "decay_study.json")
    env = report.get("envelope") or {}
    print(
        "decay-study: "
        f"status={summary['status']} envelope_ok={env.get('envelope_ok')} -> {out}"
    )
    return code


def _sweep_worker(args: tuple) -> dict:
    text, overrides, out_dir, command, source = args
    try:
        cfg = config_mod.validate(text, overrides=overrides, source=source)
    except ConfigurationError as exc:
        return {"dir": out_dir, "exit_code": EXIT_CONFIG, "error": str(exc)}
    out = Path(out_dir)
    handler = {"simulate": cmd_simulate, "certify": cmd_certify,
               "decay-study": cmd_decay_study}[command]
    code = handler(cfg, out)
    return {"dir": out_dir, "exit_code": code}


def cmd_sweep(cfg, out: Path, threads: int, text: str, overrides: list[str]) -> int:
    key = cfg.get("sweep.key")
    values = cfg.get("sweep.values")
    command = cfg.get("sweep.command", "simulate")
    if not key or not isinstance(values, list) or not values:
        print("sweep requires sweep.key and a nonempty sweep.values list", file=sys.stderr)
        return EXIT_CONFIG
    if command not in ("simulate", "certify", "decay-study"):
        print(f"sweep.command: unknown command {command!r}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i, value in enumerate(values):
        job_overrides = list(overrides) + [f"{key}={json.dumps(value)}"]
        jobs.append(
            (text, job_overrides, str(out / f"sweep_{i:03d}"), command, cfg.source)
        )
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(job) for job in jobs]
    index = {
        "key": key,
        "values": values,
        "command": command,
        "runs": [
            {"value": v, **r} for v, r in zip(values, results)
        ],
    }
    _write_json(index, out / "index.json")  # written last, after all workers
    code = max((r["exit_code"] for r in results), default=EXIT_OK)
    print(f"sweep: {len(results)} runs -> {out}")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaydisp",
        description="Pseudospectral lab for damped dispersive equations with delay",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "integrate and write trace + summary"),
        ("certify", "evaluate the stability certificate"),
        ("convergence", "temporal self-convergence study"),
        ("decay-study", "simulate, certify, fit decay rates, check envelope"),
        ("sweep", "run a parameter sweep on a worker pool"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the TOML config")
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.add_argument("--threads", type=int, default=1, help="sweep worker count")
        cmd.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry (repeatable)",
        )
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    overrides = list(args.override)
    if args.command == "certify":
        overrides.append("certificate.enabled = true")
    try:
        cfg = config_mod.validate(text, overrides=overrides, source=args.config)
    except ConfigurationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "certify":
            return cmd_certify(cfg, out)
        if args.command == "convergence":
            return cmd_convergence(cfg, out)
        if args.command == "decay-study":
            return cmd_decay_study(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.threads, text, overrides)
    except ConfigurationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
