"""End-to-end tests of the command-line interface and its file outputs."""

import json

import numpy as np
import pytest

from delaydisp.cli import main
from delaydisp.diagnostics import read_trace_csv

BASE = """
params.j = 1
params.m = 1
params.p = 1
delay.tau = 0.1
delay.n_tau = 10
grid.L = 60.0
grid.N = 64
time.scheme = "etdrk4"
time.t_final = 4.0
time.sample_stride = 2
damping.kind = "constant"
damping.value = 1.0
coupling.kind = "constant"
coupling.value = 0.2
initial.kind = "gaussian"
initial.width = 2.0
initial.amplitude = 0.4
certificate.enabled = true
certificate.q = 2.0
"""

LINEAR_EXACT = """
grid.L = 6.283185307179586
grid.N = 32
time.dt = 0.05
time.t_final = 1.0
damping.kind = "constant"
damping.value = 0.0
coupling.kind = "constant"
coupling.value = 0.0
initial.kind = "gaussian"
initial.width = 0.5
initial.amplitude = 0.5
toggles.nonlinearity = false
toggles.allow_boundary_violation = true
"""


@pytest.fixture
def base_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(BASE)
    return path


class TestSimulate:
    def test_writes_trace_and_summary(self, base_config, tmp_path):
        out = tmp_path / "out"
        code = main(["simulate", "--config", str(base_config), "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "ok"
        assert summary["certificate"]["satisfied"] is True
        assert summary["envelope_ok"] is True
        assert summary["final"]["E"] < summary["config"]["initial.amplitude"]
        trace = read_trace_csv(out / "trace.csv")
        assert len(trace.t) == 201

    def test_zero_initial_data_gives_zero_trace(self, tmp_path):
        path = tmp_path / "zero.toml"
        path.write_text(
            BASE.replace("initial.amplitude = 0.4", "initial.amplitude = 0.0")
            .replace("certificate.enabled = true", "certificate.enabled = false")
        )
        out = tmp_path / "out"
        code = main(["simulate", "--config", str(path), "--out", str(out)])
        assert code == 0
        trace = read_trace_csv(out / "trace.csv")
        assert np.all(trace.E == 0.0)

    def test_reruns_are_bit_identical(self, base_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(base_config), "--out", str(out1)])
        main(["simulate", "--config", str(base_config), "--out", str(out2)])
        assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()

    def test_divergence_exit_code(self, tmp_path):
        path = tmp_path / "blow.toml"
        path.write_text("""
grid.L = 6.283185307179586
grid.N = 32
time.scheme = "etd1"
time.dt = 0.5
time.t_final = 50.0
damping.kind = "constant"
damping.value = 0.0
coupling.kind = "constant"
coupling.value = 0.0
initial.kind = "gaussian"
initial.width = 0.5
initial.amplitude = 1.0e9
toggles.dissipation = false
toggles.allow_boundary_violation = true
""")
        out = tmp_path / "out"
        code = main(["simulate", "--config", str(path), "--out", str(out)])
        assert code == 1
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "diverged"

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(BASE.replace("grid.N = 64", "grid.N = 63"))
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_exit_code(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.toml")]) == 2

    def test_override_changes_run(self, base_config, tmp_path):
        out = tmp_path / "out"
        code = main([
            "simulate", "--config", str(base_config), "--out", str(out),
            "--override", "time.t_final=2.0",
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final"]["t"] == pytest.approx(2.0)


class TestSingleModeEnergetics:
    def test_linear_sine_trace_matches_closed_form(self, tmp_path):
        # u = e^{-t} sin(x + t), so E(t) = (pi/2) e^{-2t}
        sine = np.sin(2 * np.pi * np.arange(32) / 32)
        npy = tmp_path / "sine.npy"
        np.save(npy, sine)
        path = tmp_path / "mode.toml"
        path.write_text(f"""
grid.L = 6.283185307179586
grid.N = 32
time.dt = 0.05
time.t_final = 1.0
damping.kind = "constant"
damping.value = 0.0
coupling.kind = "constant"
coupling.value = 0.0
initial.kind = "tabulated"
initial.path = "{npy}"
toggles.nonlinearity = false
toggles.allow_boundary_violation = true
""")
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(path), "--out", str(out)]) == 0
        trace = read_trace_csv(out / "trace.csv")
        expected = 0.5 * np.pi * np.exp(-2 * trace.t)
        assert np.max(np.abs(trace.E - expected) / expected) < 1e-9


class TestCertify:
    def test_reference_rate_one(self, base_config, tmp_path):
        out = tmp_path / "cert"
        assert main(["certify", "--config", str(base_config), "--out", str(out)]) == 0
        document = json.loads((out / "certificate.json").read_text())
        assert document["satisfied"] is True
        assert document["rate"] == 1.0
        assert document["envelope_constant"] > 0

    def test_no_coupling_rate_formula(self, base_config, tmp_path):
        out = tmp_path / "cert"
        code = main([
            "certify", "--config", str(base_config), "--out", str(out),
            "--override", "coupling.value=0.0",
            "--override", "damping.value=0.3",
        ])
        assert code == 0
        document = json.loads((out / "certificate.json").read_text())
        assert document["rate"] == pytest.approx(0.6, rel=1e-12)

    def test_failing_profile_is_data_not_error(self, base_config, tmp_path):
        out = tmp_path / "cert"
        code = main([
            "certify", "--config", str(base_config), "--out", str(out),
            "--override", "coupling.value=5.0",
        ])
        assert code == 0
        document = json.loads((out / "certificate.json").read_text())
        assert document["satisfied"] is False

    def test_not_applicable_routed(self, base_config, tmp_path):
        out = tmp_path / "cert"
        code = main([
            "certify", "--config", str(base_config), "--out", str(out),
            "--override", "damping.value=-0.2",
        ])
        assert code == 0
        document = json.loads((out / "certificate.json").read_text())
        assert document["satisfied"] is False
        assert "indefinite" in document["not_applicable"]


class TestConvergence:
    def test_nonlinear_benchmark_orders(self, tmp_path):
        path = tmp_path / "conv.toml"
        path.write_text("""
grid.L = 40.0
grid.N = 64
time.dt = 0.05
time.t_final = 0.5
damping.kind = "constant"
damping.value = 0.3
coupling.kind = "constant"
coupling.value = 0.0
initial.kind = "gaussian"
initial.width = 2.0
initial.amplitude = 0.6
""")
        out = tmp_path / "out"
        assert main(["convergence", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "convergence.json").read_text())
        assert report["nominal_order"] == 4
        assert all(3.8 <= o <= 4.2 for o in report["observed_orders"])
        assert main([
            "convergence", "--config", str(path), "--out", str(out),
            "--override", 'time.scheme="etd1"',
        ]) == 0
        report = json.loads((out / "convergence.json").read_text())
        assert report["nominal_order"] == 1
        assert all(0.8 <= o <= 1.2 for o in report["observed_orders"])

    def test_exact_mode_flagged(self, tmp_path):
        path = tmp_path / "exact.toml"
        path.write_text(LINEAR_EXACT + "\ntoggles.fold_constant_damping = true\n")
        out = tmp_path / "out"
        assert main(["convergence", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "convergence.json").read_text())
        assert report["rounding_floor"] is True
        assert "exact" in report["note"]


class TestDecayStudy:
    def test_certified_run_reports_envelope(self, base_config, tmp_path):
        out = tmp_path / "study"
        code = main([
            "decay-study", "--config", str(base_config), "--out", str(out),
            "--override", "diagnostics.sobolev_orders=[0.0, 1.0, 3.0]",
            "--override", "time.t_final=6.0",
        ])
        assert code == 0
        report = json.loads((out / "decay_study.json").read_text())
        assert report["envelope"]["checked"] is True
        assert report["envelope"]["envelope_ok"] is True
        assert report["fits"]["E"]["rate"] > 0
        assert report["fits"]["Hs_3"]["rate"] > 0
        assert report["audit"]["interpolation_ratio_max"] <= 1 + 1e-9

    def test_uncertified_run_skips_envelope(self, base_config, tmp_path):
        out = tmp_path / "study"
        code = main([
            "decay-study", "--config", str(base_config), "--out", str(out),
            "--override", "certificate.enabled=false",
        ])
        assert code == 0
        report = json.loads((out / "decay_study.json").read_text())
        assert report["envelope"] is None
        assert report["fits"]["E"]["rate"] > 0

    def test_delay_free_damped_run_fits_all_sobolev_traces(self, base_config, tmp_path):
        out = tmp_path / "study"
        code = main([
            "decay-study", "--config", str(base_config), "--out", str(out),
            "--override", "delay.tau=0.0",
            "--override", "delay.n_tau=0",
            "--override", "coupling.value=0.0",
            "--override", "time.dt=0.01",
            "--override", "time.t_final=6.0",
            "--override", "diagnostics.sobolev_orders=[0.0, 1.0, 3.0]",
        ])
        assert code == 0
        report = json.loads((out / "decay_study.json").read_text())
        for name in ("Hs_0", "Hs_1", "Hs_3"):
            assert report["fits"][name]["rate"] > 0


class TestSweep:
    def test_certify_sweep_with_index(self, base_config, tmp_path):
        out = tmp_path / "sweep"
        code = main([
            "sweep", "--config", str(base_config), "--out", str(out),
            "--threads", "2",
            "--override", 'sweep.key="certificate.q"',
            "--override", "sweep.values=[1.0, 2.0]",
            "--override", 'sweep.command="certify"',
        ])
        assert code == 0
        index = json.loads((out / "index.json").read_text())
        assert [r["value"] for r in index["runs"]] == [1.0, 2.0]
        for i in range(2):
            document = json.loads(
                (out / f"sweep_{i:03d}" / "certificate.json").read_text()
            )
            assert document["satisfied"] is True

    def test_sweep_without_spec_is_config_error(self, base_config, tmp_path):
        code = main([
            "sweep", "--config", str(base_config), "--out", str(tmp_path / "s"),
        ])
        assert code == 2
