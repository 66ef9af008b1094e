"""Tests for admissibility conditions, decay rates, and explicit constants."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaydisp import (
    CertificateNotApplicableError,
    CoefficientSet,
    ConfigurationError,
    Field,
    OperatorParams,
    c_q,
    certify_constant_sign,
    certify_indefinite,
    ct_constant,
    envelope_constant,
    make_grid,
    new_simulation,
    rate_nu,
    rate_nu_tilde,
)
from delaydisp.certificates import norm_bound
from delaydisp.profiles import bump_compact, constant, gaussian


def coeff_set(grid, damping, coupling, tau=0.1, j=1):
    return CoefficientSet(
        OperatorParams(j, 1, 1), tau, damping, coupling,
    )


class TestCq:
    def test_q_one(self):
        assert abs(c_q(1.0) - 1.0) < 1e-15

    def test_q_two(self):
        assert abs(c_q(2.0) - 0.75) < 1e-15

    def test_large_q_limit(self):
        # (1 - 1/(2q)) -> 1 and (2/q)^(1/(2q-1)) = e^{ln(2/q)/(2q-1)} -> 1
        assert abs(c_q(1e6) - 1.0) < 1e-4

    def test_invalid_exponent(self):
        with pytest.raises(ConfigurationError):
            c_q(0.5)
        with pytest.raises(ConfigurationError):
            c_q(math.inf)

    @given(q=st.floats(1.0, 100.0))
    @settings(max_examples=100, deadline=None)
    def test_positive_and_at_most_one(self, q):
        value = c_q(q)
        assert 0 < value <= 1.0 + 1e-12


class TestRates:
    def test_no_coupling_rate(self):
        assert rate_nu(0.3, 0.0, 2.0, 0.0) == pytest.approx(0.6, rel=1e-14)

    def test_cap_active(self):
        assert rate_nu(10.0, 0.0, 2.0, 0.0) == 1.0

    def test_q_one_hand_value(self):
        # 2 (1 - 0 - 0.5 * 2 * 0.25) = 1.5, capped to 1
        assert rate_nu(1.0, 0.0, 1.0, 0.5) == 1.0
        from delaydisp.certificates import uncapped_rate

        assert uncapped_rate(1.0, 0.0, 1.0, 0.5) == pytest.approx(1.5, rel=1e-14)

    def test_tilde_reduces_to_plain(self):
        assert rate_nu_tilde(0.7, 0.1, 3.0, 0.2) == rate_nu(0.7, 0.1, 3.0, 0.2)

    def test_large_norm_goes_vacuous(self):
        assert rate_nu_tilde(1.0, 0.0, 2.0, 100.0) <= 0

    def test_q_two_hand_value(self):
        # 2 (0.8 - 0.75 * 0.1^(4/3)) = 1.5304...; capped to 1
        from delaydisp.certificates import uncapped_rate

        expected = 2 * (0.8 - 0.75 * 0.1 ** (4.0 / 3.0))
        assert uncapped_rate(1.0, 0.2, 2.0, 0.1) == pytest.approx(expected, rel=1e-13)
        assert rate_nu_tilde(1.0, 0.2, 2.0, 0.1) == 1.0

    def test_invalid_gamma_rejected(self):
        with pytest.raises(ConfigurationError):
            rate_nu(1.0, 1.0, 2.0, 0.0)
        with pytest.raises(ConfigurationError):
            rate_nu(1.0, -0.1, 2.0, 0.0)

    def test_positive_rate_iff_norm_bound(self):
        # the norm bound is exactly positivity of the uncapped rate
        from delaydisp.certificates import uncapped_rate

        for q in (1.0, 1.7, 2.0, 5.0):
            for gap in (0.1, 0.8, 2.0):
                threshold = norm_bound(gap, q)
                assert uncapped_rate(gap + 0.2, 0.2, q, threshold * 0.999) > 0
                assert uncapped_rate(gap + 0.2, 0.2, q, threshold * 1.001) < 0


class TestCtConstant:
    def test_zero_coefficients_give_sqrt_three(self):
        assert ct_constant(5.0, 0.0, 0.0) == pytest.approx(math.sqrt(3.0), rel=1e-15)

    def test_small_horizon_limit(self):
        assert abs(ct_constant(1e-13, 0.7, 0.9) - math.sqrt(3.0)) < 1e-12

    def test_monotone_in_every_argument(self):
        base = ct_constant(1.0, 0.3, 0.4)
        assert ct_constant(1.5, 0.3, 0.4) > base
        assert ct_constant(1.0, 0.5, 0.4) > base
        assert ct_constant(1.0, 0.3, 0.6) > base

    def test_nonpositive_horizon_rejected(self):
        with pytest.raises(ConfigurationError):
            ct_constant(0.0, 0.1, 0.1)


class TestEnvelopeConstant:
    def test_zero_coupling(self):
        grid = make_grid(2 * np.pi, 32)
        g = Field.physical(0.5 * np.sin(grid.x), grid)
        coeffs = coeff_set(grid, constant(grid, 1.0), constant(grid, 0.0), tau=0.3)
        state = new_simulation(coeffs, g, scheme="etd1", n_tau=30)
        value = envelope_constant(state.history, coeffs.delay_coupling)
        assert value == pytest.approx(0.5 * np.sum(g.values**2) * grid.dx, rel=1e-12)

    def test_constant_history_closed_form(self):
        # 0.5 ||g||^2 + c ||g||^2 (1 - e^{-tau}) from the e^s time integral
        grid = make_grid(2 * np.pi, 32)
        tau, c = 0.4, 0.8
        g = Field.physical(0.5 * np.sin(grid.x), grid)
        coeffs = coeff_set(grid, constant(grid, 1.0), constant(grid, c), tau=tau)
        state = new_simulation(coeffs, g, scheme="etd1", n_tau=400)
        norm_sq = np.sum(g.values**2) * grid.dx
        expected = 0.5 * norm_sq + c * norm_sq * (1 - np.exp(-tau))
        value = envelope_constant(state.history, coeffs.delay_coupling)
        assert value == pytest.approx(expected, rel=1e-5)

    def test_zero_delay(self):
        grid = make_grid(2 * np.pi, 32)
        g = Field.physical(0.5 * np.sin(grid.x), grid)
        coeffs = coeff_set(grid, constant(grid, 1.0), constant(grid, 0.0), tau=0.0)
        state = new_simulation(coeffs, g, scheme="etd1", dt=0.05)
        value = envelope_constant(state.history, coeffs.delay_coupling)
        assert value == pytest.approx(0.5 * np.sum(g.values**2) * grid.dx, rel=1e-12)


class TestConstantSignCertificate:
    def test_reference_configuration_certifies_rate_one(self):
        # gamma = (e^0.1 + 1)/2 * 0.2 makes beta vanish; uncapped rate
        # 2 (1 - gamma) = 1.579 caps to 1
        grid = make_grid(80.0, 256)
        coeffs = coeff_set(grid, constant(grid, 1.0), constant(grid, 0.2), tau=0.1)
        cert = certify_constant_sign(coeffs, q=2.0)
        assert cert.satisfied
        assert cert.rate == 1.0
        assert cert.rate_uncapped > 1.0
        assert cert.gamma0 == 1.0
        assert 0 <= cert.gamma < cert.gamma0

    def test_no_coupling_rate_formula(self):
        grid = make_grid(80.0, 128)
        for gamma0 in (0.3, 0.8, 2.0):
            coeffs = coeff_set(
                grid, constant(grid, gamma0), constant(grid, 0.0), tau=0.1
            )
            cert = certify_constant_sign(coeffs, q=2.0)
            assert cert.gamma == 0.0
            assert cert.rate == pytest.approx(min(2 * gamma0, 1.0), rel=1e-12)

    def test_huge_coupling_unsatisfied(self):
        grid = make_grid(80.0, 128)
        coeffs = coeff_set(grid, constant(grid, 0.5), constant(grid, 5.0), tau=0.1)
        cert = certify_constant_sign(coeffs, q=2.0)
        assert not cert.satisfied
        assert cert.rate <= 0
        violated = [c for c in cert.conditions if not c.satisfied]
        assert violated

    def test_nonpositive_infimum_not_applicable(self):
        grid = make_grid(80.0, 128)
        dip = gaussian(grid, width=3.0, amplitude=2.0)
        damping = Field.physical(1.0 - dip.values, grid)
        coeffs = coeff_set(grid, damping, constant(grid, 0.0), tau=0.1)
        with pytest.raises(CertificateNotApplicableError):
            certify_constant_sign(coeffs, q=2.0)

    def test_satisfied_certificate_has_positive_margins(self):
        grid = make_grid(80.0, 256)
        coeffs = coeff_set(grid, constant(grid, 1.0), constant(grid, 0.2), tau=0.1)
        cert = certify_constant_sign(coeffs, q=2.0)
        for condition in cert.conditions:
            assert condition.satisfied
            assert condition.margin >= 0

    def test_monotone_in_coupling_amplitude(self):
        grid = make_grid(80.0, 256)
        rates = []
        for amp in (0.05, 0.2, 0.5, 0.9):
            coeffs = coeff_set(grid, constant(grid, 0.6), constant(grid, amp), tau=0.2)
            rates.append(certify_constant_sign(coeffs, q=2.0).rate)
        assert all(a >= b - 1e-12 for a, b in zip(rates, rates[1:]))


class TestIndefiniteCertificate:
    def test_reduction_to_constant_sign(self):
        grid = make_grid(80.0, 256)
        coeffs = coeff_set(grid, constant(grid, 0.9), constant(grid, 0.15), tau=0.1)
        plain = certify_constant_sign(coeffs, q=2.0)
        indefinite = certify_indefinite(coeffs, q=2.0, gamma0=0.9)
        assert indefinite.beta0_norm == 0.0
        assert indefinite.rate == pytest.approx(plain.rate, abs=1e-12)
        assert indefinite.gamma == pytest.approx(plain.gamma, abs=1e-12)

    def test_q2_dip_threshold(self):
        # condition: ||beta0||_2 < (gamma0 / c_2)^(3/4) = (4 gamma0 / 3)^(3/4)
        grid = make_grid(80.0, 512)
        gamma0 = 1.0
        threshold = (4.0 * gamma0 / 3.0) ** 0.75

        def certificate_for(dip_amplitude):
            dip = gaussian(grid, width=2.0, amplitude=dip_amplitude)
            damping = Field.physical(gamma0 - dip.values, grid)
            coeffs = coeff_set(grid, damping, constant(grid, 0.0), tau=0.1)
            return certify_indefinite(coeffs, q=2.0, gamma0=gamma0)

        small = certificate_for(0.3)
        assert small.beta0_norm < threshold
        assert small.satisfied
        # scale the dip so its L2 norm crosses the threshold
        factor = 1.05 * threshold / small.beta0_norm
        large = certificate_for(0.3 * factor)
        assert large.beta0_norm > threshold
        assert not large.satisfied
        names = [c.name for c in large.conditions if not c.satisfied]
        assert "beta0-norm-bound" in names

    def test_nonpositive_gamma0_rejected(self):
        grid = make_grid(80.0, 128)
        coeffs = coeff_set(grid, constant(grid, 1.0), constant(grid, 0.0), tau=0.1)
        with pytest.raises(ConfigurationError):
            certify_indefinite(coeffs, q=2.0, gamma0=0.0)

    def test_bump_dip_configuration_certifies(self):
        grid = make_grid(80.0, 256)
        dip = bump_compact(grid, radius=6.0, amplitude=0.3)
        damping = Field.physical(1.0 - dip.values, grid)
        coupling = bump_compact(grid, radius=6.0, amplitude=0.1)
        coeffs = coeff_set(grid, damping, coupling, tau=0.1)
        cert = certify_indefinite(coeffs, q=2.0, gamma0=1.0)
        assert cert.satisfied
        assert cert.rate > 0


class TestScaleCoherence:
    def test_indicator_profile_norm(self):
        # constant height h on measure mu has ||beta||_q = h mu^(1/q)
        grid = make_grid(10.0, 1000)
        height, tau = 0.6, 0.2
        width_points = 250  # mu = 2.5
        coupling_values = np.zeros(1000)
        coupling_values[100 : 100 + width_points] = (
            2 * height / (math.exp(tau) + 1)
        )
        coupling = Field.physical(coupling_values, grid)
        coeffs = coeff_set(grid, constant(grid, 1.0), coupling, tau=tau)
        cert = certify_constant_sign(coeffs, q=3.0)
        mu = width_points * grid.dx
        # at gamma = 0 the minimal beta equals the exceedance itself
        beta_norm_at_zero = height * mu ** (1.0 / 3.0)
        weight = 0.5 * (math.exp(tau) + 1) * np.abs(coupling.values)
        direct = (np.sum(weight**3) * grid.dx) ** (1.0 / 3.0)
        assert direct == pytest.approx(beta_norm_at_zero, rel=1e-12)


class TestCertificateSerialization:
    def test_json_document_shape(self):
        grid = make_grid(80.0, 128)
        coeffs = coeff_set(grid, constant(grid, 1.0), constant(grid, 0.2), tau=0.1)
        cert = certify_constant_sign(coeffs, q=2.0)
        document = json.loads(cert.to_json())
        assert document["theorem"] == "constant-sign"
        assert document["satisfied"] is True
        for key in ("q", "gamma0", "gamma", "rate", "rate_uncapped",
                    "beta_norm", "beta0_norm", "combined_norm", "conditions"):
            assert key in document
        for condition in document["conditions"]:
            assert set(condition) == {"name", "lhs", "rhs", "satisfied", "margin"}
