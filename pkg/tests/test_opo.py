"""Closed-form physics: worked examples and algebraic invariants."""

import math

import numpy as np
import pytest

import sqzstat as sq
from sqzstat.errors import (
    AboveThreshold,
    InvalidFraction,
    NonPositiveLoss,
    NonPositiveVariance,
    SubThermalG2,
    ZeroConversion,
    ZeroPump,
)

from conftest import E_NL, FREQ_HZ, GAMMA1, GAMMA2, K_CAL, LENGTH, P_TH_MEAS


def finesse_form_g2(cavity, k, p):
    # independent oracle: the unsimplified finesse expression
    f = 2 * math.pi / (cavity.tau_f * cavity.gamma_total)
    f0 = 2 * math.pi / (cavity.tau_f * cavity.gamma1)
    return 2 + cavity.gamma_total**2 * cavity.tau_f * f**2 / (4 * math.pi * f0 * k * p)


class TestThresholdPower:
    def test_reference_losses(self):
        # 0.115^2 / (4 * 0.02) W = 165.3125 mW, quoted as 165.3 mW
        assert sq.threshold_power(0.11, 0.005, 0.02) == pytest.approx(0.1653125, rel=1e-12)

    def test_lossless_degenerate_limit(self):
        assert sq.threshold_power(0.0, 0.0, 0.02) == 0.0

    def test_gamma_fit_losses(self):
        # hand computation: (0.11 + 0.0102)^2 / 0.08 = 0.180601... W
        assert sq.threshold_power(0.11, 0.0102, 0.02) == pytest.approx(0.1202**2 / 0.08, rel=1e-12)
        assert sq.threshold_power(0.11, 0.0102, 0.02) == pytest.approx(0.1806, abs=5e-5)

    def test_zero_conversion_rejected(self):
        with pytest.raises(ZeroConversion):
            sq.threshold_power(0.11, 0.005, 0.0)


class TestDeriveCavityRates:
    def test_reference_linewidth(self):
        cav = sq.derive_cavity_rates(2 * np.pi * 14.16e6, 1.34e-9, 0.11, e_nl=0.02)
        assert cav.gamma1 == pytest.approx(82.1e6, rel=1e-3)
        assert cav.gamma2 == pytest.approx(6.9e6, rel=0.1)
        assert cav.length == pytest.approx(0.402, rel=1e-2)
        assert cav.eta_esc == pytest.approx(cav.gamma1 / (cav.gamma1 + cav.gamma2), rel=1e-12)
        assert cav.p_th == pytest.approx((cav.t_out + cav.loss) ** 2 / (4 * 0.02), rel=1e-12)

    def test_symmetric_loss_case(self):
        tau_f = 2e-9
        t = 0.1
        cav = sq.derive_cavity_rates(2 * t / tau_f, tau_f, t)
        assert cav.gamma1 == pytest.approx(cav.gamma2, rel=1e-12)
        assert cav.eta_esc == pytest.approx(0.5, rel=1e-12)

    def test_negative_loss_rejected(self):
        with pytest.raises(NonPositiveLoss):
            sq.derive_cavity_rates(0.11 / 1.34e-9, 1.34e-9, 0.11)

    def test_bad_transmission_rejected(self):
        with pytest.raises(InvalidFraction):
            sq.derive_cavity_rates(1e8, 1.34e-9, 1.5)


class TestG2FromPump:
    def test_reference_points(self, cavity, calibration):
        # oracle 2 + gamma1/(2kP) evaluated by hand
        for p, expect in ((30e-6, 15.09), (5e-6, 80.56)):
            got = sq.g2zero_from_pump(cavity, calibration, p)
            assert got == pytest.approx(2 + GAMMA1 / (2 * K_CAL * p), rel=1e-14)
            assert got == pytest.approx(expect, abs=5e-3)

    def test_large_pump_limit(self, cavity, calibration):
        assert sq.g2zero_from_pump(cavity, calibration, 1e6) == pytest.approx(2.0, abs=1e-9)

    def test_finesse_identity(self):
        # the simplified form must equal the finesse form to 1e-12 for
        # randomly drawn cavities
        rng = np.random.default_rng(11)
        for _ in range(200):
            tau_f = rng.uniform(0.3e-9, 5e-9)
            g1 = rng.uniform(1e6, 0.5 / tau_f)  # keep T + L < 1
            g2 = rng.uniform(0, 0.3 / tau_f)
            cav = sq.CavityParams.from_gammas(g1, g2, tau_f=tau_f, e_nl=0.02)
            cal = sq.PumpCalibration(k=rng.uniform(1e9, 1e12))
            p = rng.uniform(1e-7, 1e-3)
            lhs = sq.g2zero_from_pump(cav, cal, p)
            rhs = finesse_form_g2(cav, cal.k, p)
            assert abs(lhs - rhs) <= 1e-12 * rhs

    def test_zero_pump_rejected(self, cavity, calibration):
        with pytest.raises(ZeroPump):
            sq.g2zero_from_pump(cavity, calibration, 0.0)

    def test_strictly_decreasing_in_pump(self, cavity, calibration):
        p = np.geomspace(1e-7, 1e-2, 300)
        g = np.array([sq.g2zero_from_pump(cavity, calibration, pi) for pi in p])
        assert np.all(np.diff(g) < 0)


class TestPumpFromG2:
    def test_inverse_of_reference(self, cavity, calibration):
        assert sq.pump_from_g2zero(cavity, calibration, 80.56) == pytest.approx(5e-6, rel=1e-3)

    def test_definitional_round_trip(self, cavity, calibration):
        g2 = 2 + GAMMA1 / (2 * K_CAL * 1.0)
        assert sq.pump_from_g2zero(cavity, calibration, g2) == pytest.approx(1.0, rel=1e-12)

    def test_round_trip_identity(self, cavity, calibration):
        for p in np.geomspace(1e-7, 1e-2, 50):
            g2 = sq.g2zero_from_pump(cavity, calibration, p)
            back = sq.pump_from_g2zero(cavity, calibration, g2)
            assert abs(back - p) <= 1e-12 * p

    def test_boundary_rejected(self, cavity, calibration):
        with pytest.raises(SubThermalG2):
            sq.pump_from_g2zero(cavity, calibration, 2.0)


class TestEpsilonRate:
    def test_round_trip(self, cavity):
        eps = 1e6
        g2 = 2 + cavity.gamma_total**2 / eps**2
        assert sq.epsilon_rate_from_g2zero(cavity, g2) == pytest.approx(eps, rel=1e-12)

    def test_hand_value(self, cavity):
        # (gamma1+gamma2)/sqrt(15.09-2) = 89e6/3.61801... = 2.4601e7 1/s
        got = sq.epsilon_rate_from_g2zero(cavity, 15.09)
        assert got == pytest.approx(cavity.gamma_total / math.sqrt(13.09), rel=1e-14)
        assert got == pytest.approx(2.460e7, rel=1e-3)

    def test_vacuum_limit(self, cavity):
        assert sq.epsilon_rate_from_g2zero(cavity, 1e30) == pytest.approx(0.0, abs=1e-7)


class TestDownconversionRate:
    def test_zero_gain(self, cavity):
        assert sq.downconversion_rate_from_epsilon(cavity, 0.0) == 0.0

    def test_quadratic_in_gain(self, cavity):
        r1 = sq.downconversion_rate_from_epsilon(cavity, 3e-4)
        r2 = sq.downconversion_rate_from_epsilon(cavity, 6e-4)
        assert r2 == pytest.approx(4 * r1, rel=1e-12)

    def test_simplified_form_identity(self, cavity):
        # eps^2 F^2/(pi F0 tau_f) == 2 eps^2 gamma1/(tau_f (gamma1+gamma2))^2
        eps = math.sqrt(E_NL * 30e-6)
        got = sq.downconversion_rate_from_epsilon(cavity, eps)
        oracle = 2 * eps**2 * cavity.gamma1 / (cavity.tau_f * cavity.gamma_total) ** 2
        assert got == pytest.approx(oracle, rel=1e-12)

    def test_pump_gain_magnitude(self):
        # independent hand evaluation of the simplified form with
        # eps^2 = E_NL * 30 uW = 6e-7 and tau_f = 1.35 ns:
        # 2*6e-7*8.21e7 / (1.35e-9*8.9e7)^2 = 98.52/0.0144360 = 6824.6 1/s
        cav = sq.CavityParams.from_gammas(82.1e6, 6.9e6, tau_f=1.35e-9, e_nl=E_NL)
        got = sq.downconversion_rate_from_epsilon(cav, math.sqrt(6e-7))
        assert got == pytest.approx(6824.6, rel=1e-4)

    def test_factor_four_tension_vs_pump_law(self, calibration):
        # feeding the g2(0)-implied gain rate back through the rate formula
        # (as the dimensionless product eps_rate * tau_f) overshoots the
        # measured pump law by exactly 4: R(eps_rate*tau_f) = 4 k P
        cav = sq.CavityParams.from_gammas(GAMMA1, GAMMA2, tau_f=1.35e-9, e_nl=E_NL)
        for p in (5e-6, 30e-6, 200e-6):
            g2 = sq.g2zero_from_pump(cav, calibration, p)
            eps_rate = sq.epsilon_rate_from_g2zero(cav, g2)
            r = sq.downconversion_rate_from_epsilon(cav, eps_rate * cav.tau_f)
            assert r == pytest.approx(4 * K_CAL * p, rel=1e-10)

    def test_convention_constant(self, cavity):
        base = sq.downconversion_rate_from_epsilon(cavity, 1e-3)
        quarter = sq.downconversion_rate_from_epsilon(cavity, 1e-3, convention=0.25)
        assert quarter == pytest.approx(base / 4, rel=1e-14)


class TestQuadratureVariances:
    def test_vacuum(self, cavity):
        v = sq.quadrature_variances(
            cavity.with_measured(p_th=P_TH_MEAS), 0.0, sq.AnalysisFrequency(FREQ_HZ)
        )
        assert v.v_minus == 1.0 and v.v_plus == 1.0 and v.r == 0.0

    def test_reference_point(self, cavity):
        # verified by hand: x = sqrt(5e-6/0.1653), Omega = 2*pi*8e5/8.9e7
        cav = cavity.with_measured(eta_esc=0.7, p_th=P_TH_MEAS)
        v = sq.quadrature_variances(cav, 5e-6, sq.AnalysisFrequency(FREQ_HZ))
        assert v.v_minus == pytest.approx(0.98496, abs=1e-5)
        assert v.v_plus == pytest.approx(1.01537, abs=1e-5)
        assert v.r == pytest.approx(0.00763, abs=1e-5)
        assert 10 * math.log10(math.exp(-2 * v.r)) == pytest.approx(-0.0662, abs=5e-4)

    def test_minimum_uncertainty_near_threshold(self, cavity):
        cav = cavity.with_measured(eta_esc=1.0)
        freq = sq.AnalysisFrequency(1e-6)  # Omega ~ 1e-14, effectively 0
        for eps in (1e-3, 1e-5, 1e-7):
            v = sq.quadrature_variances(cav, cav.p_th * (1 - eps), freq)
            assert v.v_plus * v.v_minus == pytest.approx(1.0, rel=1e-8)
        v = sq.quadrature_variances(cav, cav.p_th * (1 - 1e-7), freq)
        assert v.v_minus < 1e-6

    def test_uncertainty_product_identity(self, cavity):
        # V+ V- = 1 for eta = 1, Omega = 0, any P below threshold
        cav = cavity.with_measured(eta_esc=1.0)
        freq = sq.AnalysisFrequency(1e-9)
        rng = np.random.default_rng(5)
        p = rng.uniform(0, cav.p_th, 10_000)
        for pi in p:
            v = sq.quadrature_variances(cav, pi, freq)
            assert abs(v.v_plus * v.v_minus - 1.0) < 1e-10

    def test_bounds(self, cavity):
        rng = np.random.default_rng(6)
        for _ in range(500):
            eta = rng.uniform(0.05, 1.0)
            f = rng.uniform(1e3, 5e7)
            p = rng.uniform(0, cavity.p_th * 0.999)
            v = sq.quadrature_variances(
                cavity.with_measured(eta_esc=eta), p, sq.AnalysisFrequency(f)
            )
            assert 1 - eta <= v.v_minus <= 1.0
            assert v.v_plus >= 1.0

    def test_monotone_in_pump(self, cavity):
        cav = cavity.with_measured(eta_esc=0.7, p_th=P_TH_MEAS)
        freq = sq.AnalysisFrequency(FREQ_HZ)
        p = np.linspace(1e-9, cav.p_th * 0.999, 400)
        vs = [sq.quadrature_variances(cav, pi, freq) for pi in p]
        vp = np.array([v.v_plus for v in vs])
        vm = np.array([v.v_minus for v in vs])
        assert np.all(np.diff(vp) > 0)
        assert np.all(np.diff(vm) < 0)

    def test_above_threshold_rejected(self, cavity):
        with pytest.raises(AboveThreshold):
            sq.quadrature_variances(cavity, cavity.p_th, sq.AnalysisFrequency(FREQ_HZ))


class TestDetectedVariances:
    def test_unit_efficiency_reduces(self, cavity):
        freq = sq.AnalysisFrequency(FREQ_HZ)
        a = sq.detected_variances(cavity, 1e-3, freq, 1.0)
        b = sq.quadrature_variances(cavity, 1e-3, freq)
        assert a == b

    def test_reference_efficiency_product(self):
        eff = sq.DetectionEfficiencyHD(eta_tr=0.95, eta_vis=0.97, eta_qu=0.99)
        assert eff.eta_det == pytest.approx(0.8849, abs=2e-4)

    def test_blind_detector(self, cavity):
        v = sq.detected_variances(cavity, 1e-3, sq.AnalysisFrequency(FREQ_HZ), 0.0)
        assert v.v_minus == 1.0 and v.v_plus == 1.0


class TestCombModel:
    def test_peak_value(self, comb_ref):
        # oracle: n=0 term is exactly n1*(n2+1); each first neighbor adds
        # (1 + a tau_f) exp(-a tau_f) with a = 2 ln2/tau_r
        a = 2 * math.log(2) / comb_ref.tau_r
        neighbor = (1 + a * comb_ref.tau_f) * math.exp(-a * comb_ref.tau_f)
        expect = comb_ref.n1 * (comb_ref.n2 + 1 + 2 * neighbor)
        got = sq.comb_model_eval(comb_ref, comb_ref.tau0)
        assert got == pytest.approx(expect, rel=1e-6)
        assert got == pytest.approx(17.02, abs=0.05)

    def test_far_tail_baseline(self, comb_ref):
        far = sq.comb_model_eval(comb_ref, comb_ref.tau0 + 400e-9)
        assert far == pytest.approx(comb_ref.n1 * comb_ref.n2, rel=1e-6)
        assert far == pytest.approx(1.024, abs=1e-3)

    def test_valley_below_adjacent_peaks(self, comb_ref):
        valley = sq.comb_model_eval(comb_ref, comb_ref.tau0 + comb_ref.tau_f / 2)
        peak0 = sq.comb_model_eval(comb_ref, comb_ref.tau0)
        peak1 = sq.comb_model_eval(comb_ref, comb_ref.tau0 + comb_ref.tau_f)
        assert valley < peak1 < peak0

    def test_symmetry_about_tau0(self, comb_ref):
        rng = np.random.default_rng(3)
        for delta in rng.uniform(0, 50e-9, 50):
            left = sq.comb_model_eval(comb_ref, comb_ref.tau0 - delta)
            right = sq.comb_model_eval(comb_ref, comb_ref.tau0 + delta)
            assert left == pytest.approx(right, rel=1e-12)

    def test_monotone_in_n_max(self, comb_ref):
        # all summands are positive; growth is strict while new teeth still
        # land inside the window, and never more than summation-order noise
        # (~1 ulp) below the previous value afterwards
        tau = np.linspace(-50e-9, 50e-9, 101)
        prev = sq.comb_model_eval(comb_ref, tau, n_max=0)
        for n_max in (1, 2, 5, 20, 60, 174, 300):
            cur = sq.comb_model_eval(comb_ref, tau, n_max=n_max)
            assert np.all(cur - prev >= -1e-13 * np.abs(prev))
            if n_max <= 20:
                assert cur.sum() > prev.sum()
            prev = cur

    def test_default_cutoff(self, comb_ref):
        assert sq.default_mode_cutoff(comb_ref.omega_c, comb_ref.tau_f) == 174


class TestDecibel:
    def test_unity(self):
        assert sq.to_decibel(1.0) == 0.0

    def test_hand_log(self):
        assert sq.to_decibel(0.98496) == pytest.approx(-0.0658, abs=1e-4)

    def test_ten(self):
        assert sq.to_decibel(10.0) == pytest.approx(10.0, rel=1e-12)

    def test_nonpositive_rejected(self):
        with pytest.raises(NonPositiveVariance):
            sq.to_decibel(0.0)


class TestCavityParamsInvariants:
    def test_tau_f_length_consistency(self):
        with pytest.raises(Exception):
            sq.CavityParams(
                gamma1=1e8, gamma2=1e6, length=0.4, tau_f=0.4 / sq.SPEED_OF_LIGHT * 1.001,
                t_out=0.1, loss=0.001, e_nl=0.02, eta_esc=0.99, p_th=0.1,
            )

    def test_derived_eta_esc_exact(self, cavity):
        assert cavity.eta_esc == GAMMA1 / (GAMMA1 + GAMMA2)

    def test_eta_counting_product(self, calibration):
        assert calibration.eta_counting == pytest.approx(0.85 * 0.95 * 0.5, rel=1e-15)

    def test_analysis_frequency_recomputed(self, cavity):
        freq = sq.AnalysisFrequency(FREQ_HZ)
        assert freq.omega(cavity) == pytest.approx(
            2 * math.pi * FREQ_HZ / cavity.gamma_total, rel=1e-15
        )
        half = sq.CavityParams.from_gammas(GAMMA1 / 2, GAMMA2 / 2, length=LENGTH, e_nl=E_NL)
        assert freq.omega(half) == pytest.approx(2 * freq.omega(cavity), rel=1e-12)
