import numpy as np
import pytest

import sqzstat as sq

GAMMA1 = 82.1e6
GAMMA2 = 6.9e6
K_CAL = 1.045e11       # 104.5 MHz/mW
LENGTH = 0.405
E_NL = 0.02
P_TH_MEAS = 0.1653
FREQ_HZ = 800e3
ETA_ARM = 0.404        # 0.85 * 0.95 * 0.5 counting path per arm


@pytest.fixture(scope="session")
def cavity():
    return sq.CavityParams.from_gammas(GAMMA1, GAMMA2, length=LENGTH, e_nl=E_NL)


@pytest.fixture(scope="session")
def calibration():
    return sq.PumpCalibration(
        k=K_CAL, transmittance=0.85, fiber_coupling=0.95, detector_eff=0.5
    )


@pytest.fixture(scope="session")
def comb_ref():
    return sq.CombModelParams(
        n1=16.0, n2=0.064, omega_c=2 * np.pi * 14.16e6,
        tau0=-0.98e-9, tau_r=185e-12, tau_f=1.34e-9,
    )


def matched_sim_config(cavity, pump_power, duration, seed, eta_arm=ETA_ARM, dark_rate=0.0):
    """Simulation whose expected comb peak equals the pump-model g2(0).

    The detector resolution is the free knob: it is set so the generative
    model's true peak height lands on 2 + gamma1/(2kP).
    """
    rate = K_CAL * pump_power
    q = float(np.exp(-cavity.gamma_total * cavity.tau_f))
    target = 2.0 + cavity.gamma1 / (2.0 * K_CAL * pump_power)
    jitter = sq.resolution_for_target_g2(target, rate, q, cavity.tau_f)
    det = sq.DetectorModel(efficiency=eta_arm, dark_rate=dark_rate, jitter_fwhm=jitter)
    return sq.SimConfig(
        cavity=cavity, pump_power=pump_power, duration=duration, k=K_CAL,
        detector_a=det, detector_b=det, seed=seed,
    )


@pytest.fixture(scope="session")
def sim30(cavity):
    """10 s run at 30 uW, matched resolution; shared across closure tests."""
    cfg = matched_sim_config(cavity, 30e-6, 10.0, seed=1001)
    a, b, truth = sq.simulate(cfg)
    hist = sq.normalize(sq.correlate(a, b))
    return {"config": cfg, "a": a, "b": b, "truth": truth, "hist": hist}
