"""Plot-data CSV emitters for the model curves (fig2 through fig7).

Each emitter evaluates the relevant closed form over a grid and writes a
CSV ready for plotting.  Defaults reproduce the bundled reference setup:
gamma1 = 82.1e6 1/s, gamma2 = 6.9e6 1/s, round trip 405 mm, E_NL 0.02 1/W,
k = 1.045e11 1/(W s), analysis frequency 800 kHz, threshold 165.3 mW.
"""

import numpy as np

from .errors import IoFailure
from .estimate import DB_PER_R, EstimationConfig, estimate_squeezing
from .opo import (
    AnalysisFrequency,
    CavityParams,
    CombModelParams,
    DetectionEfficiencyHD,
    comb_model_eval,
    detected_variances,
    g2zero_from_pump,
    PumpCalibration,
    quadrature_variances,
    to_decibel,
)


def reference_cavity() -> CavityParams:
    return CavityParams.from_gammas(
        82.1e6, 6.9e6, length=0.405, e_nl=0.02, eta_esc=0.7, p_th=0.1653
    )


def reference_calibration() -> PumpCalibration:
    return PumpCalibration(k=1.045e11, transmittance=0.85, fiber_coupling=0.95, detector_eff=0.5)


def reference_comb() -> CombModelParams:
    return CombModelParams(
        n1=16.0, n2=0.064, omega_c=2.0 * np.pi * 14.16e6,
        tau0=-0.98e-9, tau_r=185e-12, tau_f=1.34e-9,
    )


def _write_rows(path, header: str, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(format(v, ".10g") for v in row) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def emit_variance_vs_pump(path, cavity=None, freq_hz=800e3, eta_det=None, n=200) -> None:
    """fig2: detected squeezed / anti-squeezed noise power vs pump power."""
    cavity = cavity or reference_cavity()
    eta_det = eta_det or DetectionEfficiencyHD(0.95, 0.97, 0.99)
    freq = AnalysisFrequency(freq_hz)
    rows = []
    for p in np.linspace(1e-4, 0.96, n) * cavity.p_th:
        v = detected_variances(cavity, p, freq, eta_det)
        rows.append((p * 1e3, v.v_minus, v.v_plus, to_decibel(v.v_minus), to_decibel(v.v_plus)))
    _write_rows(path, "p_mw,v_minus,v_plus,v_minus_db,v_plus_db", rows)


def emit_comb_curve(path, params=None, span_ns=70.0, n=4000) -> None:
    """fig3: comb-shaped g2(tau) over a symmetric delay window."""
    params = params or reference_comb()
    tau = np.linspace(-span_ns * 1e-9, span_ns * 1e-9, n)
    g2 = comb_model_eval(params, tau)
    _write_rows(path, "tau_ns,g2", zip(tau * 1e9, g2))


def emit_rate_line(path, cal=None, p_max_uw=250.0, n=100) -> None:
    """fig4: detected down-conversion rate vs pump power."""
    cal = cal or reference_calibration()
    rows = []
    for p in np.linspace(0.0, p_max_uw * 1e-6, n):
        rows.append((p * 1e6, cal.measured_rate(p), cal.rate(p)))
    _write_rows(path, "p_uw,r_meas_hz,r_hz", rows)


def emit_g2_vs_pump(path, cavity=None, cal=None, p_min_uw=2.0, p_max_uw=250.0, n=200) -> None:
    """fig5: g2(0) vs pump power."""
    cavity = cavity or reference_cavity()
    cal = cal or reference_calibration()
    rows = []
    for p in np.geomspace(p_min_uw * 1e-6, p_max_uw * 1e-6, n):
        rows.append((p * 1e6, g2zero_from_pump(cavity, cal, p)))
    _write_rows(path, "p_uw,g2_zero", rows)


def emit_g2_vs_pump_by_efficiency(
    path, cavity=None, cal=None, scalings=(1.0, 0.6, 0.2), p_min_uw=2.0, p_max_uw=250.0, n=100
) -> None:
    """fig6: g2(0) vs pump power at scaled counting efficiencies.

    g2(0) does not depend on the counting efficiency, so the columns are
    identical by construction; the file documents that invariance.
    """
    cavity = cavity or reference_cavity()
    cal = cal or reference_calibration()
    rows = []
    for p in np.geomspace(p_min_uw * 1e-6, p_max_uw * 1e-6, n):
        g2 = g2zero_from_pump(cavity, cal, p)
        rows.append((p * 1e6, *([g2] * len(scalings))))
    header = "p_uw," + ",".join(f"g2_zero_eta_x{s:g}" for s in scalings)
    _write_rows(path, header, rows)


def emit_squeezing_vs_g2(path, cavity=None, k=1.045e11, freq_hz=800e3, n=200) -> None:
    """fig7: squeezing parameter and dB degree vs g2(0), both formula modes."""
    cavity = cavity or reference_cavity()
    chain = EstimationConfig(formula_mode="chain", eta_esc_source="gammas",
                             p_th_source="losses", f=freq_hz)
    literal = EstimationConfig(formula_mode="eq5", f=freq_hz)
    rows = []
    for g2 in np.geomspace(3.0, 120.0, n):
        ec = estimate_squeezing(g2, cavity, k, chain)
        el = estimate_squeezing(g2, cavity, k, literal)
        rows.append((g2, ec.r, ec.squeezing_db, el.r, el.squeezing_db))
    _write_rows(path, "g2_zero,r_chain,db_chain,r_eq5,db_eq5", rows)


FIGURE_EMITTERS = {
    "fig2_variance_vs_pump.csv": emit_variance_vs_pump,
    "fig3_comb_g2.csv": emit_comb_curve,
    "fig4_rate_vs_pump.csv": emit_rate_line,
    "fig5_g2_vs_pump.csv": emit_g2_vs_pump,
    "fig6_g2_vs_pump_by_efficiency.csv": emit_g2_vs_pump_by_efficiency,
    "fig7_squeezing_vs_g2.csv": emit_squeezing_vs_g2,
}


def emit_all(out_dir) -> list[str]:
    """Write every figure CSV into ``out_dir``; returns the paths written."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, emit in FIGURE_EMITTERS.items():
        path = os.path.join(out_dir, name)
        emit(path)
        written.append(path)
    return written
