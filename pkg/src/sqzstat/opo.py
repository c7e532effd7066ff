"""Closed-form physics of a below-threshold optical parametric oscillator.

Pure functions over immutable parameter records: pump-power vs g2(0)
relations, quadrature variances of the emitted squeezed vacuum, threshold
and escape-efficiency bookkeeping, and the comb-shaped g2(tau) model that a
multimode OPO produces in a Hanbury-Brown-Twiss measurement.

Conventions
-----------
* All rates are angular, in s^-1.  A cavity quoted as "82.1 MHz" enters as
  82.1e6 s^-1; unit adapters live at the CLI boundary, not here.
* ``x`` always denotes sqrt(P / P_th).
* The squeezing parameter r is defined from the anti-squeezed variance,
  r = ln(V+) / 2, so V+- = exp(+-2r) and the squeezing degree in decibels
  is 10*log10(exp(-2r)).
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AboveThreshold,
    InvalidFraction,
    InvalidParameter,
    NonPositiveLoss,
    NonPositiveVariance,
    SubThermalG2,
    ZeroConversion,
    ZeroPump,
)

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact

_REL_TOL_LENGTH = 1e-9  # allowed tau_f vs length/c inconsistency


@dataclass(frozen=True)
class CavityParams:
    """OPO cavity rates, losses, and geometry.

    gamma1   output-coupling rate, angular s^-1
    gamma2   intracavity extra-loss rate, angular s^-1
    length   optical round-trip path length, m
    tau_f    round-trip time, s (must equal length/c to 1e-9 relative)
    t_out    output-coupler transmission, fraction
    loss     round-trip extra loss, fraction
    e_nl     single-pass conversion coefficient, W^-1
    eta_esc  escape efficiency, fraction
    p_th     oscillation threshold power, W

    Build instances through :meth:`from_gammas` or
    :func:`derive_cavity_rates`; they keep the derived fields consistent.
    ``eta_esc`` and ``p_th`` accept explicit overrides there (measured
    values take precedence over derived ones when supplied).
    """

    gamma1: float
    gamma2: float
    length: float
    tau_f: float
    t_out: float
    loss: float
    e_nl: float
    eta_esc: float
    p_th: float

    def __post_init__(self):
        if self.gamma1 <= 0:
            raise InvalidParameter(f"gamma1 must be > 0, got {self.gamma1}")
        if self.gamma2 < 0:
            raise InvalidParameter(f"gamma2 must be >= 0, got {self.gamma2}")
        if self.length <= 0:
            raise InvalidParameter(f"length must be > 0, got {self.length}")
        if self.e_nl <= 0:
            raise ZeroConversion(f"e_nl must be > 0, got {self.e_nl}")
        if abs(self.tau_f - self.length / SPEED_OF_LIGHT) > _REL_TOL_LENGTH * self.tau_f:
            raise InvalidParameter(
                f"tau_f={self.tau_f} inconsistent with length/c={self.length / SPEED_OF_LIGHT}"
            )
        if not 0.0 < self.eta_esc <= 1.0:
            raise InvalidFraction(f"eta_esc must be in (0, 1], got {self.eta_esc}")
        if self.p_th <= 0:
            raise InvalidParameter(f"p_th must be > 0, got {self.p_th}")

    @property
    def gamma_total(self) -> float:
        return self.gamma1 + self.gamma2

    @property
    def p_th_from_losses(self) -> float:
        """Threshold implied by the loss budget, (T+L)^2 / (4 E_NL)."""
        return threshold_power(self.t_out, self.loss, self.e_nl)

    @classmethod
    def from_gammas(
        cls,
        gamma1: float,
        gamma2: float,
        length: float | None = None,
        tau_f: float | None = None,
        e_nl: float = 0.02,
        eta_esc: float | None = None,
        p_th: float | None = None,
    ) -> "CavityParams":
        """Build from decay rates plus geometry (length or tau_f).

        ``eta_esc`` / ``p_th`` default to the derived values
        gamma1/(gamma1+gamma2) and (T+L)^2/(4 E_NL); pass measured numbers
        to override.
        """
        if (length is None) == (tau_f is None):
            raise InvalidParameter("give exactly one of length, tau_f")
        if tau_f is None:
            tau_f = length / SPEED_OF_LIGHT
        else:
            length = tau_f * SPEED_OF_LIGHT
        if gamma1 <= 0:
            raise InvalidParameter(f"gamma1 must be > 0, got {gamma1}")
        t_out = gamma1 * tau_f
        loss = gamma2 * tau_f
        if eta_esc is None:
            eta_esc = gamma1 / (gamma1 + gamma2)
        if p_th is None:
            p_th = threshold_power(t_out, loss, e_nl)
        return cls(gamma1, gamma2, length, tau_f, t_out, loss, e_nl, eta_esc, p_th)

    def with_measured(self, eta_esc: float | None = None, p_th: float | None = None) -> "CavityParams":
        """Copy with measured overrides for eta_esc and/or p_th."""
        kw = {}
        if eta_esc is not None:
            kw["eta_esc"] = eta_esc
        if p_th is not None:
            kw["p_th"] = p_th
        return replace(self, **kw)


@dataclass(frozen=True)
class PumpCalibration:
    """Down-conversion rate calibration R = k*P and the counting path.

    k              pair rate per pump power, s^-1 W^-1
    transmittance  OPO-to-fiber transmittance t
    fiber_coupling fiber coupling efficiency f
    detector_eff   single-photon detector efficiency d
    """

    k: float
    transmittance: float = 1.0
    fiber_coupling: float = 1.0
    detector_eff: float = 1.0

    def __post_init__(self):
        if self.k <= 0:
            raise InvalidParameter(f"k must be > 0, got {self.k}")
        for name in ("transmittance", "fiber_coupling", "detector_eff"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise InvalidFraction(f"{name} must be in (0, 1], got {v}")

    @property
    def eta_counting(self) -> float:
        """Total counting-path efficiency t*f*d."""
        return self.transmittance * self.fiber_coupling * self.detector_eff

    def rate(self, pump_power: float) -> float:
        """Generated pair rate R = k*P, s^-1."""
        return self.k * pump_power

    def measured_rate(self, pump_power: float) -> float:
        """Detected rate eta * k * P, s^-1."""
        return self.eta_counting * self.rate(pump_power)


@dataclass(frozen=True)
class AnalysisFrequency:
    """Sideband analysis frequency of a noise measurement, Hz.

    The normalized frequency Omega = 2*pi*f / (gamma1+gamma2) depends on the
    cavity, so it is recomputed on demand rather than stored.
    """

    f: float

    def __post_init__(self):
        if self.f <= 0:
            raise InvalidParameter(f"analysis frequency must be > 0, got {self.f}")

    def omega(self, cavity: CavityParams) -> float:
        return 2.0 * math.pi * self.f / cavity.gamma_total


@dataclass(frozen=True)
class DetectionEfficiencyHD:
    """Homodyne detection efficiency budget: eta_det = eta_tr * eta_vis^2 * eta_qu."""

    eta_tr: float
    eta_vis: float
    eta_qu: float

    def __post_init__(self):
        for name in ("eta_tr", "eta_vis", "eta_qu"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise InvalidFraction(f"{name} must be in (0, 1], got {v}")

    @property
    def eta_det(self) -> float:
        return self.eta_tr * self.eta_vis**2 * self.eta_qu


@dataclass(frozen=True)
class CombModelParams:
    """Parameters of the comb-shaped g2(tau) model.

    n1       overall scale (dimensionless)
    n2       background level (dimensionless)
    omega_c  cavity linewidth, angular s^-1
    tau0     electronic delay, s
    tau_r    detection resolution (FWHM), s
    tau_f    peak spacing = cavity round-trip time, s
    """

    n1: float
    n2: float
    omega_c: float
    tau0: float
    tau_r: float
    tau_f: float

    def __post_init__(self):
        if self.n1 <= 0:
            raise InvalidParameter(f"n1 must be > 0, got {self.n1}")
        if self.n2 < 0:
            raise InvalidParameter(f"n2 must be >= 0, got {self.n2}")
        for name in ("omega_c", "tau_r", "tau_f"):
            if getattr(self, name) <= 0:
                raise InvalidParameter(f"{name} must be > 0, got {getattr(self, name)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.n1, self.n2, self.omega_c, self.tau0, self.tau_r, self.tau_f])

    @classmethod
    def from_array(cls, p) -> "CombModelParams":
        return cls(*(float(v) for v in p))


PARAM_NAMES_COMB = ("n1", "n2", "omega_c", "tau0", "tau_r", "tau_f")


@dataclass(frozen=True)
class QuadratureVariances:
    """Output quadrature variances in shot-noise units and the implied r."""

    v_minus: float
    v_plus: float
    r: float

    def __post_init__(self):
        if not 0.0 < self.v_minus <= 1.0 + 1e-12:
            raise InvalidParameter(f"v_minus must be in (0, 1], got {self.v_minus}")
        if self.v_plus < 1.0 - 1e-12:
            raise InvalidParameter(f"v_plus must be >= 1, got {self.v_plus}")
        if self.r < 0:
            raise InvalidParameter(f"r must be >= 0, got {self.r}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def threshold_power(t_out: float, loss: float, e_nl: float) -> float:
    """Oscillation threshold (T + L)^2 / (4 E_NL), in watts.

    The lossless limit T + L = 0 is allowed and returns 0.
    """
    if e_nl <= 0:
        raise ZeroConversion(f"e_nl must be > 0, got {e_nl}")
    total = t_out + loss
    if not 0.0 <= total < 1.0:
        raise InvalidFraction(f"T + L must be in [0, 1), got {total}")
    return total * total / (4.0 * e_nl)


def derive_cavity_rates(
    omega_c: float, tau_f: float, t_out: float, e_nl: float = 0.02
) -> CavityParams:
    """Extract cavity rates from a fitted linewidth and peak spacing.

    gamma1 = T / tau_f and gamma2 = omega_c - gamma1; length, losses,
    escape efficiency and loss-implied threshold follow.  ``e_nl`` feeds
    the threshold estimate (crystal conversion coefficient, W^-1).
    """
    if tau_f <= 0:
        raise InvalidParameter(f"tau_f must be > 0, got {tau_f}")
    if not 0.0 < t_out < 1.0:
        raise InvalidFraction(f"t_out must be in (0, 1), got {t_out}")
    gamma1 = t_out / tau_f
    if omega_c <= gamma1:
        raise NonPositiveLoss(
            f"omega_c={omega_c} <= t_out/tau_f={gamma1}; extra loss would be <= 0"
        )
    gamma2 = omega_c - gamma1
    return CavityParams.from_gammas(gamma1, gamma2, tau_f=tau_f, e_nl=e_nl)


def g2zero_from_pump(cavity: CavityParams, cal: PumpCalibration, pump_power: float) -> float:
    """g2(0) of the output field at a given pump power.

    Equals 2 + gamma1 / (2 k P); the equivalent finesse form
    2 + (gamma1+gamma2)^2 tau_f F^2 / (4 pi F0 k P) is checked against this
    in the test suite.
    """
    if pump_power <= 0:
        raise ZeroPump(f"pump power must be > 0, got {pump_power}")
    return 2.0 + cavity.gamma1 / (2.0 * cal.k * pump_power)


def pump_from_g2zero(cavity: CavityParams, cal: PumpCalibration, g2zero: float) -> float:
    """Invert :func:`g2zero_from_pump`: pump power that yields a given g2(0)."""
    if g2zero <= 2.0:
        raise SubThermalG2(f"g2(0) must be > 2, got {g2zero}")
    return cavity.gamma1 / (2.0 * cal.k * (g2zero - 2.0))


def epsilon_rate_from_g2zero(cavity: CavityParams, g2zero: float) -> float:
    """Parametric gain rate (s^-1) implied by g2(0).

    Continuous-time reading of the gain/coherence relation:
    eps_rate = (gamma1+gamma2) / sqrt(g2(0) - 2).
    """
    if g2zero <= 2.0:
        raise SubThermalG2(f"g2(0) must be > 2, got {g2zero}")
    return cavity.gamma_total / math.sqrt(g2zero - 2.0)


def downconversion_rate_from_epsilon(
    cavity: CavityParams, epsilon: float, convention: float = 1.0
) -> float:
    """Pair generation rate from the dimensionless per-pass amplitude gain.

    Returns ``convention * eps^2 F^2 / (pi F0 tau_f)`` with F, F0 the
    finesse with and without extra loss; algebraically this equals
    ``2 eps^2 gamma1 / (tau_f (gamma1+gamma2))^2``.  Feeding the rate
    reading (pass ``epsilon = eps_rate * tau_f``) makes the result land a
    factor 4 above k*P when eps_rate comes from the g2(0) relation; the
    ``convention`` factor is exposed so callers can reconcile that known
    tension explicitly instead of having it patched silently.
    """
    if epsilon < 0:
        raise InvalidParameter(f"epsilon must be >= 0, got {epsilon}")
    finesse = 2.0 * math.pi / (cavity.tau_f * cavity.gamma_total)
    finesse0 = 2.0 * math.pi / (cavity.tau_f * cavity.gamma1)
    return convention * epsilon**2 * finesse**2 / (math.pi * finesse0 * cavity.tau_f)


def _variance_terms(x: float, omega: float, eta: float) -> tuple[float, float]:
    # all-positive rearrangement; avoids cancellation near threshold
    dp = (1.0 - x) ** 2 + 4.0 * omega**2
    dm = (1.0 + x) ** 2 + 4.0 * omega**2
    v_plus = (dp + 4.0 * eta * x) / dp
    v_minus = ((1.0 - x) ** 2 + 4.0 * x * (1.0 - eta) + 4.0 * omega**2) / dm
    return v_minus, v_plus


def quadrature_variances(
    cavity: CavityParams,
    pump_power: float,
    freq: AnalysisFrequency,
    eta_esc_override: float | None = None,
) -> QuadratureVariances:
    """Squeezed / anti-squeezed output variances below threshold.

    V+- = 1 +- eta_esc * 4x / ((1 -+ x)^2 + 4 Omega^2) with x = sqrt(P/P_th)
    and Omega the normalized analysis frequency; r = ln(V+)/2.
    """
    if pump_power < 0:
        raise ZeroPump(f"pump power must be >= 0, got {pump_power}")
    if pump_power >= cavity.p_th:
        raise AboveThreshold(f"P={pump_power} >= P_th={cavity.p_th}")
    eta = cavity.eta_esc if eta_esc_override is None else eta_esc_override
    if not 0.0 < eta <= 1.0:
        raise InvalidFraction(f"eta_esc must be in (0, 1], got {eta}")
    x = math.sqrt(pump_power / cavity.p_th)
    v_minus, v_plus = _variance_terms(x, freq.omega(cavity), eta)
    return QuadratureVariances(v_minus=v_minus, v_plus=v_plus, r=0.5 * math.log(v_plus))


def detected_variances(
    cavity: CavityParams,
    pump_power: float,
    freq: AnalysisFrequency,
    eta_det: DetectionEfficiencyHD | float,
    eta_esc: float | None = None,
) -> QuadratureVariances:
    """Variances seen by a homodyne detector with efficiency eta_det.

    Same form as :func:`quadrature_variances` with eta_esc replaced by
    eta_det * eta_esc.  r is still reported from the detected V+.
    """
    eta_d = eta_det.eta_det if isinstance(eta_det, DetectionEfficiencyHD) else float(eta_det)
    if not 0.0 <= eta_d <= 1.0:
        raise InvalidFraction(f"eta_det must be in [0, 1], got {eta_d}")
    eta = cavity.eta_esc if eta_esc is None else eta_esc
    if pump_power < 0:
        raise ZeroPump(f"pump power must be >= 0, got {pump_power}")
    if pump_power >= cavity.p_th:
        raise AboveThreshold(f"P={pump_power} >= P_th={cavity.p_th}")
    x = math.sqrt(pump_power / cavity.p_th)
    if eta_d == 0.0:
        return QuadratureVariances(1.0, 1.0, 0.0)
    v_minus, v_plus = _variance_terms(x, freq.omega(cavity), eta_d * eta)
    return QuadratureVariances(v_minus=v_minus, v_plus=v_plus, r=0.5 * math.log(v_plus))


def detected_variance_model(
    pump_power, p_th: float, eta_eff: float, omega: float, sign: int
):
    """Vectorized detected-variance curve used by the variance fit.

    ``eta_eff`` is the product eta_det * eta_esc; ``sign`` +1 for the
    anti-squeezed quadrature, -1 for the squeezed one.
    """
    p = np.asarray(pump_power, dtype=float)
    x = np.sqrt(p / p_th)
    if sign > 0:
        d = (1.0 - x) ** 2 + 4.0 * omega**2
        return (d + 4.0 * eta_eff * x) / d
    d = (1.0 + x) ** 2 + 4.0 * omega**2
    return ((1.0 - x) ** 2 + 4.0 * x * (1.0 - eta_eff) + 4.0 * omega**2) / d


def default_mode_cutoff(omega_c: float, tau_f: float) -> int:
    """Smallest summation bound n_max with envelope tail below 1e-9.

    exp(-omega_c * n * tau_f) < 1e-9  =>  n_max = ceil(9 ln10 / (omega_c tau_f)).
    """
    return int(math.ceil(9.0 * math.log(10.0) / (omega_c * tau_f)))


def comb_model_eval(params: CombModelParams, tau, n_max: int | None = None):
    """Comb-shaped g2(tau): decaying envelope times a train of cusp peaks.

    value = n1 * [n2 + exp(-omega_c |tau - tau0|)
                  * sum_{n=-n_max}^{n_max} (1 + a|u_n|) exp(-a|u_n|)]
    with u_n = tau - n*tau_f - tau0 and a = 2 ln2 / tau_r.

    ``tau`` may be a scalar or array (seconds).  ``n_max`` defaults to
    :func:`default_mode_cutoff`.  The sum is evaluated in full; all
    summands are positive, so enlarging n_max never lowers the value.
    """
    if n_max is None:
        n_max = default_mode_cutoff(params.omega_c, params.tau_f)
    if n_max < 0:
        raise InvalidParameter(f"n_max must be >= 0, got {n_max}")
    tau_arr = np.asarray(tau, dtype=float)
    scalar = tau_arr.ndim == 0
    u = tau_arr.reshape(-1, 1) - params.tau0
    a = 2.0 * math.log(2.0) / params.tau_r
    n = np.arange(-n_max, n_max + 1, dtype=float)
    v = np.abs(u - n * params.tau_f)
    peaks = ((1.0 + a * v) * np.exp(-a * v)).sum(axis=1)
    env = np.exp(-params.omega_c * np.abs(u[:, 0]))
    out = params.n1 * (params.n2 + env * peaks)
    return float(out[0]) if scalar else out


def to_decibel(v: float) -> float:
    """Variance (shot-noise units) to decibels: 10 log10(v)."""
    if v <= 0:
        raise NonPositiveVariance(f"variance must be > 0, got {v}")
    return 10.0 * math.log10(v)
