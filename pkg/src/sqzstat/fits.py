"""Calibration fits: comb model, linear rate, g2(0) hyperbola, variance curve.

The comb fit carries analytic Jacobians (the model is piecewise smooth in
|.| terms; at a kink the right-branch derivative is used).  The model sum
is evaluated over a window of comb teeth around each observation point;
terms outside the window are below double-precision resolution.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .correlate import CorrelationHistogram
from .errors import DegenerateDesign, InvalidFraction, InvalidParameter, NoCombDetected, NotNormalized
from .lm import FitResult, fit_nonlinear, fit_weighted_line
from .opo import PARAM_NAMES_COMB, CombModelParams, default_mode_cutoff, detected_variance_model

# FWHM of the cusp kernel (1+a|t|)exp(-a|t|) in units of tau_r:
# (1+u)exp(-u) = 1/2 at u = 1.678347, FWHM = 2u/a = u/ln2 * tau_r
KERNEL_FWHM_PER_TAU_R = 1.6783469900166605 / math.log(2.0)

_COMB_LOG_MASK = (True, False, True, False, True, True)  # n1, omega_c, tau_r, tau_f > 0


def _sgn(x):
    # right-branch convention at kinks
    return np.where(x >= 0.0, 1.0, -1.0)


def _comb_terms(tau, p, n_max):
    n1, n2, omega_c, tau0, tau_r, tau_f = p
    a = 2.0 * math.log(2.0) / tau_r
    u = np.asarray(tau, dtype=float) - tau0
    # teeth beyond ~45/a from the observation point are < 1e-18 of a peak
    half = min(n_max, int(math.ceil(45.0 / (a * tau_f))) + 1)
    m = np.clip(np.rint(u / tau_f), -n_max, n_max)
    n = m[:, None] + np.arange(-half, half + 1)[None, :]
    mask = np.abs(n) <= n_max
    d = u[:, None] - n * tau_f
    v = np.abs(d)
    e = np.exp(-a * v) * mask
    return a, u, n, d, v, e


def comb_model(tau, p, n_max: int):
    """Comb model over an array of delays, windowed tooth sum."""
    n1, n2, omega_c, tau0, tau_r, tau_f = p
    a, u, n, d, v, e = _comb_terms(tau, p, n_max)
    s = ((1.0 + a * v) * e).sum(axis=1)
    env = np.exp(-omega_c * np.abs(u))
    return n1 * (n2 + env * s)


def comb_jacobian(tau, p, n_max: int):
    """Analytic d model / d (n1, n2, omega_c, tau0, tau_r, tau_f)."""
    n1, n2, omega_c, tau0, tau_r, tau_f = p
    a, u, n, d, v, e = _comb_terms(tau, p, n_max)
    kern = (1.0 + a * v) * e
    s = kern.sum(axis=1)
    absu = np.abs(u)
    env = np.exp(-omega_c * absu)

    # d kern / d v = -a^2 v e^{-a v};  d kern / d a = -a v^2 e^{-a v}
    ds_dtau0 = (a * a * v * e * _sgn(d)).sum(axis=1)          # dv/dtau0 = -sgn(d)
    ds_dtauf = (a * a * v * e * _sgn(d) * n).sum(axis=1)      # dv/dtauf = -n sgn(d)
    ds_dtaur = (a * a / tau_r) * (v * v * e).sum(axis=1)      # da/dtaur = -a/tau_r

    denv_dtau0 = omega_c * _sgn(u) * env

    jac = np.empty((u.size, 6))
    jac[:, 0] = n2 + env * s
    jac[:, 1] = n1
    jac[:, 2] = -n1 * absu * env * s
    jac[:, 3] = n1 * (denv_dtau0 * s + env * ds_dtau0)
    jac[:, 4] = n1 * env * ds_dtaur
    jac[:, 5] = n1 * env * ds_dtauf
    return jac


def _poisson_sigmas(hist: CorrelationHistogram) -> np.ndarray:
    """Per-bin g2 sigma from Poisson counts, one-count floor.

    sigma_i = alpha * sqrt(max(counts_i, 1)) with alpha the g2-per-count
    scale; recovered from the bin contents when totals are absent (CSV
    round trips), exact either way since every bin shares one alpha.
    """
    counts = hist.counts
    try:
        alpha = hist.accidental_scale
    except Exception:
        nz = counts > 0
        if not np.any(nz):
            raise NotNormalized("histogram has no counts to derive weights from")
        alpha = float(np.median(hist.g2[nz] / counts[nz]))
    return alpha * np.sqrt(np.maximum(counts, 1))


def initial_guess_comb(hist: CorrelationHistogram) -> CombModelParams:
    """Seed the comb fit from histogram structure alone.

    Peak spacing from the median gap between detected maxima, delay offset
    from the tallest peak, linewidth from a log-linear fit of peak heights
    against distance, resolution from the tallest peak's width, scales from
    the peak height and far-tail mean.
    """
    if not hist.normalized:
        raise NotNormalized("normalize the histogram first")
    g2 = hist.g2
    tau = hist.tau_centers()
    k = max(1, hist.num_bins // 10)
    baseline = float(np.concatenate([g2[:k], g2[-k:]]).mean())
    peak_max = float(g2.max())
    if baseline <= 0 or peak_max < 2.0 * baseline:
        raise NoCombDetected(f"peak/baseline {peak_max / max(baseline, 1e-300):.2f} < 2")

    idx, _ = find_peaks(g2, height=1.5 * baseline, prominence=0.25 * (peak_max - baseline))
    if idx.size < 3:
        raise NoCombDetected(f"only {idx.size} comb teeth above threshold")

    heights = g2[idx]
    tallest = idx[int(np.argmax(heights))]
    tau0 = float(tau[tallest])
    tau_f = float(np.median(np.diff(tau[idx])))

    excess = heights - baseline
    ok = excess > 0.05 * excess.max()
    slope = np.polyfit(np.abs(tau[idx][ok] - tau0), np.log(excess[ok]), 1)[0]
    omega_c = max(-slope, 1e-3 / (tau[-1] - tau[0]))

    half_level = baseline + 0.5 * (g2[tallest] - baseline)
    lo = tallest
    while lo > 0 and g2[lo - 1] > half_level:
        lo -= 1
    hi = tallest
    while hi < g2.size - 1 and g2[hi + 1] > half_level:
        hi += 1
    # linear interpolation to the half-level crossings
    left = tau[lo] if lo == 0 else tau[lo] - hist.bin_width * (g2[lo] - half_level) / max(
        g2[lo] - g2[lo - 1], 1e-300
    )
    right = tau[hi] if hi == g2.size - 1 else tau[hi] + hist.bin_width * (
        g2[hi] - half_level
    ) / max(g2[hi] - g2[hi + 1], 1e-300)
    tau_r = max((right - left) / KERNEL_FWHM_PER_TAU_R, hist.bin_width / 4.0)

    n1 = peak_max - baseline
    n2 = baseline / n1
    return CombModelParams(n1=n1, n2=n2, omega_c=omega_c, tau0=tau0, tau_r=tau_r, tau_f=tau_f)


def fit_comb(
    hist: CorrelationHistogram,
    init: CombModelParams | None = None,
    n_max: int | None = None,
) -> tuple[CombModelParams, FitResult]:
    """Weighted comb-model fit of a normalized histogram.

    Weights are Poisson (one-count floor).  ``init`` defaults to
    :func:`initial_guess_comb`; ``n_max`` to the envelope cutoff for the
    initial linewidth, widened to cover the histogram extent.
    """
    if not hist.normalized:
        raise NotNormalized("normalize the histogram first")
    if init is None:
        init = initial_guess_comb(hist)
    tau = hist.tau_centers()
    if n_max is None:
        span = max(abs(tau[0] - init.tau0), abs(tau[-1] - init.tau0))
        n_max = max(
            default_mode_cutoff(init.omega_c, init.tau_f),
            int(math.ceil(span / init.tau_f)) + 2,
        )
    sigma = _poisson_sigmas(hist)
    fit = fit_nonlinear(
        lambda x, p: comb_model(x, p, n_max),
        tau,
        hist.g2,
        sigma,
        init.as_array(),
        names=PARAM_NAMES_COMB,
        jac=lambda x, p: comb_jacobian(x, p, n_max),
        log_mask=_COMB_LOG_MASK,
    )
    return CombModelParams.from_array(fit.values), fit


# ---------------------------------------------------------------------------
# rate calibration (pair rate vs pump power)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatePoint:
    """One measured down-conversion rate at a pump power."""

    pump_power: float      # W
    measured_rate: float   # detected rate, s^-1
    sigma: float           # statistical error of measured_rate, s^-1

    def __post_init__(self):
        if self.pump_power <= 0:
            raise InvalidParameter(f"pump_power must be > 0, got {self.pump_power}")
        if self.measured_rate < 0:
            raise InvalidParameter(f"measured_rate must be >= 0, got {self.measured_rate}")
        if self.sigma <= 0:
            raise InvalidParameter(f"sigma must be > 0, got {self.sigma}")


def fit_rate_linear(
    points, eta_counting: float, model: str = "through_origin"
) -> tuple[float, float, FitResult]:
    """Weighted linear fit of the generated rate R = R_meas / eta vs P.

    ``through_origin`` fits R = k P (default); ``with_offset`` fits
    R = k P + b to absorb a dark-count pedestal.  Returns (k, sigma_k, fit).
    """
    points = list(points)
    if len(points) < 2:
        raise DegenerateDesign(f"need >= 2 points, got {len(points)}")
    if not 0.0 < eta_counting <= 1.0:
        raise InvalidFraction(f"eta_counting must be in (0, 1], got {eta_counting}")
    p = np.array([pt.pump_power for pt in points])
    if np.all(p == p[0]):
        raise DegenerateDesign("all pump powers equal")
    r = np.array([pt.measured_rate for pt in points]) / eta_counting
    s = np.array([pt.sigma for pt in points]) / eta_counting

    if model == "through_origin":
        values, cov, resid = fit_weighted_line(p, r, s, through_origin=True)
        names = ("k",)
    elif model == "with_offset":
        values, cov, resid = fit_weighted_line(p, r, s, through_origin=False)
        names = ("k", "offset")
    else:
        raise ValueError(f"unknown rate model {model!r}")
    fit = FitResult(
        names=names,
        values=values,
        covariance=cov,
        residual_norm=resid,
        iterations=1,
        converged=True,
        info={"eta_counting": eta_counting, "model": model},
    )
    return float(values[0]), float(np.sqrt(cov[0, 0])), fit


def fit_g2_hyperbola(
    points, gamma1: float | None = None, k: float | None = None
) -> tuple[float, float, FitResult]:
    """Weighted fit of g2(0) = 2 + a / P, linear in a.

    ``points`` are (P, g2zero, sigma) triples.  When gamma1 and k are
    given, the model prediction a_pred = gamma1 / (2k) is reported in
    ``fit.info`` for consistency checking.
    """
    pts = [(float(p), float(g), float(s)) for p, g, s in points]
    if len(pts) < 2:
        raise DegenerateDesign(f"need >= 2 points, got {len(pts)}")
    p = np.array([t[0] for t in pts])
    if np.any(p <= 0):
        raise InvalidParameter("all pump powers must be > 0")
    if np.all(p == p[0]):
        raise DegenerateDesign("all pump powers equal")
    y = np.array([t[1] for t in pts]) - 2.0
    s = np.array([t[2] for t in pts])
    values, cov, resid = fit_weighted_line(1.0 / p, y, s, through_origin=True)
    info = {}
    if gamma1 is not None and k is not None:
        info["a_pred"] = gamma1 / (2.0 * k)
    fit = FitResult(
        names=("a",),
        values=values,
        covariance=cov,
        residual_norm=resid,
        iterations=1,
        converged=True,
        info=info,
    )
    return float(values[0]), float(np.sqrt(cov[0, 0])), fit


# ---------------------------------------------------------------------------
# detected-variance curve (threshold and detection efficiency)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariancePoint:
    """One detected quadrature variance at a pump power.

    ``quadrature`` is +1 for the anti-squeezed curve, -1 for the squeezed.
    """

    pump_power: float
    variance: float
    sigma: float
    quadrature: int = 1

    def __post_init__(self):
        if self.pump_power <= 0:
            raise InvalidParameter(f"pump_power must be > 0, got {self.pump_power}")
        if self.variance <= 0:
            raise InvalidParameter(f"variance must be > 0, got {self.variance}")
        if self.sigma <= 0:
            raise InvalidParameter(f"sigma must be > 0, got {self.sigma}")
        if self.quadrature not in (-1, 1):
            raise InvalidParameter(f"quadrature must be +1 or -1, got {self.quadrature}")


def fit_variance_curve(
    points, omega: float, eta_esc: float
) -> tuple[float, float, FitResult]:
    """Joint fit of the detected-variance curves for (P_th, eta_det).

    ``omega`` is the normalized analysis frequency 2*pi*f/(gamma1+gamma2);
    ``eta_esc`` is held fixed.  Both quadratures may be mixed freely in
    ``points``.  Returns (p_th, eta_det, fit).

    The quadrature sign rides along as the sign of the abscissa so the
    engine's deterministic point ordering applies to the joint data set.
    """
    points = list(points)
    if len(points) < 2:
        raise DegenerateDesign(f"need >= 2 points, got {len(points)}")
    x = np.array([pt.quadrature * pt.pump_power for pt in points])
    y = np.array([pt.variance for pt in points])
    s = np.array([pt.sigma for pt in points])

    def model(xs, p):
        p_th, eta_det = p
        out = np.empty_like(xs)
        plus = xs > 0
        out[plus] = detected_variance_model(xs[plus], p_th, eta_det * eta_esc, omega, +1)
        out[~plus] = detected_variance_model(-xs[~plus], p_th, eta_det * eta_esc, omega, -1)
        return out

    p_max = float(np.abs(x).max())
    fit = fit_nonlinear(
        model,
        x,
        y,
        s,
        np.array([4.0 * p_max, 0.5]),
        names=("p_th", "eta_det"),
        log_mask=(True, True),
    )
    return float(fit.values[0]), float(fit.values[1]), fit
