"""Squeezing parameter from a measured g2(0) plus cavity calibration.

The composed chain (default) inverts the pump relation
P = gamma1 / (2 k (g2(0) - 2)) and evaluates the output-variance formula
at that pump; r = ln(V+)/2.  The literal mode evaluates the single
closed-form g2(0)->r expression as published, whose frequency term is
(2*pi*f/(gamma1+gamma2))^2 without the factor 4 the variance formula
carries, and which hard-wires eta_esc = gamma1/(gamma1+gamma2) and the
loss-implied threshold.  Both are kept; they agree to well under 0.01 dB
at the reference operating point.

Escape efficiency and threshold each come in two conventions (derived
from the rates vs explicitly measured); the configuration names the
choice and the estimate echoes it.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AboveThreshold,
    InvalidFraction,
    InvalidParameter,
    SubThermalG2,
    TooManySampleFailures,
)
from .opo import SPEED_OF_LIGHT, AnalysisFrequency, CavityParams, _variance_terms

DB_PER_R = 20.0 * math.log10(math.e)  # squeezing_db = -DB_PER_R * r


@dataclass(frozen=True)
class EstimationConfig:
    """Choices that pin down the g2(0) -> r evaluation.

    formula_mode   "chain" (pump inversion + variance formula) or "eq5"
                   (single literal expression)
    eta_esc_source "gammas" or an explicit value
    p_th_source    "losses" or an explicit value in watts
    f              sideband analysis frequency, Hz
    """

    formula_mode: str = "chain"
    eta_esc_source: str | float = "gammas"
    p_th_source: str | float = "losses"
    f: float = 800e3

    def __post_init__(self):
        if self.formula_mode not in ("chain", "eq5"):
            raise InvalidParameter(f"formula_mode must be 'chain' or 'eq5', got {self.formula_mode}")
        if isinstance(self.eta_esc_source, str):
            if self.eta_esc_source != "gammas":
                raise InvalidParameter(f"eta_esc_source must be 'gammas' or a value, got {self.eta_esc_source}")
        elif not 0.0 < self.eta_esc_source <= 1.0:
            raise InvalidFraction(f"explicit eta_esc must be in (0, 1], got {self.eta_esc_source}")
        if isinstance(self.p_th_source, str):
            if self.p_th_source != "losses":
                raise InvalidParameter(f"p_th_source must be 'losses' or a value, got {self.p_th_source}")
        elif self.p_th_source <= 0:
            raise InvalidParameter(f"explicit p_th must be > 0, got {self.p_th_source}")
        if self.f <= 0:
            raise InvalidParameter(f"analysis frequency must be > 0, got {self.f}")

    def resolve_eta_esc(self, cavity: CavityParams) -> float:
        if self.eta_esc_source == "gammas":
            return cavity.gamma1 / cavity.gamma_total
        return float(self.eta_esc_source)

    def resolve_p_th(self, cavity: CavityParams) -> float:
        if self.p_th_source == "losses":
            return cavity.p_th_from_losses
        return float(self.p_th_source)


@dataclass(frozen=True)
class SqueezingEstimate:
    """Squeezing parameter with variances, decibels, and input echo."""

    r: float
    v_minus: float
    v_plus: float
    squeezing_db: float
    sigma_r: float = 0.0
    sigma_db: float = 0.0
    inputs_echo: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.r < 0:
            raise InvalidParameter(f"r must be >= 0, got {self.r}")
        if self.squeezing_db > 1e-12:
            raise InvalidParameter(f"squeezing_db must be <= 0, got {self.squeezing_db}")
        if self.sigma_r < 0 or self.sigma_db < 0:
            raise InvalidParameter("sigma values must be >= 0")

    def with_uncertainty(self, sigma_r: float, sigma_db: float) -> "SqueezingEstimate":
        return replace(self, sigma_r=sigma_r, sigma_db=sigma_db)


def estimate_squeezing(
    g2zero: float, cavity: CavityParams, k: float, cfg: EstimationConfig
) -> SqueezingEstimate:
    """Turn a measured g2(0) into a squeezing estimate."""
    if g2zero <= 2.0:
        raise SubThermalG2(f"g2(0) must be > 2, got {g2zero}")
    if k <= 0:
        raise InvalidParameter(f"k must be > 0, got {k}")

    eta = cfg.resolve_eta_esc(cavity)
    p_th = cfg.resolve_p_th(cavity)
    pump = cavity.gamma1 / (2.0 * k * (g2zero - 2.0))

    if cfg.formula_mode == "chain":
        if pump >= p_th:
            raise AboveThreshold(
                f"inferred pump {pump} >= threshold {p_th}; g2(0) too close to 2"
            )
        x = math.sqrt(pump / p_th)
        omega = AnalysisFrequency(cfg.f).omega(cavity)
        v_minus, v_plus = _variance_terms(x, omega, eta)
        r = 0.5 * math.log(v_plus)
    else:  # literal single-expression mode
        g = cavity.gamma_total
        root = math.sqrt(2.0 * cavity.gamma1 * cavity.e_nl / (k * (g2zero - 2.0)))
        x = SPEED_OF_LIGHT * root / (g * cavity.length)
        if x >= 1.0:
            raise AboveThreshold(f"inferred x={x} >= 1; g2(0) too close to 2")
        freq_term = (2.0 * math.pi * cfg.f / g) ** 2
        num = 4.0 * (cavity.gamma1 / g) * x
        den = (1.0 - x) ** 2 + freq_term
        v_plus = 1.0 + num / den
        r = 0.5 * math.log(v_plus)
        v_minus = math.exp(-2.0 * r)

    echo = {
        "g2_zero": g2zero,
        "gamma1": cavity.gamma1,
        "gamma2": cavity.gamma2,
        "length": cavity.length,
        "e_nl": cavity.e_nl,
        "k": k,
        "f": cfg.f,
        "eta_esc_source": cfg.eta_esc_source if isinstance(cfg.eta_esc_source, str) else "explicit",
        "eta_esc": eta,
        "p_th_source": cfg.p_th_source if isinstance(cfg.p_th_source, str) else "measured",
        "p_th": p_th,
        "formula_mode": cfg.formula_mode,
        "inferred_pump": pump,
    }
    return SqueezingEstimate(
        r=r,
        v_minus=v_minus,
        v_plus=v_plus,
        squeezing_db=-DB_PER_R * r,
        inputs_echo=echo,
    )


@dataclass(frozen=True)
class UncertainInputs:
    """Central values and one-sigma errors of every estimation input."""

    g2_zero: float
    gamma1: float
    gamma2: float
    length: float
    e_nl: float
    k: float
    f: float
    sigma_g2_zero: float = 0.0
    sigma_gamma1: float = 0.0
    sigma_gamma2: float = 0.0
    sigma_length: float = 0.0
    sigma_e_nl: float = 0.0
    sigma_k: float = 0.0
    sigma_f: float = 0.0

    def __post_init__(self):
        for name in ("sigma_g2_zero", "sigma_gamma1", "sigma_gamma2",
                     "sigma_length", "sigma_e_nl", "sigma_k", "sigma_f"):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"{name} must be >= 0")


def _truncated_normal(rng, mean, sigma, size, low, low_open: bool):
    """Normal draws truncated to the validity domain, by redrawing."""
    if sigma == 0.0:
        return np.full(size, mean)
    out = rng.normal(mean, sigma, size)
    bad = (out <= low) if low_open else (out < low)
    while np.any(bad):
        out[bad] = rng.normal(mean, sigma, int(bad.sum()))
        bad = (out <= low) if low_open else (out < low)
    return out


def propagate_uncertainty(
    inputs: UncertainInputs,
    cfg: EstimationConfig,
    n_samples: int = 10_000,
    seed: int = 0,
    max_failure_fraction: float = 0.01,
) -> tuple[float, float]:
    """Monte Carlo error bars for (r, squeezing_db).

    Each input is drawn independently from a normal law truncated to its
    validity domain; the estimator runs per sample; the sample standard
    deviations are returned.  Deterministic given the seed.  Raises when
    more than ``max_failure_fraction`` of the samples error out.
    """
    if n_samples < 1000:
        raise InvalidParameter(f"n_samples must be >= 1000, got {n_samples}")
    rng = np.random.default_rng(seed)
    g2 = _truncated_normal(rng, inputs.g2_zero, inputs.sigma_g2_zero, n_samples, 2.0, True)
    g1 = _truncated_normal(rng, inputs.gamma1, inputs.sigma_gamma1, n_samples, 0.0, True)
    g2r = _truncated_normal(rng, inputs.gamma2, inputs.sigma_gamma2, n_samples, 0.0, False)
    ln = _truncated_normal(rng, inputs.length, inputs.sigma_length, n_samples, 0.0, True)
    enl = _truncated_normal(rng, inputs.e_nl, inputs.sigma_e_nl, n_samples, 0.0, True)
    kk = _truncated_normal(rng, inputs.k, inputs.sigma_k, n_samples, 0.0, True)
    ff = _truncated_normal(rng, inputs.f, inputs.sigma_f, n_samples, 0.0, True)

    r = np.empty(n_samples)
    db = np.empty(n_samples)
    fails = 0
    for i in range(n_samples):
        try:
            cav = CavityParams.from_gammas(g1[i], g2r[i], length=ln[i], e_nl=enl[i])
            est = estimate_squeezing(g2[i], cav, kk[i], replace(cfg, f=ff[i]))
        except (SubThermalG2, AboveThreshold, InvalidParameter):
            fails += 1
            r[i] = np.nan
            db[i] = np.nan
            continue
        r[i] = est.r
        db[i] = est.squeezing_db
    if fails > max_failure_fraction * n_samples:
        raise TooManySampleFailures(f"{fails}/{n_samples} Monte Carlo samples failed")
    ok = ~np.isnan(r)
    if ok.sum() < 2:
        return 0.0, 0.0
    return float(np.std(r[ok], ddof=1)), float(np.std(db[ok], ddof=1))
