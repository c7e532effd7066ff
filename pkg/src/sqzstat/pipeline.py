"""End-to-end pipeline: tags -> histogram -> comb fit -> cavity -> squeezing.

Stage order: correlate, normalize, fit_comb, derive_cavity_rates,
optional fit_rate_linear, g2_at_zero, estimate_squeezing,
propagate_uncertainty.  The first failing stage aborts with its name and
the underlying cause.  Reports carry every intermediate value and are
reproducible bit-for-bit for identical inputs and seed.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .correlate import correlate as correlate_streams
from .correlate import g2_at_zero, normalize
from .errors import ConfigInvalid, StageFailure
from .estimate import EstimationConfig, UncertainInputs, estimate_squeezing, propagate_uncertainty
from .fits import fit_comb, fit_rate_linear
from .opo import CavityParams, derive_cavity_rates
from .simulate import DetectorModel, SimConfig, TimeTagStream, simulate

REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "r", "sigma_r", "squeezing_db", "sigma_db", "g2_zero",
        "gamma1", "gamma2", "k", "f", "eta_esc", "p_th", "formula_mode",
    ],
    "properties": {
        "r": {"type": "number", "minimum": 0},
        "sigma_r": {"type": "number", "minimum": 0},
        "squeezing_db": {"type": "number", "maximum": 1e-12},
        "sigma_db": {"type": "number", "minimum": 0},
        "g2_zero": {"type": "number", "exclusiveMinimum": 2},
        "gamma1": {"type": "number", "exclusiveMinimum": 0},
        "gamma2": {"type": "number", "minimum": 0},
        "k": {"type": "number", "exclusiveMinimum": 0},
        "f": {"type": "number", "exclusiveMinimum": 0},
        "eta_esc": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "p_th": {"type": "number", "exclusiveMinimum": 0},
        "formula_mode": {"enum": ["chain", "eq5"]},
        "stages": {"type": "object"},
    },
}


@dataclass
class Report:
    """Pipeline result: headline numbers plus per-stage diagnostics."""

    r: float
    sigma_r: float
    squeezing_db: float
    sigma_db: float
    g2_zero: float
    gamma1: float
    gamma2: float
    k: float
    f: float
    eta_esc: float
    p_th: float
    formula_mode: str
    stages: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "sigma_r": self.sigma_r,
            "squeezing_db": self.squeezing_db,
            "sigma_db": self.sigma_db,
            "g2_zero": self.g2_zero,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "k": self.k,
            "f": self.f,
            "eta_esc": self.eta_esc,
            "p_th": self.p_th,
            "formula_mode": self.formula_mode,
            "stages": self.stages,
        }

    def to_text(self) -> str:
        lines = [
            f"g2_zero {self.g2_zero:.6g}",
            f"gamma1 {self.gamma1:.6g} 1/s",
            f"gamma2 {self.gamma2:.6g} 1/s",
            f"k {self.k:.6g} 1/(W s)",
            f"eta_esc {self.eta_esc:.6g}",
            f"p_th {self.p_th:.6g} W",
            f"formula_mode {self.formula_mode}",
            f"r {self.r:.6g} +/- {self.sigma_r:.2g}",
            f"squeezing {self.squeezing_db:.4f} +/- {self.sigma_db:.2g} dB",
        ]
        return "\n".join(lines) + "\n"


def demo_config() -> dict:
    """Bundled one-second demonstration configuration (JSON-compatible)."""
    return {
        "source": {
            "sim": {
                "gamma1": 82.1e6,
                "gamma2": 6.9e6,
                "length": 0.405,
                "e_nl": 0.02,
                "pump_power": 30e-6,
                "k": 1.045e11,
                "duration": 1.0,
                "efficiency_a": 0.404,
                "efficiency_b": 0.404,
                "jitter_fwhm": 2.33e-10,
                "dark_rate": 500.0,
                "seed": 20260810,
            }
        },
        "correlate": {"bin_ps": 35, "bins": 4000, "center_ps": 0},
        "cavity": {"t_out": 0.11, "e_nl": 0.02},
        "k": 1.045e11,
        "estimate": {
            "freq_hz": 800e3,
            "eta_esc": 0.7,
            "p_th": 0.1653,
            "mode": "chain",
            "mc_samples": 2000,
            "seed": 7,
        },
    }


def _sim_from_config(sc: dict) -> SimConfig:
    cavity = CavityParams.from_gammas(
        gamma1=float(sc["gamma1"]),
        gamma2=float(sc.get("gamma2", 0.0)),
        length=float(sc["length"]) if "length" in sc else None,
        tau_f=float(sc["tau_f"]) if "tau_f" in sc else None,
        e_nl=float(sc.get("e_nl", 0.02)),
    )
    det_a = DetectorModel(
        efficiency=float(sc.get("efficiency_a", 1.0)),
        dark_rate=float(sc.get("dark_rate", 0.0)),
        dead_time=float(sc.get("dead_time", 0.0)),
        jitter_fwhm=float(sc.get("jitter_fwhm", 0.0)),
    )
    det_b = DetectorModel(
        efficiency=float(sc.get("efficiency_b", sc.get("efficiency_a", 1.0))),
        dark_rate=float(sc.get("dark_rate", 0.0)),
        dead_time=float(sc.get("dead_time", 0.0)),
        jitter_fwhm=float(sc.get("jitter_fwhm", 0.0)),
    )
    return SimConfig(
        cavity=cavity,
        pump_power=float(sc.get("pump_power", 0.0) or 0.0),
        duration=float(sc["duration"]),
        k=float(sc["k"]) if "k" in sc else None,
        pair_rate=float(sc["pair_rate"]) if "pair_rate" in sc else None,
        splitter_ratio=float(sc.get("splitter_ratio", 0.5)),
        detector_a=det_a,
        detector_b=det_b,
        tau0=float(sc.get("tau0", -0.98e-9)),
        seed=int(sc.get("seed", 0)),
    )


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageFailure(name, exc) from exc


def run_pipeline(config: dict, streams: tuple[TimeTagStream, TimeTagStream] | None = None) -> Report:
    """Execute the full analysis described by ``config``.

    ``config`` mirrors :func:`demo_config`.  The source is either
    ``{"sim": {...}}`` or ``{"tags": path, "channel_a": i, "channel_b": j}``;
    pre-loaded ``streams`` short-circuit the source stage (used by tests).
    """
    stages: dict = {}

    if streams is None:
        src = config.get("source", {})
        if "sim" in src:
            sim_cfg = _stage("simulate", _sim_from_config, src["sim"])
            a, b, _truth = _stage("simulate", simulate, sim_cfg)
        elif "tags" in src:
            from .tagio import read_tags

            loaded = _stage("read_tags", read_tags, src["tags"])
            ia = int(src.get("channel_a", 0))
            ib = int(src.get("channel_b", 1))
            a, b = loaded[ia], loaded[ib]
        else:
            raise StageFailure("source", ConfigInvalid("config.source needs 'sim' or 'tags'"))
    else:
        a, b = streams
    stages["source"] = {"n_a": len(a), "n_b": len(b), "duration": a.duration}

    cc = config.get("correlate", {})
    hist = _stage(
        "correlate",
        correlate_streams,
        a,
        b,
        bin_width=float(cc.get("bin_ps", 35)) * 1e-12,
        num_bins=int(cc.get("bins", 4000)),
        tau_center=float(cc.get("center_ps", 0)) * 1e-12,
    )
    hist = _stage("normalize", normalize, hist, config.get("normalization", "singles"))
    stages["correlate"] = {
        "num_bins": hist.num_bins,
        "bin_width_ps": hist.bin_width * 1e12,
        "total_counts": int(hist.counts.sum()),
    }

    comb, comb_fit = _stage("fit_comb", fit_comb, hist)
    stages["fit_comb"] = {
        "parameters": comb_fit.as_dict(),
        "sigmas": {n: float(s) for n, s in zip(comb_fit.names, comb_fit.sigmas())},
        "converged": comb_fit.converged,
        "iterations": comb_fit.iterations,
        "residual_norm": comb_fit.residual_norm,
    }

    cav_cfg = config.get("cavity", {})
    t_out = float(cav_cfg.get("t_out", 0.11))
    e_nl = float(cav_cfg.get("e_nl", 0.02))
    cavity = _stage("derive_cavity_rates", derive_cavity_rates, comb.omega_c, comb.tau_f, t_out, e_nl)
    stages["cavity"] = {
        "gamma1": cavity.gamma1,
        "gamma2": cavity.gamma2,
        "length": cavity.length,
        "eta_esc_from_gammas": cavity.eta_esc,
        "p_th_from_losses": cavity.p_th_from_losses,
    }

    if "rate_scan" in config:
        rs = config["rate_scan"]
        from .tagio import read_rate_csv

        points = _stage("fit_rate_linear", read_rate_csv, rs["csv"])
        k, sigma_k, rate_fit = _stage(
            "fit_rate_linear", fit_rate_linear, points, float(rs.get("eta", 1.0))
        )
        stages["fit_rate_linear"] = {"k": k, "sigma_k": sigma_k, "converged": rate_fit.converged}
    else:
        k = float(config["k"])
        sigma_k = float(config.get("sigma_k", 0.0))

    g2_zero, sigma_g2 = _stage("g2_at_zero", g2_at_zero, hist, "comb", comb)
    stages["g2_zero"] = {"value": g2_zero, "sigma": sigma_g2, "method": "comb"}

    ec = config.get("estimate", {})
    eta_esc = ec.get("eta_esc", "gammas")
    p_th = ec.get("p_th", "losses")
    cfg = EstimationConfig(
        formula_mode=str(ec.get("mode", "chain")),
        eta_esc_source=eta_esc if isinstance(eta_esc, str) else float(eta_esc),
        p_th_source=p_th if isinstance(p_th, str) else float(p_th),
        f=float(ec.get("freq_hz", 800e3)),
    )
    est = _stage("estimate_squeezing", estimate_squeezing, g2_zero, cavity, k, cfg)

    # fitted-parameter sigmas feed the Monte Carlo error bars
    s_tauf = comb_fit.sigma("tau_f")
    s_omega = comb_fit.sigma("omega_c")
    sigma_gamma1 = cavity.gamma1 * s_tauf / comb.tau_f
    sigma_gamma2 = math.hypot(s_omega, sigma_gamma1)
    inputs = UncertainInputs(
        g2_zero=g2_zero,
        gamma1=cavity.gamma1,
        gamma2=cavity.gamma2,
        length=cavity.length,
        e_nl=e_nl,
        k=k,
        f=cfg.f,
        sigma_g2_zero=sigma_g2,
        sigma_gamma1=sigma_gamma1,
        sigma_gamma2=sigma_gamma2,
        sigma_length=comb_fit.sigma("tau_f") * 299792458.0,
        sigma_k=sigma_k,
    )
    sigma_r, sigma_db = _stage(
        "propagate_uncertainty",
        propagate_uncertainty,
        inputs,
        cfg,
        n_samples=int(ec.get("mc_samples", 10_000)),
        seed=int(ec.get("seed", 0)),
    )
    est = est.with_uncertainty(sigma_r, sigma_db)
    stages["estimate"] = dict(est.inputs_echo)

    return Report(
        r=est.r,
        sigma_r=est.sigma_r,
        squeezing_db=est.squeezing_db,
        sigma_db=est.sigma_db,
        g2_zero=g2_zero,
        gamma1=cavity.gamma1,
        gamma2=cavity.gamma2,
        k=k,
        f=cfg.f,
        eta_esc=est.inputs_echo["eta_esc"],
        p_th=est.inputs_echo["p_th"],
        formula_mode=cfg.formula_mode,
        stages=stages,
    )
