"""Monte Carlo generator of paired photon time-tag streams.

Generative model (deterministic given the seed):

1. Pair emission times form a homogeneous Poisson process of rate R = k*P
   (or an explicit rate) over [0, duration].
2. Each pair carries an integer mode offset n drawn from the two-sided
   geometric law Pr(n) ~ q^|n| with q = exp(-omega_c * tau_f), giving a
   relative delay n*tau_f between the two photons.  This places the
   coincidence mass on the comb teeth with the correct decaying envelope.
3. Each photon is routed independently to arm A (probability
   ``splitter_ratio``) or arm B; same-arm pairs are kept and merged, as a
   real beam splitter would.
4. Each detector applies, in order: Bernoulli thinning by its efficiency,
   additive Laplace timing jitter, dark-count injection, re-sort,
   non-paralyzable dead-time pruning.

Jitter is Laplace rather than Gaussian: the arrival-time difference of two
equal Laplace jitters has the cusp-shaped density (1 + a|t|) exp(-a|t|)
that the comb model assumes for its peaks, with resolution tau_r equal to
the per-detector FWHM.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid
from .opo import CavityParams

PS_PER_S = 1_000_000_000_000


@dataclass(frozen=True)
class DetectorModel:
    """Single-photon detector imperfections.

    efficiency   detection probability per photon, (0, 1] (0 allowed: blind)
    dark_rate    dark counts per second, >= 0
    dead_time    non-paralyzable dead time, s, >= 0
    jitter_fwhm  FWHM of the Laplace timing jitter, s, >= 0
    """

    efficiency: float = 1.0
    dark_rate: float = 0.0
    dead_time: float = 0.0
    jitter_fwhm: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigInvalid(f"efficiency must be in [0, 1], got {self.efficiency}")
        if self.dark_rate < 0:
            raise ConfigInvalid(f"dark_rate must be >= 0, got {self.dark_rate}")
        if self.dead_time < 0:
            raise ConfigInvalid(f"dead_time must be >= 0, got {self.dead_time}")
        if self.jitter_fwhm < 0:
            raise ConfigInvalid(f"jitter_fwhm must be >= 0, got {self.jitter_fwhm}")

    @property
    def jitter_scale(self) -> float:
        """Laplace scale b with FWHM = 2 b ln 2."""
        return self.jitter_fwhm / (2.0 * math.log(2.0))


@dataclass(frozen=True)
class TruthRecord:
    """Ground truth a simulation run was generated from."""

    pair_rate: float        # R, pairs/s
    q: float                # inter-mode weight exp(-omega_c tau_f)
    omega_c: float          # angular s^-1
    tau_f: float            # s
    tau0: float             # electronic delay applied to channel B, s
    g2_zero: float          # expected comb-peak g2 value (inf if jitter-free)
    seed: int

    def to_dict(self) -> dict:
        return {
            "pair_rate": self.pair_rate,
            "q": self.q,
            "omega_c": self.omega_c,
            "tau_f": self.tau_f,
            "tau0": self.tau0,
            "g2_zero": self.g2_zero,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TruthRecord":
        return cls(
            pair_rate=float(d["pair_rate"]),
            q=float(d["q"]),
            omega_c=float(d["omega_c"]),
            tau_f=float(d["tau_f"]),
            tau0=float(d["tau0"]),
            g2_zero=float(d["g2_zero"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class TimeTagStream:
    """Ordered photon detection timestamps for one channel.

    timestamps are integer picoseconds, strictly increasing, all within
    [0, duration].
    """

    channel_id: int
    timestamps: np.ndarray
    duration: float
    truth: TruthRecord | None = None

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "timestamps", ts)
        if ts.size:
            if np.any(np.diff(ts) <= 0):
                raise ConfigInvalid(f"channel {self.channel_id}: timestamps not strictly increasing")
            if ts[0] < 0 or ts[-1] > round(self.duration * PS_PER_S):
                raise ConfigInvalid(f"channel {self.channel_id}: timestamps outside [0, duration]")

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def rate(self) -> float:
        """Mean singles rate, s^-1."""
        return self.timestamps.size / self.duration


@dataclass(frozen=True)
class SimConfig:
    """Full configuration of one simulation run."""

    cavity: CavityParams
    pump_power: float
    duration: float
    k: float | None = None            # pair rate per watt (rate = k * pump_power)
    pair_rate: float | None = None    # explicit pair rate, overrides k
    splitter_ratio: float = 0.5
    detector_a: DetectorModel = field(default_factory=DetectorModel)
    detector_b: DetectorModel = field(default_factory=DetectorModel)
    tau0: float = -0.98e-9            # electronic delay on channel B, s
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigInvalid(f"duration must be > 0, got {self.duration}")
        if not 0.0 < self.splitter_ratio < 1.0:
            raise ConfigInvalid(f"splitter_ratio must be in (0, 1), got {self.splitter_ratio}")
        if (self.k is None) == (self.pair_rate is None):
            raise ConfigInvalid("give exactly one of k, pair_rate")
        if self.k is not None and self.pump_power <= 0:
            raise ConfigInvalid(f"pump_power must be > 0 with k, got {self.pump_power}")
        r = self.resolved_pair_rate
        if r < 0:
            raise ConfigInvalid(f"pair rate must be >= 0, got {r}")
        for det, name, s in ((self.detector_a, "a", self.splitter_ratio),
                             (self.detector_b, "b", 1.0 - self.splitter_ratio)):
            if det.dead_time > 0 and 2.0 * r * s * det.efficiency > 1.0 / det.dead_time:
                warnings.warn(
                    f"arm {name}: rate exceeds 1/dead_time; dead-time losses will be heavy",
                    stacklevel=2,
                )

    @property
    def resolved_pair_rate(self) -> float:
        if self.pair_rate is not None:
            return self.pair_rate
        return self.k * self.pump_power


def expected_g2_peak(
    pair_rate: float,
    q: float,
    tau_r_a: float,
    tau_r_b: float,
    tau_f: float,
    n_terms: int = 50,
) -> float:
    """Expected comb-peak g2 value of the generative model.

    Cross-pair delays carry density sum_n P(n) * D(tau - n tau_f) with
    P(n) = (1-q)/(1+q) q^|n| and D the difference of the two detector
    jitters.  The peak g2 is 1 + density(0) / (2 R).  For equal jitters
    D(0) = a/4 with a = 2 ln2 / tau_r; unequal jitters combine as
    D(0) = 1 / (2 (b_a + b_b)).  Returns inf when both jitters are zero
    (delta peak, bin-limited in any histogram).
    """
    b_a = tau_r_a / (2.0 * math.log(2.0))
    b_b = tau_r_b / (2.0 * math.log(2.0))
    if b_a + b_b == 0.0:
        return math.inf
    dens0 = 1.0 / (2.0 * (b_a + b_b))
    # neighbor teeth leak a little mass onto the central peak
    a_eff = 1.0 / ((b_a + b_b) / 2.0)
    n = np.arange(1, n_terms + 1)
    neighbor = 2.0 * np.sum(q**n * (1.0 + a_eff * n * tau_f) * np.exp(-a_eff * n * tau_f))
    p0 = (1.0 - q) / (1.0 + q)
    return 1.0 + p0 * dens0 * (1.0 + neighbor) / (2.0 * pair_rate)


def resolution_for_target_g2(
    target_g2: float, pair_rate: float, q: float, tau_f: float
) -> float:
    """Equal-arm jitter FWHM that makes the expected comb peak hit target_g2.

    Solves expected_g2_peak(...) == target_g2 for tau_r (both arms equal).
    Used to configure runs whose measured g2(0) should reproduce the
    pump-model value 2 + gamma1/(2kP).
    """
    if target_g2 <= 1.0:
        raise ConfigInvalid(f"target g2 must exceed the accidental level 1, got {target_g2}")
    from scipy.optimize import brentq

    # peak height is monotone decreasing in tau_r; bracket and bisect
    return brentq(
        lambda tr: expected_g2_peak(pair_rate, q, tr, tr, tau_f) - target_g2,
        1e-16,
        1e-3,
        xtol=1e-18,
        rtol=1e-12,
    )


def apply_detector(ideal: TimeTagStream, det: DetectorModel, seed) -> TimeTagStream:
    """Push an ideal stream through a detector model.

    Order is part of the contract: thinning, jitter, dark-count injection,
    re-sort, dead-time pruning.  Events jittered outside [0, duration] are
    discarded.  Output timestamps are strictly increasing; the effective
    dead time is at least one picosecond tick.
    """
    tags = _apply_detector_ps(ideal.timestamps, det, seed, ideal.duration)
    return TimeTagStream(ideal.channel_id, tags, ideal.duration, ideal.truth)


def _apply_detector_ps(ideal: np.ndarray, det: DetectorModel, seed, duration: float) -> np.ndarray:
    from .kernels import dead_time_prune

    rng = np.random.default_rng(seed)
    t = np.ascontiguousarray(ideal, dtype=np.int64)

    if det.efficiency < 1.0:
        t = t[rng.random(t.size) < det.efficiency]

    if det.jitter_fwhm > 0 and t.size:
        jit = rng.laplace(0.0, det.jitter_scale * PS_PER_S, t.size)
        t = t + np.rint(jit).astype(np.int64)

    dur_ps = np.int64(round(duration * PS_PER_S))
    if det.dark_rate > 0:
        n_dark = rng.poisson(det.dark_rate * duration)
        dark = rng.integers(0, dur_ps + 1, n_dark, dtype=np.int64)
        t = np.concatenate([t, dark])

    t = np.sort(t, kind="stable")
    t = t[(t >= 0) & (t <= dur_ps)]

    dead_ps = max(int(round(det.dead_time * PS_PER_S)), 1)
    keep = dead_time_prune(t, dead_ps)
    return t[keep]


def draw_mode_offsets(rng, q: float, n: int) -> np.ndarray:
    """Two-sided geometric mode offsets, Pr(m) = (1-q)/(1+q) * q^|m|.

    The difference of two iid geometric draws has exactly this law.
    """
    return rng.geometric(1.0 - q, n).astype(np.int64) - rng.geometric(1.0 - q, n).astype(
        np.int64
    )


def simulate(config: SimConfig) -> tuple[TimeTagStream, TimeTagStream, TruthRecord]:
    """Generate one two-channel run; bit-identical for identical configs."""
    rate = config.resolved_pair_rate
    duration = config.duration
    cav = config.cavity
    q = math.exp(-cav.gamma_total * cav.tau_f)

    seed_pairs, seed_a, seed_b = np.random.SeedSequence(config.seed).spawn(3)
    rng = np.random.default_rng(seed_pairs)

    n_pairs = rng.poisson(rate * duration)
    t1 = np.sort(rng.random(n_pairs)) * duration
    offs = draw_mode_offsets(rng, q, n_pairs)
    t2 = t1 + offs * cav.tau_f

    to_a1 = rng.random(n_pairs) < config.splitter_ratio
    to_a2 = rng.random(n_pairs) < config.splitter_ratio

    def _ps(x):
        return np.rint(x * PS_PER_S).astype(np.int64)

    ideal_a = np.sort(np.concatenate([_ps(t1[to_a1]), _ps(t2[to_a2])]))
    tau0_ps = np.int64(round(config.tau0 * PS_PER_S))
    ideal_b = np.sort(np.concatenate([_ps(t1[~to_a1]), _ps(t2[~to_a2])])) + tau0_ps

    tags_a = _apply_detector_ps(ideal_a, config.detector_a, seed_a, duration)
    tags_b = _apply_detector_ps(ideal_b, config.detector_b, seed_b, duration)

    truth = TruthRecord(
        pair_rate=rate,
        q=q,
        omega_c=cav.gamma_total,
        tau_f=cav.tau_f,
        tau0=config.tau0,
        g2_zero=expected_g2_peak(
            rate, q, config.detector_a.jitter_fwhm, config.detector_b.jitter_fwhm, cav.tau_f
        ),
        seed=config.seed,
    )
    stream_a = TimeTagStream(0, tags_a, duration, truth)
    stream_b = TimeTagStream(1, tags_b, duration, truth)
    return stream_a, stream_b, truth
