"""Correlator: brute-force exactness, normalization, symmetry, baselines."""

import math

import numpy as np
import pytest

import sqzstat as sq
from sqzstat import kernels
from sqzstat.errors import EmptyStream, MissingTotals, NotNormalized, UnsortedInput

from conftest import K_CAL, matched_sim_config


def brute_force_counts(a, b, left_ps, width_ps, num_bins):
    """O(Na*Nb) oracle: enumerate every pair, floor-assign to half-open bins."""
    d = (b[None, :].astype(np.int64) - a[:, None].astype(np.int64)).ravel()
    span = width_ps * num_bins
    sel = (d >= left_ps) & (d < left_ps + span)
    return np.bincount((d[sel] - left_ps) // width_ps, minlength=num_bins)


def poisson_stream(rng, rate, duration, channel=0):
    n = rng.poisson(rate * duration)
    ts = np.sort(rng.choice(int(duration * 1e12), size=n, replace=False)).astype(np.int64)
    return sq.TimeTagStream(channel, ts, duration)


class TestExactness:
    def test_matches_brute_force_random_instances(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            na, nb = rng.integers(1, 2000, 2)
            span_ps = int(rng.integers(10**6, 10**9))
            a = np.unique(rng.integers(0, span_ps, na)).astype(np.int64)
            b = np.unique(rng.integers(0, span_ps, nb)).astype(np.int64)
            width = int(rng.integers(1, 200))
            bins = int(rng.integers(1, 500))
            center = int(rng.integers(-1000, 1000))
            left = center - (bins * width) // 2
            dur = span_ps / 1e12
            hist = sq.correlate(
                sq.TimeTagStream(0, a, dur), sq.TimeTagStream(1, b, dur),
                bin_width=width * 1e-12, num_bins=bins, tau_center=center * 1e-12,
            )
            assert np.array_equal(hist.counts, brute_force_counts(a, b, left, width, bins))

    def test_numpy_and_numba_kernels_agree(self):
        rng = np.random.default_rng(22)
        for _ in range(10):
            a = np.sort(rng.integers(0, 10**9, 5000)).astype(np.int64)
            b = np.sort(rng.integers(0, 10**9, 5000)).astype(np.int64)
            c_np = kernels.bin_pair_delays_numpy(a, b, -70000, 35, 4000)
            c_sel = kernels.bin_pair_delays(a, b, -70000, 35, 4000)
            assert np.array_equal(c_np, c_sel)
            if kernels.bin_pair_delays_numba is not None:
                c_nb = kernels.bin_pair_delays_numba(a, b, np.int64(-70000), np.int64(35), 4000)
                assert np.array_equal(c_np, c_nb)

    def test_sum_counts_equals_pairs_in_window(self):
        rng = np.random.default_rng(23)
        a = np.sort(rng.integers(0, 10**8, 1500)).astype(np.int64)
        b = np.sort(rng.integers(0, 10**8, 1500)).astype(np.int64)
        dur = 1e-4
        hist = sq.correlate(sq.TimeTagStream(0, a, dur), sq.TimeTagStream(1, b, dur))
        d = (b[None, :] - a[:, None]).ravel()
        in_window = np.sum((d >= -70000) & (d < 70000))
        assert hist.counts.sum() == in_window


class TestSymmetry:
    def test_bin_reversed_swap(self):
        # mirror symmetry of swapping the inputs, on an instance where no
        # delay lands exactly on a bin edge (edge delays shift one bin by
        # the half-open convention)
        rng = np.random.default_rng(24)
        width = 1000  # even; with even a, odd b every delay is odd: no edge hits
        a = 2 * np.sort(rng.choice(5 * 10**6, 800, replace=False)).astype(np.int64)
        b = 2 * np.sort(rng.choice(5 * 10**6, 800, replace=False)).astype(np.int64) + 1
        bins = 200
        left = -(bins * width) // 2
        d = (b[None, :] - a[:, None]).ravel()
        assert not np.any((d - left) % width == 0)
        dur = 1e-5
        h_ab = sq.correlate(sq.TimeTagStream(0, a, dur), sq.TimeTagStream(1, b, dur),
                            bin_width=width * 1e-12, num_bins=bins)
        h_ba = sq.correlate(sq.TimeTagStream(0, b, dur), sq.TimeTagStream(1, a, dur),
                            bin_width=width * 1e-12, num_bins=bins)
        assert np.array_equal(h_ab.counts, h_ba.counts[::-1])


class TestNormalize:
    def _uniform_hist(self):
        n_a = n_b = 1000
        t = 2.0
        w = 35e-12
        counts = np.full(100, int(round(n_a * n_b * w / t * 1e6)))  # scaled up
        return sq.CorrelationHistogram(
            bin_width=w, num_bins=100, tau_min=0.0, counts=counts,
            n_a=n_a * 1000, n_b=n_b, acquisition_time=t,
        )

    def test_accidental_level_gives_unity(self):
        # counts_i = n_a n_b w / T exactly  =>  g2 = 1
        n_a, n_b, t, w = 10**6, 2 * 10**6, 4.0, 50e-12
        c = n_a * n_b * w / t
        assert c == int(c)
        hist = sq.CorrelationHistogram(
            bin_width=w, num_bins=64, tau_min=0.0,
            counts=np.full(64, int(c)), n_a=n_a, n_b=n_b, acquisition_time=t,
        )
        out = sq.normalize(hist)
        assert np.allclose(out.g2, 1.0, rtol=1e-12)

    def test_linear_in_acquisition_time(self):
        hist = self._uniform_hist()
        doubled = sq.CorrelationHistogram(
            bin_width=hist.bin_width, num_bins=hist.num_bins, tau_min=0.0,
            counts=hist.counts, n_a=hist.n_a, n_b=hist.n_b,
            acquisition_time=2 * hist.acquisition_time,
        )
        g1 = sq.normalize(hist).g2
        g2 = sq.normalize(doubled).g2
        assert np.allclose(g2, 2 * g1, rtol=1e-12)

    def test_idempotent(self):
        hist = sq.normalize(self._uniform_hist())
        again = sq.normalize(hist)
        assert np.array_equal(hist.g2, again.g2)

    def test_missing_totals(self):
        hist = sq.CorrelationHistogram(
            bin_width=35e-12, num_bins=8, tau_min=0.0, counts=np.ones(8, np.int64)
        )
        with pytest.raises(MissingTotals):
            sq.normalize(hist)

    def test_tail_method(self):
        hist = self._uniform_hist()
        out = sq.normalize(hist, method="tail")
        assert np.allclose(out.g2, 1.0, rtol=1e-12)

    def test_simulated_baseline_near_unity(self, sim30):
        # bins far outside the comb envelope sit at the accidental level
        hist = sim30["hist"]
        tails = np.concatenate([hist.g2[:200], hist.g2[-200:]])
        assert tails.mean() == pytest.approx(1.0, abs=0.02)


class TestUncorrelatedBaseline:
    def test_independent_poisson_unity(self):
        rng = np.random.default_rng(25)
        a = poisson_stream(rng, 1e5, 2.0, 0)
        b = poisson_stream(rng, 1e5, 2.0, 1)
        hist = sq.normalize(sq.correlate(a, b, bin_width=2500e-12, num_bins=400))
        sigma = hist.g2 / np.sqrt(np.maximum(hist.counts, 1))
        assert np.all(np.abs(hist.g2 - 1.0) < 5 * sigma)
        assert hist.g2.mean() == pytest.approx(1.0, abs=0.01)


class TestG2AtZero:
    def test_flat_histogram_peak_bin(self):
        counts = np.full(100, 10_000, np.int64)
        hist = sq.CorrelationHistogram(
            bin_width=35e-12, num_bins=100, tau_min=0.0, counts=counts,
            n_a=10**6, n_b=10**6, acquisition_time=35e-12 * 1e8,
        )
        hist = sq.normalize(hist)
        value, sigma = sq.g2_at_zero(hist, method="peak")
        assert value == pytest.approx(1.0, rel=1e-6)
        assert sigma == pytest.approx(value / math.sqrt(10_000), rel=1e-6)

    def test_exact_comb_histogram_combfit(self, comb_ref):
        # histogram generated exactly from the comb curve recovers the
        # peak value n1*(n2+1) = 17.024
        tau = (np.arange(4000) - 2000 + 0.5) * 35e-12
        g2 = sq.comb_model_eval(comb_ref, tau)
        counts = np.rint(g2 * 1e4).astype(np.int64)
        hist = sq.CorrelationHistogram(
            bin_width=35e-12, num_bins=4000, tau_min=float(tau[0]),
            counts=counts, g2=counts * 1e-4,
        )
        value, sigma = sq.g2_at_zero(hist, method="comb")
        assert value == pytest.approx(16.0 * 1.064, rel=2e-3)
        assert sigma > 0

    def test_requires_normalized(self):
        hist = sq.CorrelationHistogram(
            bin_width=35e-12, num_bins=8, tau_min=0.0, counts=np.ones(8, np.int64)
        )
        with pytest.raises(NotNormalized):
            sq.g2_at_zero(hist, method="peak")


class TestErrors:
    def test_empty_stream(self):
        a = sq.TimeTagStream(0, np.array([], np.int64), 1.0)
        b = sq.TimeTagStream(1, np.array([100], np.int64), 1.0)
        with pytest.raises(EmptyStream):
            sq.correlate(a, b)

    def test_unsorted_input(self):
        ts = np.array([50, 10, 80], np.int64)
        b = sq.TimeTagStream(1, np.array([10, 20], np.int64), 1.0)
        a = object.__new__(sq.TimeTagStream)
        object.__setattr__(a, "channel_id", 0)
        object.__setattr__(a, "timestamps", ts)
        object.__setattr__(a, "duration", 1.0)
        object.__setattr__(a, "truth", None)
        with pytest.raises(UnsortedInput):
            sq.correlate(a, b)


class TestEfficiencyIndependence:
    def test_thinning_leaves_g2_unchanged(self, cavity):
        # thin both channels by p = 0.5 twenty times: the per-bin mean of
        # the normalized g2 must agree with the unthinned histogram
        cfg = matched_sim_config(cavity, 30e-6, 0.5, seed=77, eta_arm=1.0)
        a, b, _ = sq.simulate(cfg)
        window = dict(bin_width=200e-12, num_bins=300, tau_center=-0.98e-9)
        base = sq.normalize(sq.correlate(a, b, **window))
        rng = np.random.default_rng(99)
        trials = []
        for _ in range(20):
            ta = a.timestamps[rng.random(len(a)) < 0.5]
            tb = b.timestamps[rng.random(len(b)) < 0.5]
            h = sq.normalize(sq.correlate(
                sq.TimeTagStream(0, ta, a.duration), sq.TimeTagStream(1, tb, b.duration),
                **window,
            ))
            trials.append(h.g2)
        trials = np.array(trials)
        mean = trials.mean(axis=0)
        sem = trials.std(axis=0, ddof=1) / math.sqrt(len(trials))
        base_sigma = base.g2 / np.sqrt(np.maximum(base.counts, 1))
        limit = 5 * np.hypot(sem, base_sigma)
        assert np.all(np.abs(mean - base.g2) <= np.maximum(limit, 1e-12))
