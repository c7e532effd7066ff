"""Hot inner-loop kernels with a numba fast path and a pure-numpy fallback.

Both implementations of each kernel are exact integer algorithms and return
bit-identical results.  Selection happens once at import time:

* default: numba ``@njit`` kernels (if numba imports cleanly);
* ``SQZSTAT_NO_NUMBA=1`` in the environment forces the numpy fallback.

The module always exposes both variants (``*_numba`` may be ``None``) so the
benchmark in ``benchmarks/`` can time them side by side.
"""

import os

import numpy as np

_ENV_FLAG = "SQZSTAT_NO_NUMBA"

USE_NUMBA = os.environ.get(_ENV_FLAG, "0").lower() not in ("1", "true", "yes")
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - env without numba
        USE_NUMBA = False


def backend() -> str:
    """Name of the kernel backend selected at import time."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# pair-delay binning (the HBT correlator core)
#
# counts[i] = #{(ta, tb): tb - tа in [left + i*width, left + (i+1)*width)}
# with integer picosecond timestamps, half-open bins, floor assignment.
# ---------------------------------------------------------------------------

def bin_pair_delays_numpy(a, b, left, width, num_bins, chunk_matches=4_000_000):
    """Vectorized sweep: searchsorted window bounds, ragged gather, bincount.

    Processed in chunks so the expanded index arrays stay bounded in memory.
    """
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    left = np.int64(left)
    width = np.int64(width)
    span = width * np.int64(num_bins)
    counts = np.zeros(num_bins, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return counts

    lo = np.searchsorted(b, a + left, side="left")
    hi = np.searchsorted(b, a + left + span, side="left")
    m = hi - lo

    start = 0
    n = a.size
    cum = np.cumsum(m)
    while start < n:
        # widen the slice until it holds ~chunk_matches matches
        base = cum[start - 1] if start > 0 else 0
        stop = int(np.searchsorted(cum, base + chunk_matches, side="left")) + 1
        stop = min(stop, n)
        mc = m[start:stop]
        total = int(mc.sum())
        if total:
            reps = np.repeat(np.arange(start, stop), mc)
            offsets = np.arange(total) - np.repeat(np.concatenate(([0], np.cumsum(mc)[:-1])), mc)
            idx = lo[reps] + offsets
            delays = b[idx] - a[reps] - left
            counts += np.bincount(delays // width, minlength=num_bins)
        start = stop
    return counts


def _bin_pair_delays_loop(a, b, left, width, num_bins):
    counts = np.zeros(num_bins, dtype=np.int64)
    nb = b.shape[0]
    right = left + width * num_bins
    lo = 0
    hi = 0
    for i in range(a.shape[0]):
        tlo = a[i] + left
        thi = a[i] + right
        while lo < nb and b[lo] < tlo:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < nb and b[hi] < thi:
            hi += 1
        for j in range(lo, hi):
            counts[(b[j] - tlo) // width] += 1
    return counts


# ---------------------------------------------------------------------------
# non-paralyzable dead-time pruning
#
# Keeps an event iff it arrives >= dead_ps after the last kept event.
# Callers pass dead_ps >= 1 (one picosecond tick is the digitizer floor),
# which also enforces strictly increasing output timestamps.
# ---------------------------------------------------------------------------

def dead_time_prune_numpy(t, dead_ps):
    """Sequential scan in plain python; slow path, exact."""
    keep = np.zeros(t.shape[0], dtype=bool)
    if t.shape[0] == 0:
        return keep
    last = t[0]
    keep[0] = True
    for i in range(1, t.shape[0]):
        if t[i] - last >= dead_ps:
            keep[i] = True
            last = t[i]
    return keep


def _dead_time_prune_loop(t, dead_ps):
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    if t.shape[0] == 0:
        return keep
    last = t[0]
    keep[0] = True
    for i in range(1, t.shape[0]):
        if t[i] - last >= dead_ps:
            keep[i] = True
            last = t[i]
    return keep


if USE_NUMBA:
    bin_pair_delays_numba = njit(cache=True)(_bin_pair_delays_loop)
    dead_time_prune_numba = njit(cache=True)(_dead_time_prune_loop)

    def bin_pair_delays(a, b, left, width, num_bins):
        a = np.ascontiguousarray(a, dtype=np.int64)
        b = np.ascontiguousarray(b, dtype=np.int64)
        return bin_pair_delays_numba(a, b, np.int64(left), np.int64(width), num_bins)

    def dead_time_prune(t, dead_ps):
        return dead_time_prune_numba(np.ascontiguousarray(t, dtype=np.int64), np.int64(dead_ps))
else:  # pure-numpy fallback
    bin_pair_delays_numba = None
    dead_time_prune_numba = None

    def bin_pair_delays(a, b, left, width, num_bins):
        return bin_pair_delays_numpy(a, b, left, width, num_bins)

    def dead_time_prune(t, dead_ps):
        return dead_time_prune_numpy(np.ascontiguousarray(t, dtype=np.int64), int(dead_ps))
