"""Bit-exact file formats: SQZT tag files, histogram CSV, fit/report JSON.

SQZT binary layout (all little-endian, no padding):

    offset 0   magic            4 bytes  b"SQZT"
    offset 4   version          u16      (= 1)
    offset 6   channel_count    u8
    offset 7   flags            u8       bit 0: truth record appended
    offset 8   duration_ps      u64
    offset 16  records          9 bytes each: timestamp_ps u64 + channel u8,
                                merged across channels in time order
    trailer    (only if flags bit 0)
               json_len u32, truth JSON utf-8, json_len u32 again
               (the trailing copy lets a reader locate the trailer from EOF)

Histogram CSV: header ``tau_ps,counts,g2``; one row per bin; the g2 field
is empty before normalization.  Bin centers are exact multiples of half a
picosecond, so the text round-trips byte-for-byte.
"""

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from .correlate import CorrelationHistogram
from .errors import (
    BadMagic,
    IoFailure,
    TruncatedRecord,
    UnsortedChannel,
    UnsupportedVersion,
)
from .fits import RatePoint
from .lm import FitResult
from .simulate import PS_PER_S, TimeTagStream, TruthRecord

MAGIC = b"SQZT"
VERSION = 1
_HEADER = struct.Struct("<4sHBBQ")
RECORD_SIZE = 9
_CSV_TAG_HEADER = "timestamp_ps,channel"


# ---------------------------------------------------------------------------
# tag files
# ---------------------------------------------------------------------------

def write_tags(streams, path, truth: TruthRecord | None = None) -> None:
    """Write streams to an SQZT file (records merged in time order)."""
    streams = list(streams)
    for s in streams:
        if np.any(np.diff(s.timestamps) < 0):
            raise UnsortedChannel(f"channel {s.channel_id} is not sorted")
    duration_ps = max(round(s.duration * PS_PER_S) for s in streams)

    ts = np.concatenate([s.timestamps for s in streams]) if streams else np.empty(0, np.int64)
    ch = np.concatenate(
        [np.full(len(s), s.channel_id, np.uint8) for s in streams]
    ) if streams else np.empty(0, np.uint8)
    order = np.lexsort((ch, ts))
    rec = np.empty(ts.size, dtype=np.dtype([("t", "<u8"), ("c", "u1")], align=False))
    rec["t"] = ts[order].astype(np.uint64)
    rec["c"] = ch[order]

    flags = 1 if truth is not None else 0
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, len(streams), flags, duration_ps))
            fh.write(rec.tobytes())
            if truth is not None:
                blob = json.dumps(truth.to_dict(), sort_keys=True).encode("utf-8")
                fh.write(struct.pack("<I", len(blob)))
                fh.write(blob)
                fh.write(struct.pack("<I", len(blob)))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_tags(path) -> list[TimeTagStream]:
    """Read an SQZT file (or the CSV fallback) into per-channel streams."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if data[:4] != MAGIC:
        head = data[: len(_CSV_TAG_HEADER) + 2].decode("utf-8", errors="replace")
        if head.strip().splitlines() and head.strip().splitlines()[0].strip() == _CSV_TAG_HEADER:
            return _read_tags_csv(data)
        raise BadMagic(f"{path}: expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise TruncatedRecord(f"{path}: shorter than the header")
    magic, version, channel_count, flags, duration_ps = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version} not supported")

    end = len(data)
    truth = None
    if flags & 1:
        if end < _HEADER.size + 8:
            raise TruncatedRecord(f"{path}: trailer missing")
        (json_len,) = struct.unpack_from("<I", data, end - 4)
        start = end - 4 - json_len - 4
        if start < _HEADER.size:
            raise TruncatedRecord(f"{path}: trailer length inconsistent")
        (json_len2,) = struct.unpack_from("<I", data, start)
        if json_len2 != json_len:
            raise TruncatedRecord(f"{path}: trailer length fields disagree")
        truth = TruthRecord.from_dict(
            json.loads(data[start + 4 : start + 4 + json_len].decode("utf-8"))
        )
        end = start

    body = data[_HEADER.size : end]
    if len(body) % RECORD_SIZE:
        raise TruncatedRecord(f"{path}: {len(body)} record bytes not a multiple of {RECORD_SIZE}")
    rec = np.frombuffer(body, dtype=np.dtype([("t", "<u8"), ("c", "u1")], align=False))
    ts = rec["t"].astype(np.int64)
    ch = rec["c"]
    if ts.size and ts.max() > duration_ps:
        raise TruncatedRecord(f"{path}: timestamp beyond duration_ps")

    duration = duration_ps / PS_PER_S
    streams = []
    for c in range(channel_count):
        t = ts[ch == c]
        if np.any(np.diff(t) <= 0):
            raise UnsortedChannel(f"{path}: channel {c} not strictly increasing")
        streams.append(TimeTagStream(c, t, duration, truth))
    return streams


def _read_tags_csv(data: bytes) -> list[TimeTagStream]:
    rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
    body = rows[1:]
    ts = np.array([int(r[0]) for r in body], dtype=np.int64)
    ch = np.array([int(r[1]) for r in body], dtype=np.int64)
    channels = sorted(set(ch.tolist())) if ts.size else [0]
    duration = (ts.max() / PS_PER_S) if ts.size else 0.0
    streams = []
    for c in channels:
        t = np.sort(ts[ch == c])
        if np.any(np.diff(t) <= 0):
            raise UnsortedChannel(f"CSV channel {c} has duplicate timestamps")
        streams.append(TimeTagStream(c, t, duration))
    return streams


# ---------------------------------------------------------------------------
# histogram CSV
# ---------------------------------------------------------------------------

def _format_float(x: float) -> str:
    return format(x, ".17g")


def write_histogram_csv(hist: CorrelationHistogram, path) -> None:
    """Persist a histogram as ``tau_ps,counts,g2`` rows."""
    centers_ps = (hist.tau_min + hist.bin_width * np.arange(hist.num_bins)) * PS_PER_S
    # bin centers are multiples of half a picosecond; quantize for stability
    centers_ps = np.round(centers_ps * 2.0) / 2.0
    try:
        with open(path, "w", newline="") as fh:
            fh.write("tau_ps,counts,g2\n")
            for i in range(hist.num_bins):
                g2 = "" if hist.g2 is None else _format_float(float(hist.g2[i]))
                fh.write(f"{_format_float(float(centers_ps[i]))},{int(hist.counts[i])},{g2}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_histogram_csv(path) -> CorrelationHistogram:
    """Read a histogram CSV; singles totals are not part of the format."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["tau_ps", "counts", "g2"]:
        raise BadMagic(f"{path}: not a histogram CSV")
    body = rows[1:]
    if len(body) < 1:
        raise TruncatedRecord(f"{path}: no bins")
    tau_ps = np.array([float(r[0]) for r in body])
    counts = np.array([int(r[1]) for r in body], dtype=np.int64)
    g2_fields = [r[2] for r in body]
    g2 = None if all(f == "" for f in g2_fields) else np.array([float(f) for f in g2_fields])
    width = (tau_ps[1] - tau_ps[0]) / PS_PER_S if len(body) > 1 else 35e-12
    return CorrelationHistogram(
        bin_width=width,
        num_bins=len(body),
        tau_min=tau_ps[0] / PS_PER_S,
        counts=counts,
        g2=g2,
    )


# ---------------------------------------------------------------------------
# rate-scan CSV (pump power in mW, detected rate and sigma in s^-1)
# ---------------------------------------------------------------------------

def read_rate_csv(path) -> list[RatePoint]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["P_mW", "R_meas", "sigma"]:
        raise BadMagic(f"{path}: expected header P_mW,R_meas,sigma")
    return [
        RatePoint(pump_power=float(r[0]) * 1e-3, measured_rate=float(r[1]), sigma=float(r[2]))
        for r in rows[1:]
    ]


def write_rate_csv(points, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write("P_mW,R_meas,sigma\n")
            for pt in points:
                fh.write(
                    f"{_format_float(pt.pump_power * 1e3)},"
                    f"{_format_float(pt.measured_rate)},{_format_float(pt.sigma)}\n"
                )
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# fit reports
# ---------------------------------------------------------------------------

def fit_to_dict(fit: FitResult, extras: dict | None = None) -> dict:
    d = {
        "parameters": fit.as_dict(),
        "sigmas": {n: float(s) for n, s in zip(fit.names, fit.sigmas())},
        "covariance": fit.covariance.tolist(),
        "residual_norm": fit.residual_norm,
        "iterations": fit.iterations,
        "converged": fit.converged,
    }
    if extras:
        d.update(extras)
    return d


def fit_report_text(fit: FitResult, units: dict | None = None) -> str:
    """One line per parameter: name, value, sigma, unit."""
    units = units or {}
    lines = []
    for name, sigma in zip(fit.names, fit.sigmas()):
        lines.append(
            f"{name} {_format_float(fit.value(name))} {_format_float(float(sigma))} "
            f"{units.get(name, '-')}"
        )
    lines.append(f"residual_norm {_format_float(fit.residual_norm)}")
    lines.append(f"iterations {fit.iterations}")
    lines.append(f"converged {str(fit.converged).lower()}")
    return "\n".join(lines) + "\n"


def write_json(obj: dict, path) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
