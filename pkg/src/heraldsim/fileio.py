"""Binary trace files and CSV exports.

Trace file layout (little-endian)::

    header   HEADER struct, see below
    samples  count * window_length float32, window after window
    delays   count float32 qualifier delays (ns)
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .click_sim import Clicks, DelayHistogram
from .errors import FormatError, TruncatedFile
from .homodyne_sim import ModeFunction, TraceSet

MAGIC = b"HTRS"
VERSION = 1
# magic, version, reserved, window length, dt (ns), window count, vacuum flag,
# seed, sha256 of the generating config
HEADER = struct.Struct("<4sHHIdQ?7xq32s")


def write_trace_set(path, trace_set: TraceSet, config_hash: bytes = b"") -> None:
    seed = int(trace_set.meta.get("seed", 0))
    header = HEADER.pack(MAGIC, VERSION, 0, trace_set.window_length, float(trace_set.dt),
                         len(trace_set), bool(trace_set.vacuum), seed,
                         config_hash[:32].ljust(32, b"\0"))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(trace_set.samples, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(trace_set.qualifier_delays, dtype="<f4").tobytes())


def read_trace_set(path) -> TraceSet:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise TruncatedFile(f"{path}: {len(data)} bytes is shorter than the trace header")
    magic, version, _, length, dt, count, vacuum, seed, digest = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    n_samples = count * length
    expected = HEADER.size + 4 * (n_samples + count)
    if len(data) < expected:
        raise TruncatedFile(f"{path}: header declares {count} windows of {length} samples "
                            f"({expected} bytes) but the file has {len(data)} bytes")
    if len(data) > expected:
        raise FormatError(f"{path}: {len(data) - expected} unexpected trailing bytes")
    body = np.frombuffer(data, dtype="<f4", offset=HEADER.size, count=n_samples + count)
    samples = body[:n_samples].reshape(count, length)
    delays = body[n_samples:].astype(float)
    meta = {"seed": seed, "config_hash": digest.rstrip(b"\0").hex()}
    return TraceSet(samples, delays, bool(vacuum), dt, meta)


def write_clicks_csv(path, clicks: Clicks) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pulse_index", "delay_ns"])
        for i, d in zip(clicks.pulse_index.tolist(), clicks.delay.tolist()):
            w.writerow([i, repr(d)])


def read_clicks_csv(path, n_pulses: int = 0, rep_rate: float = 50e3) -> Clicks:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return Clicks(np.array([int(r["pulse_index"]) for r in rows], dtype=np.int64),
                  np.array([float(r["delay_ns"]) for r in rows]), n_pulses, rep_rate)


def write_histogram_csv(path, hist: DelayHistogram) -> None:
    norm = hist.normalized if hist.normalized is not None else np.full(hist.counts.size, np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_start_ns", "count", "normalized"])
        for row in zip(hist.bin_starts.tolist(), hist.counts.tolist(), norm.tolist()):
            w.writerow(row)


def write_columns_csv(path, columns: dict) -> None:
    """Write equal-length arrays as named CSV columns."""
    names = list(columns)
    arrays = [np.asarray(columns[n]).tolist() for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        w.writerows(zip(*arrays))


def read_mode_csv(path) -> ModeFunction:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t_ns"]) for r in rows])
    psi = np.array([float(r["psi"]) for r in rows])
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    return ModeFunction.from_unnormalized(psi, dt)


def write_mode_csv(path, mode: ModeFunction) -> None:
    write_columns_csv(path, {"t_ns": mode.times, "psi": mode.values})
