import struct

import numpy as np
import pytest

from heraldsim import click_sim as cs
from heraldsim import fileio
from heraldsim import homodyne_sim as hs
from heraldsim.errors import FormatError, TruncatedFile


@pytest.fixture(scope="module")
def trace_set(mode49, ref_state):
    s = hs.generate_trace_set(ref_state, mode49, 13000, seed=3)
    # stored as float32 on disk
    return hs.TraceSet(s.samples.astype(np.float32), s.qualifier_delays.astype(np.float32),
                       False, 1.0, {"seed": 3})


def test_trace_round_trip_bit_identical(tmp_path, trace_set):
    path = tmp_path / "sig.htr"
    fileio.write_trace_set(path, trace_set, b"\x01" * 32)
    back = fileio.read_trace_set(path)
    assert back.samples.dtype == np.float32
    assert np.array_equal(back.samples, trace_set.samples)
    assert np.array_equal(back.qualifier_delays, trace_set.qualifier_delays.astype(float))
    assert back.vacuum is False and back.dt == 1.0
    assert back.meta["seed"] == 3
    assert back.meta["config_hash"] == "01" * 32
    expected = fileio.HEADER.size + 4 * 13000 * 501
    assert path.stat().st_size == expected


def _small(tmp_path):
    s = hs.TraceSet(np.arange(20, dtype=np.float32).reshape(4, 5), np.zeros(4), True)
    path = tmp_path / "small.htr"
    fileio.write_trace_set(path, s)
    return path


def test_corrupt_magic(tmp_path):
    path = _small(tmp_path)
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="magic"):
        fileio.read_trace_set(path)


def test_bad_version(tmp_path):
    path = _small(tmp_path)
    data = bytearray(path.read_bytes())
    data[4:6] = struct.pack("<H", 99)
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="version"):
        fileio.read_trace_set(path)


def test_header_count_exceeds_payload(tmp_path):
    path = _small(tmp_path)
    data = bytearray(path.read_bytes())
    fields = list(fileio.HEADER.unpack_from(data))
    fields[5] = 1000  # window count
    data[:fileio.HEADER.size] = fileio.HEADER.pack(*fields)
    path.write_bytes(bytes(data))
    with pytest.raises(TruncatedFile):
        fileio.read_trace_set(path)


def test_short_header_and_trailing_bytes(tmp_path):
    path = _small(tmp_path)
    good = path.read_bytes()
    path.write_bytes(good[:10])
    with pytest.raises(TruncatedFile):
        fileio.read_trace_set(path)
    path.write_bytes(good + b"\0\0\0\0")
    with pytest.raises(FormatError):
        fileio.read_trace_set(path)


def test_clicks_csv_round_trip(tmp_path):
    clicks = cs.Clicks.from_records([(0, 10.25), (5, 499.999), (7, 0.0)], n_pulses=8)
    path = tmp_path / "clicks.csv"
    fileio.write_clicks_csv(path, clicks)
    assert path.read_text().splitlines()[0] == "pulse_index,delay_ns"
    back = fileio.read_clicks_csv(path, n_pulses=8)
    assert list(back) == list(clicks)


def test_histogram_csv_header(tmp_path):
    clicks = cs.Clicks.from_records([(0, 10.0), (1, 450.0)], n_pulses=2)
    h = cs.histogram_clicks(clicks, 50.0, 500.0)
    path = tmp_path / "h.csv"
    fileio.write_histogram_csv(path, h)
    lines = path.read_text().splitlines()
    assert lines[0] == "bin_start_ns,count,normalized"
    assert len(lines) == 11


def test_mode_csv_round_trip(tmp_path, mode49):
    path = tmp_path / "mode.csv"
    fileio.write_mode_csv(path, mode49)
    back = fileio.read_mode_csv(path)
    assert np.allclose(back.values, mode49.values, atol=1e-15)
    assert back.dt == 1.0
