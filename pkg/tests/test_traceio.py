import os

import numpy as np
import pytest

from pulsehd.errors import CorruptFileError
from pulsehd.synth import TraceBuffer
from pulsehd.traceio import MAGIC, atomic_open, payload_sha256, read_trace, write_trace


@pytest.fixture
def buffer():
    rng = np.random.default_rng(3)
    chans = {"diff_ac": rng.standard_normal(1000), "ünïcode": rng.standard_normal(1000).astype(np.float32)}
    return TraceBuffer(1e10, chans)


def test_round_trip_bit_exact(tmp_path, buffer):
    path = tmp_path / "t.hdtr"
    digest = write_trace(path, buffer)
    back = read_trace(path)
    assert back.sample_rate == 1e10 and list(back.channels) == list(buffer.channels)
    for name, x in buffer.channels.items():
        assert np.array_equal(back.channels[name], np.asarray(x, np.float32).astype(np.float64))
    assert digest == payload_sha256(back) == payload_sha256(buffer)
    assert path.read_bytes()[:4] == MAGIC


def test_rewrite_is_byte_identical(tmp_path, buffer):
    a, b = tmp_path / "a", tmp_path / "b"
    write_trace(a, buffer)
    write_trace(b, read_trace(a))
    assert a.read_bytes() == b.read_bytes()


def _corrupt(path, offset, value=None):
    raw = bytearray(path.read_bytes())
    raw[offset] = (raw[offset] ^ 0xFF) if value is None else value
    path.write_bytes(bytes(raw))


def test_crc_detects_payload_flip(tmp_path, buffer):
    path = tmp_path / "t.hdtr"
    write_trace(path, buffer)
    _corrupt(path, len(path.read_bytes()) - 100)
    with pytest.raises(CorruptFileError, match="CRC"):
        read_trace(path)


def test_bad_magic_and_version(tmp_path, buffer):
    path = tmp_path / "t.hdtr"
    write_trace(path, buffer)
    _corrupt(path, 0)
    with pytest.raises(CorruptFileError, match="magic"):
        read_trace(path)
    write_trace(path, buffer)
    _corrupt(path, 4, 9)
    with pytest.raises(CorruptFileError, match="version"):
        read_trace(path)


@pytest.mark.parametrize("keep", [3, 30, -5])
def test_truncation(tmp_path, buffer, keep):
    path = tmp_path / "t.hdtr"
    write_trace(path, buffer)
    raw = path.read_bytes()
    path.write_bytes(raw[:keep])
    with pytest.raises(CorruptFileError):
        read_trace(path)


def test_atomic_write_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out.bin"
    target.write_bytes(b"old")
    with pytest.raises(RuntimeError):
        with atomic_open(target) as fh:
            fh.write(b"partial")
            raise RuntimeError("boom")
    assert target.read_bytes() == b"old"
    assert os.listdir(tmp_path) == ["out.bin"]
