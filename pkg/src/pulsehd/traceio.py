"""HDTR binary trace files.

Layout (little-endian throughout)::

    magic        4 bytes  b"HDTR"
    version      u32
    sample_rate  f64      Hz
    n_samples    u64      per channel
    n_channels   u8
    names        n_channels x (u16 byte length, UTF-8 bytes)
    payload      n_channels x n_samples f32, channel-major, volts
    crc32        u32      CRC-32 of the payload bytes

Samples are stored as 32-bit floats; all arithmetic stays in 64-bit.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
import zlib
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, ShapeError
from .synth import TraceBuffer

MAGIC = b"HDTR"
VERSION = 1
_HEADER = struct.Struct("<4sIdQB")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


@contextmanager
def atomic_open(path, mode="wb"):
    """Write to a temp file next to ``path`` and rename over it on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _header_bytes(buffer: TraceBuffer):
    if not buffer.channels:
        raise ShapeError("trace has no channels")
    if len(buffer.channels) > 255:
        raise ShapeError("at most 255 channels fit in a trace file")
    parts = [_HEADER.pack(MAGIC, VERSION, float(buffer.sample_rate), buffer.n_samples, len(buffer.channels))]
    for name in buffer.channels:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ShapeError(f"channel name too long: {name[:20]}...")
        parts.append(_U16.pack(len(raw)) + raw)
    return b"".join(parts)


def write_trace(path, buffer: TraceBuffer) -> str:
    """Write ``buffer`` atomically; returns the SHA-256 hex digest of the payload."""
    sha = hashlib.sha256()
    crc = 0
    with atomic_open(path) as fh:
        fh.write(_header_bytes(buffer))
        for samples in buffer.channels.values():
            raw = np.asarray(samples, dtype="<f4").tobytes()
            crc = zlib.crc32(raw, crc)
            sha.update(raw)
            fh.write(raw)
        fh.write(_U32.pack(crc & 0xFFFFFFFF))
    return sha.hexdigest()


def payload_sha256(buffer: TraceBuffer) -> str:
    sha = hashlib.sha256()
    for samples in buffer.channels.values():
        sha.update(np.asarray(samples, dtype="<f4").tobytes())
    return sha.hexdigest()


def read_trace(path) -> TraceBuffer:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CorruptFileError(f"{path}: file too short for a trace header")
    magic, version, rate, n_samples, n_channels = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CorruptFileError(f"{path}: unsupported version {version}")
    pos = _HEADER.size
    names = []
    for _ in range(n_channels):
        if pos + 2 > len(data):
            raise CorruptFileError(f"{path}: truncated channel table")
        (n,) = _U16.unpack_from(data, pos)
        pos += 2
        try:
            names.append(data[pos : pos + n].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise CorruptFileError(f"{path}: channel name is not UTF-8") from exc
        pos += n
    payload_len = 4 * n_samples * n_channels
    if len(data) != pos + payload_len + 4:
        raise CorruptFileError(
            f"{path}: declared {n_channels} x {n_samples} samples but file holds {len(data) - pos - 4} payload bytes"
        )
    payload = memoryview(data)[pos : pos + payload_len]
    (crc,) = _U32.unpack_from(data, pos + payload_len)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CorruptFileError(f"{path}: CRC mismatch, file is corrupt")
    arr = np.frombuffer(payload, dtype="<f4").reshape(n_channels, n_samples)
    channels = {name: arr[i].astype(np.float64) for i, name in enumerate(names)}
    return TraceBuffer(rate, channels)
