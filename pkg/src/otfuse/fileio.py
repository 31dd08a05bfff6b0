"""Binary feature tensors and PGM/PBM mask export."""

import struct

import numpy as np

from .exceptions import DataError, ShapeError

FTN_MAGIC = b"FTN1"
_HEADER = struct.Struct("<4sIII")


def write_ftn(path, tensor):
    """Write an ``(H, W, C)`` tensor as little-endian float32, channel-last."""
    arr = np.asarray(tensor)
    if arr.ndim != 3:
        raise ShapeError(f"FTN1 tensors are (H, W, C), got shape {arr.shape}")
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FTN_MAGIC, h, w, c))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_ftn(path):
    """Read an FTN1 file into a float64 ``(H, W, C)`` array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated FTN1 header")
    magic, h, w, c = _HEADER.unpack_from(data)
    if magic != FTN_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * h * w * c
    if len(data) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(data)}")
    body = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return body.reshape(h, w, c).astype(np.float64)


def write_pgm16(path, soft):
    """Soft mask in [0, 1] as a 16-bit binary PGM."""
    s = np.asarray(soft, dtype=np.float64)
    if s.ndim != 2:
        raise ShapeError("PGM export expects a 2-D map")
    h, w = s.shape
    values = np.rint(np.clip(s, 0.0, 1.0) * 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(values.tobytes())


def read_pgm16(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _pnm_header(data, b"P5", 3)
    w, h, maxval = tokens
    values = np.frombuffer(data, dtype=">u2", count=w * h, offset=offset)
    return values.reshape(h, w).astype(np.float64) / maxval


def write_pbm(path, binary):
    """Binary mask as a packed P4 PBM (1 = set)."""
    b = np.asarray(binary, dtype=bool)
    if b.ndim != 2:
        raise ShapeError("PBM export expects a 2-D map")
    h, w = b.shape
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode("ascii"))
        fh.write(np.packbits(b, axis=1).tobytes())


def read_pbm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    (w, h), offset = _pnm_header(data, b"P4", 2)
    row_bytes = (w + 7) // 8
    packed = np.frombuffer(data, dtype=np.uint8, count=row_bytes * h, offset=offset)
    return np.unpackbits(packed.reshape(h, row_bytes), axis=1)[:, :w].astype(bool)


def _pnm_header(data, magic, n_values):
    if not data.startswith(magic):
        raise DataError(f"expected {magic.decode()} image")
    pos = len(magic)
    values = []
    while len(values) < n_values:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise DataError("malformed image header")
        values.append(int(data[start:pos]))
    return values, pos + 1
