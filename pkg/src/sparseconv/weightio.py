"""Binary CSR weight files.

Little-endian layout::

    magic    4 bytes  b"ESCN"
    version  u32      1
    flags    u32      bit 0 set = stretched
    [h_pad   u32, w_pad u32]          only when stretched
    rows     u32
    cols     u32
    nnz      u64
    rowptr   (rows + 1) x u64
    colidx   nnz x u32
    value    nnz x f32
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .csr import CsrError, CsrMatrix

MAGIC = b"ESCN"
VERSION = 1
FLAG_STRETCHED = 1


class WeightFileError(ValueError):
    pass


def encode_weights(csr: CsrMatrix) -> bytes:
    csr.validate()
    flags = FLAG_STRETCHED if csr.stretched else 0
    parts = [MAGIC, struct.pack("<II", VERSION, flags)]
    if csr.stretched:
        parts.append(struct.pack("<II", csr.h_pad, csr.w_pad))
    parts.append(struct.pack("<IIQ", csr.rows, csr.cols, csr.nnz))
    parts.append(csr.rowptr.astype("<u8").tobytes())
    parts.append(csr.colidx.astype("<u4").tobytes())
    parts.append(csr.value.astype("<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int, what: str) -> bytes:
        if self.pos + nbytes > len(self.buf):
            raise WeightFileError(
                f"truncated payload: need {nbytes} bytes for {what} at offset {self.pos}, "
                f"file has {len(self.buf) - self.pos} left"
            )
        out = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def array(self, count: int, dtype: str, what: str) -> np.ndarray:
        size = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(count * size, what), dtype=dtype)


def decode_weights(buf: bytes, kernel_cols: int | None = None) -> CsrMatrix:
    rd = _Reader(buf)
    magic = rd.take(4, "magic")
    if magic != MAGIC:
        raise WeightFileError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, flags = struct.unpack("<II", rd.take(8, "header"))
    if version != VERSION:
        raise WeightFileError(f"unsupported version {version}, expected {VERSION}")
    stretched = bool(flags & FLAG_STRETCHED)
    h_pad = w_pad = 0
    if stretched:
        h_pad, w_pad = struct.unpack("<II", rd.take(8, "padded dims"))
    rows, cols, nnz = struct.unpack("<IIQ", rd.take(16, "header"))
    rowptr = rd.array(rows + 1, "<u8", "rowptr")
    colidx = rd.array(nnz, "<u4", "colidx")
    value = rd.array(nnz, "<f4", "value")
    if rd.pos != len(buf):
        raise WeightFileError(f"{len(buf) - rd.pos} trailing bytes after payload")
    if np.any(rowptr > np.iinfo(np.int64).max) or np.any(colidx > np.iinfo(np.int32).max):
        raise WeightFileError("index out of supported range")
    csr = CsrMatrix(rows, cols, rowptr.astype(np.int64), colidx.astype(np.int32),
                    value.astype(np.float32), stretched=stretched, h_pad=h_pad, w_pad=w_pad,
                    kernel_cols=kernel_cols if stretched else None)
    try:
        csr.validate()
    except CsrError as exc:
        raise WeightFileError(f"invalid matrix: {exc}") from None
    return csr


def write_weights(csr: CsrMatrix, path) -> None:
    Path(path).write_bytes(encode_weights(csr))


def read_weights(path, kernel_cols: int | None = None) -> CsrMatrix:
    return decode_weights(Path(path).read_bytes(), kernel_cols)
