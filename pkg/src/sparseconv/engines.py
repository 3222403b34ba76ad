"""The four convolution paths and the engine selector.

All paths take NCHW float32 input and return a :class:`ConvResult`.  The
direct dense path is the reference loop nest the others are checked against.
"""

from __future__ import annotations

import enum
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .csr import CsrError, CsrMatrix, dense_to_csr, sparsity as csr_sparsity, stretch_weights
from .tensor import DTYPE, ConvShape, ShapeError, pad_input

DEFAULT_AUTO_THRESHOLD = 0.6


class EngineKind(enum.Enum):
    DENSE_DIRECT = "dense_direct"
    LOWERED_DENSE = "lowered_dense"
    LOWERED_SPARSE = "lowered_sparse"
    SPARSE_DIRECT = "sparse_direct"
    AUTO = "auto"

    @classmethod
    def parse(cls, text: str) -> "EngineKind":
        key = text.strip().lower().replace("-", "_")
        aliases = {"sgemm": "lowered_dense", "im2col": "lowered_dense",
                   "csrmm": "lowered_sparse", "sconv": "sparse_direct"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown engine {text!r} (expected one of {names})") from None


CONCRETE_ENGINES = (
    EngineKind.DENSE_DIRECT,
    EngineKind.LOWERED_DENSE,
    EngineKind.LOWERED_SPARSE,
    EngineKind.SPARSE_DIRECT,
)


@dataclass
class ConvResult:
    output: np.ndarray
    macs: int
    elapsed: float

    @property
    def flops(self) -> int:
        return 2 * self.macs


def _check_input(x: np.ndarray, dims, what="input"):
    if x.shape != tuple(dims):
        raise ShapeError(f"{what} has dims {x.shape}, expected {tuple(dims)}")
    if x.dtype != DTYPE:
        raise ShapeError(f"{what} must be float32, got {x.dtype}")


def _alloc_out(shape: ConvShape) -> np.ndarray:
    return np.zeros(shape.output_dims, dtype=DTYPE)


def conv_dense_direct(inp: np.ndarray, weights: np.ndarray, shape: ConvShape) -> ConvResult:
    _check_input(inp, shape.input_dims)
    _check_input(weights, shape.weight_dims, "weights")
    out = _alloc_out(shape)
    t0 = time.perf_counter()
    macs = kernels.dense_direct(np.ascontiguousarray(inp), np.ascontiguousarray(weights),
                                out, shape.stride, shape.pad)
    return ConvResult(out, int(macs), time.perf_counter() - t0)


def im2col(inp: np.ndarray, shape: ConvShape, sample: int = 0, out: np.ndarray | None = None) -> np.ndarray:
    """Lower one batch sample to a (C*R*S) x (E*F) matrix.

    Row ``(c*R + r)*S + s``, column ``h*F + w`` holds the input tap
    ``(c, h*stride + r - pad, w*stride + s - pad)``, zero where that falls
    in the padding.
    """
    _check_input(inp, shape.input_dims)
    if out is None:
        out = np.empty((shape.kernel_cols, shape.e * shape.f), dtype=DTYPE)
    kernels.im2col_sample(inp, sample, shape.r, shape.s, shape.stride, shape.pad,
                          shape.e, shape.f, out)
    return out


def gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=DTYPE)
    kernels.gemm(np.ascontiguousarray(a, DTYPE), np.ascontiguousarray(b, DTYPE), out)
    return out


def csrmm(a: CsrMatrix, b: np.ndarray) -> np.ndarray:
    if a.stretched:
        raise CsrError("csrmm needs an unstretched matrix")
    if b.ndim != 2 or a.cols != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.rows}x{a.cols} CSR by {b.shape}")
    out = np.zeros((a.rows, b.shape[1]), dtype=DTYPE)
    kernels.csrmm(a.rowptr, a.colidx, a.value, np.ascontiguousarray(b, DTYPE), out)
    return out


def conv_lowered_dense(inp: np.ndarray, weights: np.ndarray, shape: ConvShape) -> ConvResult:
    _check_input(inp, shape.input_dims)
    _check_input(weights, shape.weight_dims, "weights")
    out = _alloc_out(shape)
    wmat = np.ascontiguousarray(weights.reshape(shape.m, shape.kernel_cols))
    cols = np.empty((shape.kernel_cols, shape.e * shape.f), dtype=DTYPE)
    macs = 0
    t0 = time.perf_counter()
    for n in range(shape.n):
        kernels.im2col_sample(inp, n, shape.r, shape.s, shape.stride, shape.pad,
                              shape.e, shape.f, cols)
        # out[n] is a contiguous M x (E*F) view
        macs += kernels.gemm(wmat, cols, out[n].reshape(shape.m, -1))
    return ConvResult(out, int(macs), time.perf_counter() - t0)


def conv_lowered_sparse(inp: np.ndarray, csr: CsrMatrix, shape: ConvShape) -> ConvResult:
    _check_input(inp, shape.input_dims)
    if csr.stretched:
        raise CsrError("lowered sparse path needs an unstretched matrix")
    if (csr.rows, csr.cols) != (shape.m, shape.kernel_cols):
        raise ShapeError(f"csr is {csr.rows}x{csr.cols}, shape needs {shape.m}x{shape.kernel_cols}")
    out = _alloc_out(shape)
    cols = np.empty((shape.kernel_cols, shape.e * shape.f), dtype=DTYPE)
    macs = 0
    t0 = time.perf_counter()
    for n in range(shape.n):
        kernels.im2col_sample(inp, n, shape.r, shape.s, shape.stride, shape.pad,
                              shape.e, shape.f, cols)
        macs += kernels.csrmm(csr.rowptr, csr.colidx, csr.value, cols,
                              out[n].reshape(shape.m, -1))
    return ConvResult(out, int(macs), time.perf_counter() - t0)


def _check_sparse_direct(padded: np.ndarray, csr: CsrMatrix, shape: ConvShape):
    if not csr.stretched:
        raise CsrError("direct sparse path needs stretched weights (see stretch_weights)")
    if (csr.h_pad, csr.w_pad) != (shape.h_pad, shape.w_pad) or csr.rows != shape.m:
        raise ShapeError(
            f"weights stretched for {csr.rows} rows, {csr.h_pad}x{csr.w_pad}; "
            f"shape needs {shape.m} rows, {shape.h_pad}x{shape.w_pad}"
        )
    if padded.shape != shape.padded_dims:
        raise ShapeError(f"input has dims {padded.shape}, expected padded dims {shape.padded_dims}")
    if padded.dtype != DTYPE:
        raise ShapeError(f"input must be float32, got {padded.dtype}")


def conv_sparse_direct(padded: np.ndarray, csr: CsrMatrix, shape: ConvShape) -> ConvResult:
    """Direct sparse convolution on an already padded input."""
    return conv_sparse_direct_parallel(padded, csr, shape, workers=1)


def _chunks(total: int, workers: int) -> list[tuple[int, int]]:
    # two chunks per worker so uneven row lengths still balance
    size = max(1, -(-total // (workers * 2)))
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


_pools: dict[int, ThreadPoolExecutor] = {}
_pool_lock = threading.Lock()


def _pool(workers: int) -> ThreadPoolExecutor:
    with _pool_lock:
        if workers not in _pools:
            _pools[workers] = ThreadPoolExecutor(max_workers=workers,
                                                 thread_name_prefix=f"sconv{workers}")
        return _pools[workers]


def conv_sparse_direct_parallel(padded: np.ndarray, csr: CsrMatrix, shape: ConvShape,
                                workers: int = 1) -> ConvResult:
    """Direct sparse convolution with (n, m) output planes spread over threads.

    Each plane has exactly one writer and is accumulated in ascending CSR
    order, so the output does not depend on ``workers``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    _check_sparse_direct(padded, csr, shape)
    out = _alloc_out(shape)
    flat_in = np.ascontiguousarray(padded).reshape(shape.n, -1)
    pairs = shape.n * shape.m
    args = (flat_in, csr.rowptr, csr.colidx, csr.value, out, shape.stride, shape.w_pad)
    t0 = time.perf_counter()
    if workers == 1:
        macs = kernels.sparse_direct_pairs(*args, 0, pairs)
    else:
        pool = _pool(workers)
        futs = [pool.submit(kernels.sparse_direct_pairs, *args, lo, hi)
                for lo, hi in _chunks(pairs, workers)]
        macs = sum(f.result() for f in futs)
    return ConvResult(out, int(macs), time.perf_counter() - t0)


def select_engine(shape: ConvShape, sparsity: float,
                  threshold: float = DEFAULT_AUTO_THRESHOLD) -> EngineKind:
    """Direct sparse at or above ``threshold`` sparsity, lowered dense below.

    ``shape`` is accepted so a finer rule can key on layer geometry; the
    current rule only looks at sparsity.
    """
    return EngineKind.SPARSE_DIRECT if sparsity >= threshold else EngineKind.LOWERED_DENSE


@dataclass
class PreparedLayer:
    """Engine-ready operands for one layer; built once, run many times."""

    shape: ConvShape
    inp: np.ndarray
    weights: np.ndarray
    csr: CsrMatrix
    stretched: CsrMatrix

    @classmethod
    def build(cls, inp: np.ndarray, weights: np.ndarray, shape: ConvShape) -> "PreparedLayer":
        csr = dense_to_csr(weights)
        return cls(shape, inp, weights, csr, stretch_weights(csr, shape))

    @property
    def sparsity(self) -> float:
        return csr_sparsity(self.csr)

    def resolve(self, kind: EngineKind, threshold: float = DEFAULT_AUTO_THRESHOLD) -> EngineKind:
        if kind is EngineKind.AUTO:
            return select_engine(self.shape, self.sparsity, threshold)
        return kind

    def run(self, kind: EngineKind, workers: int = 1) -> ConvResult:
        kind = self.resolve(kind)
        if kind is EngineKind.DENSE_DIRECT:
            return conv_dense_direct(self.inp, self.weights, self.shape)
        if kind is EngineKind.LOWERED_DENSE:
            return conv_lowered_dense(self.inp, self.weights, self.shape)
        if kind is EngineKind.LOWERED_SPARSE:
            return conv_lowered_sparse(self.inp, self.csr, self.shape)
        # padding is part of the direct sparse path's run time
        t0 = time.perf_counter()
        padded = pad_input(self.inp, self.shape.pad)
        res = conv_sparse_direct_parallel(padded, self.stretched, self.shape, workers)
        res.elapsed = time.perf_counter() - t0
        return res
