"""CSR weight matrices: conversion, magnitude pruning, footprint, stretching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DTYPE, ConvShape, ShapeError


class CsrError(ValueError):
    pass


@dataclass
class CsrMatrix:
    """Row-compressed weight matrix, one row per filter.

    ``cols`` is C*R*S for an unstretched matrix and C*H_pad*W_pad once
    stretched.  ``kernel_cols`` keeps the logical C*R*S extent so sparsity is
    defined the same way in both modes; it is ``None`` only for stretched
    matrices loaded from disk without a kernel shape.
    """

    rows: int
    cols: int
    rowptr: np.ndarray  # int64, rows + 1
    colidx: np.ndarray  # int32, nnz
    value: np.ndarray  # float32, nnz
    stretched: bool = False
    h_pad: int = 0
    w_pad: int = 0
    kernel_cols: int | None = None

    def __post_init__(self):
        self.rowptr = np.ascontiguousarray(self.rowptr, dtype=np.int64)
        self.colidx = np.ascontiguousarray(self.colidx, dtype=np.int32)
        self.value = np.ascontiguousarray(self.value, dtype=DTYPE)
        if self.kernel_cols is None and not self.stretched:
            self.kernel_cols = self.cols

    @property
    def nnz(self) -> int:
        return int(self.value.shape[0])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.rowptr[i], self.rowptr[i + 1]
        return self.colidx[lo:hi], self.value[lo:hi]

    def validate(self) -> None:
        """Raise :class:`CsrError` naming the first violated invariant."""
        rp = self.rowptr
        if self.rows < 0 or self.cols < 0:
            raise CsrError("rows/cols must be non-negative")
        if rp.shape != (self.rows + 1,):
            raise CsrError(f"rowptr has {rp.shape[0]} entries, expected rows+1 = {self.rows + 1}")
        if self.colidx.shape[0] != self.value.shape[0]:
            raise CsrError("colidx and value lengths differ")
        if rp[0] != 0:
            raise CsrError("rowptr[0] must be 0")
        if np.any(np.diff(rp) < 0):
            i = int(np.argmax(np.diff(rp) < 0))
            raise CsrError(f"rowptr must be non-decreasing (rowptr[{i + 1}] < rowptr[{i}])")
        if rp[-1] != self.nnz:
            raise CsrError(f"rowptr[rows] = {rp[-1]} does not equal nnz = {self.nnz}")
        if self.nnz:
            if self.colidx.min() < 0 or self.colidx.max() >= self.cols:
                raise CsrError("colidx out of range [0, cols)")
            # strictly increasing within a row: every in-row step is positive
            step = np.diff(self.colidx.astype(np.int64))
            row_start = np.zeros(self.nnz, dtype=bool)
            row_start[rp[:-1][rp[:-1] < self.nnz]] = True
            if np.any(step[~row_start[1:]] <= 0):
                raise CsrError("colidx must be strictly increasing within each row")
            if np.any(self.value == 0):
                raise CsrError("stored values must be nonzero")
        if self.stretched and (self.h_pad < 1 or self.w_pad < 1):
            raise CsrError("stretched matrix needs positive h_pad/w_pad")

    def equals(self, other: "CsrMatrix") -> bool:
        """Bitwise equality of structure and payload."""
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and self.stretched == other.stretched
            and (not self.stretched or (self.h_pad, self.w_pad) == (other.h_pad, other.w_pad))
            and np.array_equal(self.rowptr, other.rowptr)
            and np.array_equal(self.colidx, other.colidx)
            and self.value.tobytes() == other.value.tobytes()
        )


def dense_to_csr(weights: np.ndarray) -> CsrMatrix:
    """Compress an (M, C, R, S) or (M, K) weight array, dropping exact zeros."""
    w = np.asarray(weights, dtype=DTYPE)
    rows = w.shape[0]
    mat = w.reshape(rows, -1)
    mask = mat != 0
    rowptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(mask.sum(axis=1), out=rowptr[1:])
    # nonzero() walks row-major, so columns come out ascending per row
    r_idx, c_idx = np.nonzero(mask)
    return CsrMatrix(rows, mat.shape[1], rowptr, c_idx, mat[r_idx, c_idx])


def csr_to_dense(csr: CsrMatrix) -> np.ndarray:
    if csr.stretched:
        raise CsrError("csr_to_dense needs an unstretched matrix")
    out = np.zeros((csr.rows, csr.cols), dtype=DTYPE)
    row_of = np.repeat(np.arange(csr.rows), np.diff(csr.rowptr))
    out[row_of, csr.colidx] = csr.value
    return out


def prune_by_magnitude(weights: np.ndarray, target_sparsity: float) -> np.ndarray:
    """Zero the ``ceil(target * size)`` smallest-magnitude entries.

    Achieved sparsity lands in ``[target, target + 1/size]``.  Ties at the
    cutoff go to the lower flat index first, so the result is a pure
    function of the input.
    """
    if not 0.0 <= target_sparsity < 1.0:
        raise ValueError(f"target sparsity must be in [0, 1), got {target_sparsity}")
    w = np.array(weights, dtype=DTYPE, copy=True)
    flat = w.reshape(-1)
    # the epsilon keeps exact products like 0.5 * 4 from rounding up
    k = int(np.ceil(target_sparsity * flat.size - 1e-9))
    if k == 0:
        return w
    order = np.argsort(np.abs(flat), kind="stable")
    flat[order[:k]] = 0
    return w


def sparsity(csr: CsrMatrix, kernel_cols: int | None = None) -> float:
    kc = kernel_cols if kernel_cols is not None else csr.kernel_cols
    if kc is None:
        raise CsrError("kernel_cols unknown for this stretched matrix; pass it explicitly")
    total = csr.rows * kc
    return 1.0 - csr.nnz / total


def csr_footprint_bytes(csr: CsrMatrix) -> int:
    """Storage under 4-byte value, colidx and rowptr entries."""
    return (2 * csr.nnz + csr.rows + 1) * 4


def stretch_weights(csr: CsrMatrix, shape: ConvShape) -> CsrMatrix:
    """Rewrite kernel-space column indices as offsets into the padded input.

    Kernel column ``(c*R + r)*S + s`` becomes ``(c*H_pad + r)*W_pad + s``.
    Row pointers and values are shared untouched.
    """
    if csr.stretched:
        raise CsrError("matrix is already stretched")
    if csr.cols != shape.kernel_cols:
        raise ShapeError(f"csr has {csr.cols} columns, shape needs C*R*S = {shape.kernel_cols}")
    if csr.rows != shape.m:
        raise ShapeError(f"csr has {csr.rows} rows, shape has M = {shape.m}")
    k = csr.colidx.astype(np.int64)
    s = k % shape.s
    r = (k // shape.s) % shape.r
    c = k // (shape.r * shape.s)
    new_col = (c * shape.h_pad + r) * shape.w_pad + s
    cols = shape.c * shape.h_pad * shape.w_pad
    if cols > np.iinfo(np.int32).max:
        raise ShapeError("padded input too large for 32-bit column indices")
    return CsrMatrix(
        csr.rows,
        cols,
        csr.rowptr.copy(),
        new_col.astype(np.int32),
        csr.value.copy(),
        stretched=True,
        h_pad=shape.h_pad,
        w_pad=shape.w_pad,
        kernel_cols=shape.kernel_cols,
    )
