"""Compiled inner loops.

Every kernel accumulates into a float32 output in a fixed order and returns
the number of multiply-accumulates it executed, counted in the innermost
loop.  No kernel uses fastmath, so results are reproducible bit for bit.
"""

import numba
from numba import uint64
import numpy as np

_jit = numba.njit(cache=True, nogil=True)


@_jit
def dense_direct(inp, weight, out, stride, pad):
    # loop nest n, m, c, h, w, r, s; out-of-bounds taps are skipped
    N, C, H, W = inp.shape
    M, _, R, S = weight.shape
    E, F = out.shape[2], out.shape[3]
    macs = 0
    for n in range(N):
        for m in range(M):
            for c in range(C):
                for h in range(E):
                    for w in range(F):
                        for r in range(R):
                            y = h * stride + r - pad
                            if y < 0 or y >= H:
                                continue
                            for s in range(S):
                                x = w * stride + s - pad
                                if x < 0 or x >= W:
                                    continue
                                out[n, m, h, w] += inp[n, c, y, x] * weight[m, c, r, s]
                                macs += 1
    return macs


@_jit
def im2col_sample(inp, sample, R, S, stride, pad, E, F, cols):
    C, H, W = inp.shape[1], inp.shape[2], inp.shape[3]
    for c in range(C):
        for r in range(R):
            for s in range(S):
                row = (c * R + r) * S + s
                for h in range(E):
                    y = h * stride + r - pad
                    for w in range(F):
                        x = w * stride + s - pad
                        if 0 <= y < H and 0 <= x < W:
                            cols[row, h * F + w] = inp[sample, c, y, x]
                        else:
                            cols[row, h * F + w] = 0.0


@_jit
def gemm(a, b, out):
    # i, k, j order: each out[i, j] still sums over k ascending
    M, K = a.shape
    N = b.shape[1]
    macs = 0
    for i in range(M):
        for k in range(K):
            aik = a[i, k]
            for j in range(N):
                out[i, j] += aik * b[k, j]
            macs += N
    return macs


@_jit
def csrmm(rowptr, colidx, value, b, out):
    # four nonzeros per pass over the output row; the adds stay in CSR order
    N = b.shape[1]
    macs = 0
    for i in range(rowptr.shape[0] - 1):
        orow = out[i]
        j = rowptr[i]
        end = rowptr[i + 1]
        while j + 4 <= end:
            b0, b1, b2, b3 = b[colidx[j]], b[colidx[j + 1]], b[colidx[j + 2]], b[colidx[j + 3]]
            v0, v1, v2, v3 = value[j], value[j + 1], value[j + 2], value[j + 3]
            for col in range(N):
                orow[col] = (((orow[col] + v0 * b0[col]) + v1 * b1[col])
                             + v2 * b2[col]) + v3 * b3[col]
            j += 4
        while j < end:
            bk = b[colidx[j]]
            v = value[j]
            for col in range(N):
                orow[col] += v * bk[col]
            j += 1
        macs += (end - rowptr[i]) * N
    return macs


@_jit
def sparse_direct_pairs(inp, rowptr, colidx, value, out, stride, w_pad, lo, hi):
    """Direct sparse convolution over flat (n, m) pairs ``lo .. hi-1``.

    ``inp`` is the padded input viewed as (N, C*H_pad*W_pad); ``out`` is
    (N, M, E, F).  Each pair owns its own output plane.  Nonzeros are applied
    four per pass over an output row, in CSR order, so every output element
    sees the same sequence of adds as a one-at-a-time loop.
    """
    # unsigned offsets: lets LLVM drop negative-index wraparound and vectorize
    M, E, F = out.shape[1], out.shape[2], out.shape[3]
    row_step = stride * w_pad
    ustride = uint64(stride)
    macs = 0
    for p in range(lo, hi):
        n = p // M
        m = p % M
        src = inp[n]
        dst = out[n, m]
        j = rowptr[m]
        end = rowptr[m + 1]
        while j + 4 <= end:
            o0, o1 = uint64(colidx[j]), uint64(colidx[j + 1])
            o2, o3 = uint64(colidx[j + 2]), uint64(colidx[j + 3])
            v0, v1, v2, v3 = value[j], value[j + 1], value[j + 2], value[j + 3]
            for h in range(E):
                hb = uint64(h * row_step)
                orow = dst[h]
                for w in range(F):
                    i = hb + uint64(w) * ustride
                    orow[w] = (((orow[w] + v0 * src[o0 + i]) + v1 * src[o1 + i])
                               + v2 * src[o2 + i]) + v3 * src[o3 + i]
            j += 4
        while j < end:
            off = uint64(colidx[j])
            val = value[j]
            for h in range(E):
                base = off + uint64(h * row_step)
                orow = dst[h]
                for w in range(F):
                    orow[w] += val * src[base + uint64(w) * ustride]
            j += 1
        macs += (end - rowptr[m]) * E * F
    return macs


def warmup() -> None:
    """Trigger compilation of every kernel on tiny inputs."""
    f32 = np.float32
    x = np.ones((1, 1, 2, 2), f32)
    wt = np.ones((1, 1, 1, 1), f32)
    o = np.zeros((1, 1, 2, 2), f32)
    dense_direct(x, wt, o, 1, 0)
    cols = np.zeros((1, 4), f32)
    im2col_sample(x, 0, 1, 1, 1, 0, 2, 2, cols)
    gemm(np.ones((1, 1), f32), cols, np.zeros((1, 4), f32))
    rp = np.array([0, 1], np.int64)
    ci = np.array([0], np.int32)
    v = np.ones(1, f32)
    csrmm(rp, ci, v, cols, np.zeros((1, 4), f32))
    sparse_direct_pairs(x.reshape(1, 4), rp, ci, v, o, 1, 2, 0, 1)
